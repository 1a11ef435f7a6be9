use crate::error::{Error, Result};
use crate::trajectory::{Point, Trajectory};

pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Per-step speed and turning cosine, indexed by point (0-based).
///
/// `speed_kmh[i]` covers the segment ending at point `i` (absent for `i = 0`).
/// `cosine[i]` compares the segments ending at `i` and `i - 1` (absent for
/// `i < 2` or when either segment has zero length).
#[derive(Clone, Debug, PartialEq)]
pub struct Kinematics {
    pub speed_kmh: Vec<Option<f64>>,
    pub cosine: Vec<Option<f64>>,
}

fn delta(a: Point, b: Point) -> [f64; 2] {
    [b[0] - a[0], b[1] - a[1]]
}

/// Cosine between two displacement vectors; `None` if either is zero.
pub fn cosine(u: [f64; 2], v: [f64; 2]) -> Option<f64> {
    let nu = u[0].hypot(u[1]);
    let nv = v[0].hypot(v[1]);
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    Some(((u[0] * v[0] + u[1] * v[1]) / (nu * nv)).clamp(-1.0, 1.0))
}

pub fn kinematics(traj: &Trajectory) -> Result<Kinematics> {
    let pts = &traj.points;
    if pts.len() < 2 {
        return Err(Error::Input(format!(
            "kinematics needs at least 2 points, got {}",
            pts.len()
        )));
    }
    let per_hour = SECONDS_PER_HOUR / traj.interval_s;
    let mut speed_kmh = vec![None; pts.len()];
    let mut cos = vec![None; pts.len()];
    for i in 1..pts.len() {
        let d = delta(pts[i - 1], pts[i]);
        speed_kmh[i] = Some(d[0].hypot(d[1]) * per_hour);
        if i >= 2 {
            cos[i] = cosine(d, delta(pts[i - 2], pts[i - 1]));
        }
    }
    Ok(Kinematics {
        speed_kmh,
        cosine: cos,
    })
}
