use serde::{Deserialize, Serialize};

/// Planar point in kilometres.
pub type Point = [f64; 2];

/// Default sampling interval of a taxi trace, in seconds.
pub const DEFAULT_INTERVAL_S: f64 = 15.0;

/// Fixed-cadence sequence of planar points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<Point>,
    #[serde(default = "default_interval")]
    pub interval_s: f64,
}

fn default_interval() -> f64 {
    DEFAULT_INTERVAL_S
}

impl Trajectory {
    pub fn new(points: Vec<Point>) -> Self {
        Self {
            points,
            interval_s: DEFAULT_INTERVAL_S,
        }
    }

    pub fn with_interval(points: Vec<Point>, interval_s: f64) -> Self {
        Self { points, interval_s }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p[0].is_finite() && p[1].is_finite())
    }
}

impl From<Vec<Point>> for Trajectory {
    fn from(points: Vec<Point>) -> Self {
        Self::new(points)
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
