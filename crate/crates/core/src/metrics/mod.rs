//! Evaluation metrics: paired distance error, trajectory features and the
//! kernel two-sample discrepancy between feature sets.

mod features;
mod mmd;

pub use features::{extract_features, FeatureKind, FeatureReport, FeatureSet, GridSpec};
pub use mmd::{histogram, median_bandwidth, mmd, mmd_with, Bandwidth, Histogram};

use crate::data::{haversine_km, ProjectionSpec};
use crate::error::{Error, Result};
use crate::trajectory::{distance, Point, Trajectory};

fn paired_mean(real: &[Trajectory], recon: &[Trajectory], dist: impl Fn(Point, Point) -> f64) -> Result<f64> {
    if real.len() != recon.len() {
        return Err(Error::Input(format!("{} real trajectories paired with {} reconstructions", real.len(), recon.len())));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, (a, b)) in real.iter().zip(recon).enumerate() {
        if a.len() != b.len() {
            return Err(Error::Input(format!("pair {i} has lengths {} and {}", a.len(), b.len())));
        }
        for (&p, &q) in a.points.iter().zip(&b.points) {
            sum += dist(p, q);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Input("no points to compare".into()));
    }
    Ok(sum / n as f64)
}

/// Mean pointwise Euclidean distance between paired trajectories.
pub fn mde(real: &[Trajectory], recon: &[Trajectory]) -> Result<f64> {
    paired_mean(real, recon, distance)
}

/// Mean pointwise great-circle distance, after mapping both sets back to
/// longitude and latitude.
pub fn mde_haversine(real: &[Trajectory], recon: &[Trajectory], projection: &ProjectionSpec) -> Result<f64> {
    paired_mean(real, recon, |p, q| haversine_km(projection.unproject(p), projection.unproject(q)))
}

/// Mean pairwise distance error within the rows and within the columns of a
/// probe grid. A statistic is absent when it has no pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProbeStats {
    pub within_row: Option<f64>,
    pub within_col: Option<f64>,
}

pub fn probe_stats(grid: &[Vec<Trajectory>]) -> Result<ProbeStats> {
    let cols = grid.first().map_or(0, Vec::len);
    if grid.iter().any(|r| r.len() != cols) {
        return Err(Error::Input("probe grid rows differ in length".into()));
    }
    let pair = |a: &Trajectory, b: &Trajectory| mde(std::slice::from_ref(a), std::slice::from_ref(b));
    let mean = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    let mut row_vals = Vec::new();
    for row in grid {
        for i in 0..cols {
            for j in i + 1..cols {
                row_vals.push(pair(&row[i], &row[j])?);
            }
        }
    }
    let mut col_vals = Vec::new();
    for c in 0..cols {
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                col_vals.push(pair(&grid[i][c], &grid[j][c])?);
            }
        }
    }
    Ok(ProbeStats {
        within_row: mean(row_vals),
        within_col: mean(col_vals),
    })
}
