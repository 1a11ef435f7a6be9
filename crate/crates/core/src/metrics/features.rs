use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constraints::cosine;
use crate::error::{Error, Result};
use crate::trajectory::{distance, Point, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    /// Turning cosines, width `T - 2`. A zero-length displacement counts as
    /// no turn.
    Angles,
    /// Displacement lengths, width `T - 1`.
    SegmentLengths,
    /// Path length, width 1.
    TotalLength,
    /// Points per grid cell, row-major, width `G * G`.
    GridCounts,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::Angles,
        FeatureKind::SegmentLengths,
        FeatureKind::TotalLength,
        FeatureKind::GridCounts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Angles => "angles",
            FeatureKind::SegmentLengths => "segment-lengths",
            FeatureKind::TotalLength => "total-length",
            FeatureKind::GridCounts => "grid-counts",
        }
    }

    fn min_points(self) -> usize {
        match self {
            FeatureKind::Angles => 3,
            FeatureKind::SegmentLengths | FeatureKind::TotalLength => 2,
            FeatureKind::GridCounts => 1,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature kind `{s}`")))
    }
}

/// Square grid over an axis-aligned box, in km.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: Point,
    pub max: Point,
    #[serde(default = "default_cells")]
    pub cells: usize,
}

fn default_cells() -> usize {
    16
}

impl GridSpec {
    pub fn new(min: Point, max: Point, cells: usize) -> Result<Self> {
        let g = Self { min, max, cells };
        g.validate()?;
        Ok(g)
    }

    /// Bounding box of every point in `sets`, widened where degenerate.
    pub fn covering(sets: &[&[Trajectory]], cells: usize) -> Result<Self> {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in sets.iter().flat_map(|s| s.iter()).flat_map(|t| t.points.iter()) {
            for a in 0..2 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        if !min[0].is_finite() {
            return Err(Error::Input("cannot fit a grid to zero points".into()));
        }
        for a in 0..2 {
            if max[a] - min[a] <= 0.0 {
                min[a] -= 0.5;
                max[a] += 0.5;
            }
        }
        Self::new(min, max, cells)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 {
            return Err(Error::Config("grid needs at least one cell per axis".into()));
        }
        if !(self.max[0] > self.min[0] && self.max[1] > self.min[1]) {
            return Err(Error::Config(format!("grid box {:?}..{:?} is degenerate", self.min, self.max)));
        }
        Ok(())
    }

    /// Row-major cell index; points outside land in the border cells.
    pub fn cell(&self, p: Point) -> usize {
        let g = self.cells;
        let idx = |a: usize| {
            let u = (p[a] - self.min[a]) / (self.max[a] - self.min[a]) * g as f64;
            if u.is_nan() {
                0
            } else {
                (u.floor().max(0.0) as usize).min(g - 1)
            }
        };
        idx(1) * g + idx(0)
    }
}

/// Fixed-width feature rows for one corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub kind: FeatureKind,
    pub width: usize,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    /// Index and reason for every trajectory that was skipped.
    pub rejected: Vec<(usize, String)>,
}

fn row(kind: FeatureKind, pts: &[Point], grid: Option<&GridSpec>) -> Vec<f64> {
    let seg = |i: usize| [pts[i + 1][0] - pts[i][0], pts[i + 1][1] - pts[i][1]];
    match kind {
        FeatureKind::Angles => (1..pts.len() - 1).map(|i| cosine(seg(i - 1), seg(i)).unwrap_or(1.0)).collect(),
        FeatureKind::SegmentLengths => pts.windows(2).map(|w| distance(w[0], w[1])).collect(),
        FeatureKind::TotalLength => vec![pts.windows(2).map(|w| distance(w[0], w[1])).sum()],
        FeatureKind::GridCounts => {
            let grid = grid.expect("checked by caller");
            let mut counts = vec![0.0; grid.cells * grid.cells];
            for &p in pts {
                counts[grid.cell(p)] += 1.0;
            }
            counts
        }
    }
}

/// Extracts one feature row per trajectory, zero-padding shorter rows to
/// the widest. Trajectories too short for `kind` are skipped and reported.
pub fn extract_features(kind: FeatureKind, trajs: &[Trajectory], grid: Option<&GridSpec>) -> Result<(FeatureSet, FeatureReport)> {
    if kind == FeatureKind::GridCounts {
        grid.ok_or_else(|| Error::Config("grid-counts features need a grid".into()))?.validate()?;
    }
    let mut report = FeatureReport::default();
    let mut rows = Vec::with_capacity(trajs.len());
    for (i, t) in trajs.iter().enumerate() {
        if t.len() < kind.min_points() {
            report
                .rejected
                .push((i, format!("{} points is too short for {kind}", t.len())));
            continue;
        }
        if !t.is_finite() {
            report.rejected.push((i, "non-finite coordinates".into()));
            continue;
        }
        rows.push(row(kind, &t.points, grid));
    }
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    for r in &mut rows {
        r.resize(width, 0.0);
    }
    Ok((FeatureSet { kind, width, rows }, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> Trajectory {
        Trajectory::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    }

    #[test]
    fn straight_line_features() {
        let t = [straight()];
        assert_eq!(extract_features(FeatureKind::Angles, &t, None).unwrap().0.rows, vec![vec![1.0, 1.0]]);
        assert_eq!(
            extract_features(FeatureKind::SegmentLengths, &t, None).unwrap().0.rows,
            vec![vec![1.0, 1.0, 1.0]]
        );
        assert_eq!(extract_features(FeatureKind::TotalLength, &t, None).unwrap().0.rows, vec![vec![3.0]]);
    }

    #[test]
    fn grid_binning() {
        let grid = GridSpec::new([0.0, 0.0], [2.0, 2.0], 2).unwrap();
        let t = [Trajectory::new(vec![[0.5, 0.5], [1.5, 0.5]])];
        let (f, _) = extract_features(FeatureKind::GridCounts, &t, Some(&grid)).unwrap();
        assert_eq!(f.rows, vec![vec![1.0, 1.0, 0.0, 0.0]]);
    }

    #[test]
    fn outside_points_clamp_to_border() {
        let grid = GridSpec::new([0.0, 0.0], [2.0, 2.0], 2).unwrap();
        assert_eq!(grid.cell([-5.0, 9.0]), 2);
        assert_eq!(grid.cell([2.0, 2.0]), 3);
    }

    #[test]
    fn single_point_rejected_for_total_length() {
        let t = [Trajectory::new(vec![[1.0, 1.0]]), straight()];
        let (f, rep) = extract_features(FeatureKind::TotalLength, &t, None).unwrap();
        assert_eq!(f.rows.len(), 1);
        assert_eq!(rep.rejected.len(), 1);
        assert_eq!(rep.rejected[0].0, 0);
    }

    #[test]
    fn grid_required() {
        assert!(extract_features(FeatureKind::GridCounts, &[straight()], None).is_err());
    }

    #[test]
    fn ragged_rows_padded() {
        let t = [straight(), Trajectory::new(vec![[0.0, 0.0], [0.0, 1.0], [0.0, 3.0]])];
        let (f, _) = extract_features(FeatureKind::SegmentLengths, &t, None).unwrap();
        assert_eq!(f.width, 3);
        assert_eq!(f.rows[1], vec![1.0, 2.0, 0.0]);
    }
}
