use serde::{Deserialize, Serialize};

use super::features::FeatureSet;
use crate::error::{Error, Result};

/// RBF kernel bandwidth selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// Median pairwise distance over the pooled sample, or 1 if that is 0.
    #[default]
    Median,
    Fixed(f64),
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check(a: &FeatureSet, b: &FeatureSet) -> Result<()> {
    if a.kind != b.kind {
        return Err(Error::Input(format!("cannot compare {} features with {}", a.kind, b.kind)));
    }
    if a.width != b.width {
        return Err(Error::Input(format!("{} feature widths differ: {} vs {}", a.kind, a.width, b.width)));
    }
    if a.rows.is_empty() || b.rows.is_empty() {
        return Err(Error::Input(format!("{} feature set is empty", a.kind)));
    }
    Ok(())
}

/// Median of pairwise distances over the union of both sets, with the
/// fallback of 1 when the median is 0.
pub fn median_bandwidth(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    check(a, b)?;
    let pooled: Vec<&[f64]> = a.rows.iter().chain(&b.rows).map(Vec::as_slice).collect();
    let mut d = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let median = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    Ok(if median > 0.0 { median } else { 1.0 })
}

fn mean_kernel(x: &[Vec<f64>], y: &[Vec<f64>], gamma: f64) -> f64 {
    let mut total = 0.0;
    for u in x {
        let mut row = 0.0;
        for v in y {
            row += (-sq_dist(u, v) * gamma).exp();
        }
        total += row;
    }
    total / (x.len() * y.len()) as f64
}

/// Biased squared MMD with the median-heuristic RBF kernel.
pub fn mmd(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    mmd_with(a, b, Bandwidth::Median)
}

pub fn mmd_with(a: &FeatureSet, b: &FeatureSet, bandwidth: Bandwidth) -> Result<f64> {
    check(a, b)?;
    let h = match bandwidth {
        Bandwidth::Median => median_bandwidth(a, b)?,
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(Error::Config(format!("bandwidth {h} must be positive"))),
    };
    let gamma = 1.0 / (2.0 * h * h);
    let kxx = mean_kernel(&a.rows, &a.rows, gamma);
    let kyy = mean_kernel(&b.rows, &b.rows, gamma);
    let kxy = mean_kernel(&a.rows, &b.rows, gamma);
    Ok((kxx + kyy - 2.0 * kxy).max(0.0))
}

/// Equal-width histogram; values outside `[lo, hi]` go to the end bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(values: impl IntoIterator<Item = f64>, bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if bins == 0 || !(hi > lo) {
        return Err(Error::Config(format!("bad histogram range [{lo}, {hi}] with {bins} bins")));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0; bins];
    for v in values {
        if v.is_nan() {
            continue;
        }
        let k = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(Histogram {
        edges: (0..=bins).map(|k| lo + k as f64 * width).collect(),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::super::features::FeatureKind;
    use super::*;

    fn set(rows: Vec<Vec<f64>>) -> FeatureSet {
        FeatureSet {
            kind: FeatureKind::TotalLength,
            width: rows[0].len(),
            rows,
        }
    }

    #[test]
    fn identical_sets_give_zero() {
        let a = set(vec![vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 3.0]]);
        assert_eq!(mmd(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn separated_singletons() {
        let a = set(vec![vec![0.0]]);
        let b = set(vec![vec![100.0]]);
        assert!((mmd_with(&a, &b, Bandwidth::Fixed(1.0)).unwrap() - 2.0).abs() < 1e-9);
        // The median heuristic scales with the separation.
        let closed = 2.0 - 2.0 * (-0.5f64).exp();
        assert!((mmd(&a, &b).unwrap() - closed).abs() < 1e-12);
    }

    #[test]
    fn zero_median_falls_back() {
        // Six of the ten pairwise distances are zero.
        let a = set(vec![vec![1.0], vec![1.0], vec![1.0]]);
        let b = set(vec![vec![1.0], vec![2.0]]);
        assert_eq!(median_bandwidth(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn mismatches_rejected() {
        let a = set(vec![vec![1.0]]);
        let mut b = set(vec![vec![1.0, 2.0]]);
        assert!(mmd(&a, &b).is_err());
        b.width = 1;
        b.rows = vec![];
        assert!(mmd(&a, &b).is_err());
        let mut c = set(vec![vec![1.0]]);
        c.kind = FeatureKind::Angles;
        assert!(mmd(&a, &c).is_err());
    }

    #[test]
    fn histogram_bins() {
        let h = histogram([0.0, 0.5, 0.99, 1.0, 5.0, -3.0], 2, 0.0, 1.0).unwrap();
        assert_eq!(h.counts, vec![2, 4]);
        assert_eq!(h.edges, vec![0.0, 0.5, 1.0]);
    }
}
