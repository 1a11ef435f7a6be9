use std::collections::BTreeMap;

use anyhow::{Context, Result};
use serde::Serialize;
use stgen::constraints::violation_score;
use stgen::metrics::{extract_features, histogram, mde, mmd, FeatureKind, GridSpec, Histogram};
use stgen::{Error, Trajectory};

use crate::io::{config_path_for, read_constraint, read_records, to_trajectories, write_json};
use crate::EvaluateArgs;

#[derive(Serialize)]
struct EvalReport {
    real: usize,
    generated: usize,
    /// Present when both files hold the same ids in the same order.
    mde: Option<f64>,
    mmd: BTreeMap<&'static str, f64>,
    /// Trajectories skipped per feature kind, as `[real, generated]`.
    rejected: BTreeMap<&'static str, [usize; 2]>,
    violation_scores: Vec<ScoreEntry>,
    histograms: BTreeMap<&'static str, HistogramPair>,
}

#[derive(Serialize)]
struct ScoreEntry {
    constraint: String,
    real: f64,
    generated: f64,
}

#[derive(Serialize)]
struct HistogramPair {
    real: Histogram,
    generated: Histogram,
}

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'static str,
    real: &'a std::path::Path,
    generated: &'a std::path::Path,
    grid: usize,
    bins: usize,
    interval_s: f64,
    constraints: &'a [std::path::PathBuf],
    out: &'a std::path::Path,
}

fn flat_values(kind: FeatureKind, trajs: &[Trajectory]) -> Result<Vec<f64>> {
    let (feats, _) = extract_features(kind, trajs, None)?;
    Ok(feats.rows.into_iter().flatten().collect())
}

fn histograms(kind: FeatureKind, real: &[Trajectory], gen: &[Trajectory], bins: usize) -> Result<HistogramPair> {
    let (a, b) = (flat_values(kind, real)?, flat_values(kind, gen)?);
    let (lo, hi) = match kind {
        FeatureKind::Angles => (-1.0, 1.0),
        _ => {
            let top = a.iter().chain(&b).copied().fold(0.0, f64::max);
            (0.0, if top > 0.0 { top } else { 1.0 })
        }
    };
    Ok(HistogramPair {
        real: histogram(a, bins, lo, hi)?,
        generated: histogram(b, bins, lo, hi)?,
    })
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    if !(args.interval > 0.0) {
        return Err(Error::Config("--interval must be positive".into()).into());
    }
    let real_records = read_records(&args.real)?;
    let gen_records = read_records(&args.generated)?;
    if real_records.is_empty() || gen_records.is_empty() {
        return Err(Error::Data("both corpora must be non-empty".into()).into());
    }
    let real = to_trajectories(&real_records, args.interval);
    let gen = to_trajectories(&gen_records, args.interval);

    let paired = real_records.len() == gen_records.len()
        && real_records.iter().zip(&gen_records).all(|(a, b)| a.id == b.id && a.points.len() == b.points.len());
    let mde_value = if paired { Some(mde(&real, &gen)?) } else { None };

    let grid = GridSpec::covering(&[&real, &gen], args.grid)?;
    let mut mmds = BTreeMap::new();
    let mut rejected = BTreeMap::new();
    for kind in FeatureKind::ALL {
        let (fa, ra) = extract_features(kind, &real, Some(&grid))?;
        let (fb, rb) = extract_features(kind, &gen, Some(&grid))?;
        let value = mmd(&fa, &fb).with_context(|| format!("{} features of real vs generated", kind.name()))?;
        mmds.insert(kind.name(), value);
        rejected.insert(kind.name(), [ra.rejected.len(), rb.rejected.len()]);
    }

    let mut scores = Vec::new();
    for path in &args.constraints {
        let expr = read_constraint(path)?;
        scores.push(ScoreEntry {
            constraint: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            real: violation_score(&expr, &real)?,
            generated: violation_score(&expr, &gen)?,
        });
    }

    let mut hists = BTreeMap::new();
    for kind in [FeatureKind::Angles, FeatureKind::SegmentLengths, FeatureKind::TotalLength] {
        hists.insert(kind.name(), histograms(kind, &real, &gen, args.bins)?);
    }

    let report = EvalReport {
        real: real.len(),
        generated: gen.len(),
        mde: mde_value,
        mmd: mmds,
        rejected,
        violation_scores: scores,
        histograms: hists,
    };
    write_json(&args.out, &report)?;
    write_json(
        &config_path_for(&args.out),
        &Resolved {
            command: "evaluate",
            real: &args.real,
            generated: &args.generated,
            grid: args.grid,
            bins: args.bins,
            interval_s: args.interval,
            constraints: &args.constraints,
            out: &args.out,
        },
    )?;
    Ok(())
}
