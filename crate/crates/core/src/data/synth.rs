use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::corpus::CorpusRecord;
use crate::error::{Error, Result};
use crate::trajectory::Point;

/// Synthetic corpus of labelled archetypes. Each archetype fixes a start and
/// end anchor; each trajectory jitters the anchors and walks between them
/// with smoothed heading noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub seq_len: usize,
    pub archetypes: usize,
    /// Standard deviation of the per-step heading innovation, radians.
    pub noise: f64,
    pub seed: u64,
    /// Nominal displacement per step, km.
    pub step_km: f64,
    /// Autoregressive coefficient of the heading deviation.
    pub smoothing: f64,
    /// Standard deviation of the per-trajectory anchor jitter, km.
    pub anchor_jitter_km: f64,
    /// Side of the square in which archetype start anchors are placed, km.
    pub extent_km: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            seq_len: 16,
            archetypes: 4,
            noise: 0.3,
            seed: 0,
            step_km: 0.3,
            smoothing: 0.8,
            anchor_jitter_km: 0.3,
            extent_km: 10.0,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn synth_corpus(cfg: &SynthConfig) -> Result<Vec<CorpusRecord>> {
    if cfg.archetypes == 0 {
        return Err(Error::Config("synthetic corpus needs at least one archetype".into()));
    }
    if cfg.seq_len < 2 {
        return Err(Error::Config("synthetic trajectories need at least 2 points".into()));
    }
    if !(cfg.noise >= 0.0 && cfg.step_km > 0.0 && cfg.anchor_jitter_km >= 0.0 && cfg.extent_km >= 0.0) {
        return Err(Error::Config("synthetic corpus scales must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span = cfg.step_km * (cfg.seq_len - 1) as f64;
    let anchors: Vec<(Point, Point)> = (0..cfg.archetypes)
        .map(|_| {
            let a = [rng.random::<f64>() * cfg.extent_km, rng.random::<f64>() * cfg.extent_km];
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            let len = span * rng.random_range(0.8..1.2);
            (a, [a[0] + len * theta.cos(), a[1] + len * theta.sin()])
        })
        .collect();
    let mut out = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let label = i % cfg.archetypes;
        let (a, b) = anchors[label];
        let mut jitter = |p: Point| [p[0] + cfg.anchor_jitter_km * normal(&mut rng), p[1] + cfg.anchor_jitter_km * normal(&mut rng)];
        let start = jitter(a);
        let end = jitter(b);
        out.push(CorpusRecord {
            id: format!("synth-{i}"),
            points: walk(start, end, cfg, &mut rng),
            label: Some(label),
        });
    }
    Ok(out)
}

fn walk(start: Point, end: Point, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let steps = cfg.seq_len - 1;
    let (dx, dy) = (end[0] - start[0], end[1] - start[1]);
    let seg = dx.hypot(dy) / steps as f64;
    let base = dy.atan2(dx);
    let mut points = Vec::with_capacity(cfg.seq_len);
    points.push(start);
    let mut dev = 0.0;
    for _ in 0..steps {
        if cfg.noise > 0.0 {
            dev = cfg.smoothing * dev + cfg.noise * normal(rng);
        }
        let p = points[points.len() - 1];
        points.push([p[0] + seg * (base + dev).cos(), p[1] + seg * (base + dev).sin()]);
    }
    // Spread the endpoint miss linearly so the walk lands on `end`.
    let last = points[steps];
    let miss = [end[0] - last[0], end[1] - last[1]];
    for (t, p) in points.iter_mut().enumerate() {
        let w = t as f64 / steps as f64;
        p[0] += w * miss[0];
        p[1] += w * miss[1];
    }
    points
}

/// Walks with uniformly random headings and a fixed step, started uniformly
/// inside `[min, max]`. A structureless reference for generative models.
pub fn random_walk_corpus(n: usize, seq_len: usize, min: Point, max: Point, step_km: f64, seed: u64) -> Result<Vec<CorpusRecord>> {
    if !(max[0] >= min[0] && max[1] >= min[1] && step_km >= 0.0) {
        return Err(Error::Config("random walk needs an ordered box and a non-negative step".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let mut p = [
                min[0] + rng.random::<f64>() * (max[0] - min[0]),
                min[1] + rng.random::<f64>() * (max[1] - min[1]),
            ];
            let mut points = Vec::with_capacity(seq_len);
            for t in 0..seq_len {
                if t > 0 {
                    let theta = rng.random::<f64>() * std::f64::consts::TAU;
                    p = [p[0] + step_km * theta.cos(), p[1] + step_km * theta.sin()];
                }
                points.push(p);
            }
            CorpusRecord {
                id: format!("walk-{i}"),
                points,
                label: None,
            }
        })
        .collect())
}
