//! Training losses and the epoch loop.
//!
//! The objective is `reconstruction + beta * (kl_f + kl_z) + weight * penalty`
//! where the penalty is the mean hinge violation of trajectories drawn from
//! the generative path, so its gradient reaches the prior and decoder.

mod kl;
mod train;

pub use kl::{gaussian_kl, gaussian_kl_on_tape};
pub use train::{initial_model, train, EpochRecord, Trainer};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::constraints::ConstraintExpr;
use crate::error::{Error, Result};
use crate::model::{ForwardPass, Noise, StgModel};
use crate::nets::Bound;
use crate::trajectory::Trajectory;

/// Guard applied before the optional square root of the penalty.
pub const SQRT_GUARD: f64 = 1e-12;

/// Scalar loss terms for one batch or an epoch average.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub kl_f: f64,
    pub kl_z: f64,
    pub penalty: f64,
    pub total: f64,
    pub beta: f64,
    pub penalty_weight: f64,
}

impl LossBreakdown {
    pub fn recompute_total(&mut self) {
        self.total = self.reconstruction + self.beta * (self.kl_f + self.kl_z) + self.penalty_weight * self.penalty;
    }
}

/// Tape handles for each term of the objective.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub reconstruction: Var,
    pub kl_f: Option<Var>,
    pub kl_z: Option<Var>,
    pub penalty: Option<Var>,
    pub total: Var,
}

impl LossVars {
    pub fn breakdown(&self, tape: &Tape, beta: f64, penalty_weight: f64) -> LossBreakdown {
        let get = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
        LossBreakdown {
            reconstruction: tape.value(self.reconstruction).item(),
            kl_f: get(self.kl_f),
            kl_z: get(self.kl_z),
            penalty: get(self.penalty),
            total: tape.value(self.total).item(),
            beta,
            penalty_weight,
        }
    }
}

/// Squared error summed over steps and coordinates, averaged over rows.
pub fn reconstruction_on_tape(tape: &mut Tape, target: &[Var], recon: &[Var]) -> Result<Var> {
    if target.len() != recon.len() || target.is_empty() {
        return Err(Error::Input(format!(
            "reconstruction has {} steps, trajectory has {}",
            recon.len(),
            target.len()
        )));
    }
    let rows = tape.value(target[0]).rows() as f64;
    let mut acc: Option<Var> = None;
    for (&s, &r) in target.iter().zip(recon) {
        let d = tape.sub(s, r)?;
        let sq = tape.square(d)?;
        let term = tape.sum(sq)?;
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    Ok(tape.scale(acc.expect("non-empty"), 1.0 / rows)?)
}

/// Reconstruction and KL terms, KL summed over time and dims and averaged
/// over the batch.
pub fn elbo_on_tape(tape: &mut Tape, pass: &ForwardPass, beta: f64) -> Result<LossVars> {
    let reconstruction = reconstruction_on_tape(tape, &pass.target, &pass.recon)?;
    let rows = tape.value(pass.target[0]).rows() as f64;
    let kl_f = match &pass.global {
        Some(g) => {
            let zero = tape.constant(crate::autodiff::Tensor::zeros(&[1, tape.value(g.mu).cols()]))?;
            let one = tape.constant(crate::autodiff::Tensor::filled(&[1, tape.value(g.mu).cols()], 1.0))?;
            let kl = gaussian_kl_on_tape(tape, g.mu, g.sigma, zero, one)?;
            let s = tape.sum(kl)?;
            Some(tape.scale(s, 1.0 / rows)?)
        }
        None => None,
    };
    let kl_z = match &pass.theta {
        Some(theta) => {
            if theta.mu.len() != pass.steps.len() {
                return Err(Error::Input("prior and posterior lengths differ".into()));
            }
            let mut acc: Option<Var> = None;
            for (t, q) in pass.steps.iter().enumerate() {
                let kl = gaussian_kl_on_tape(tape, q.mu, q.sigma, theta.mu[t], theta.sigma[t])?;
                let s = tape.sum(kl)?;
                acc = Some(match acc {
                    None => s,
                    Some(a) => tape.add(a, s)?,
                });
            }
            Some(tape.scale(acc.expect("non-empty"), 1.0 / rows)?)
        }
        None => None,
    };
    let mut total = reconstruction;
    for kl in [kl_f, kl_z].into_iter().flatten() {
        let w = tape.scale(kl, beta)?;
        total = tape.add(total, w)?;
    }
    Ok(LossVars {
        reconstruction,
        kl_f,
        kl_z,
        penalty: None,
        total,
    })
}

/// Mean per-trajectory penalty of already-sampled trajectories, optionally
/// square-rooted.
pub fn penalty_from_samples(tape: &mut Tape, constraint: &ConstraintExpr, steps: &[Var], interval_s: f64, use_sqrt: bool) -> Result<Var> {
    let per = constraint.penalty_on_tape(tape, steps, interval_s)?;
    let mean = tape.mean(per)?;
    if use_sqrt {
        let guarded = tape.clamp_min(mean, SQRT_GUARD)?;
        Ok(tape.sqrt(guarded)?)
    } else {
        Ok(mean)
    }
}

/// Draws `samples` trajectories through the reparameterized generative path
/// and scores them against `constraint`.
pub fn constraint_penalty_on_tape(
    model: &StgModel,
    tape: &mut Tape,
    bound: &Bound,
    constraint: &ConstraintExpr,
    samples: usize,
    t_len: usize,
    use_sqrt: bool,
    noise: &mut dyn Noise,
) -> Result<Var> {
    if samples == 0 {
        return Err(Error::Config("penalty needs at least one sample".into()));
    }
    let steps = model.sample_on_tape(tape, bound, samples, t_len, noise)?;
    penalty_from_samples(tape, constraint, &steps, model.config().interval_s, use_sqrt)
}

/// Full objective on one batch. The penalty draws from `penalty_noise` so
/// that enabling it never perturbs the ELBO's noise stream.
pub fn objective_on_tape(
    model: &StgModel,
    tape: &mut Tape,
    bound: &Bound,
    batch: &[&Trajectory],
    constraint: Option<&ConstraintExpr>,
    noise: &mut dyn Noise,
    penalty_noise: &mut dyn Noise,
) -> Result<LossVars> {
    let cfg = model.config();
    let pass = model.forward(tape, bound, batch, noise)?;
    let mut vars = elbo_on_tape(tape, &pass, cfg.beta)?;
    if let Some(c) = constraint {
        let t_len = batch[0].len();
        let p = constraint_penalty_on_tape(model, tape, bound, c, cfg.penalty_samples, t_len, cfg.penalty_sqrt, penalty_noise)?;
        let w = tape.scale(p, cfg.penalty_weight)?;
        vars.total = tape.add(vars.total, w)?;
        vars.penalty = Some(p);
    }
    Ok(vars)
}

/// ELBO terms for a batch, evaluated without keeping the tape.
pub fn elbo_loss(model: &StgModel, batch: &[&Trajectory], noise: &mut dyn Noise) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape)?;
    let pass = model.forward(&mut tape, &bound, batch, noise)?;
    let vars = elbo_on_tape(&mut tape, &pass, model.config().beta)?;
    Ok(vars.breakdown(&tape, model.config().beta, 0.0))
}

/// Monte-Carlo constraint penalty of the current generative model.
pub fn constraint_penalty(model: &StgModel, constraint: &ConstraintExpr, samples: usize, t_len: usize, use_sqrt: bool, noise: &mut dyn Noise) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape)?;
    let p = constraint_penalty_on_tape(model, &mut tape, &bound, constraint, samples, t_len, use_sqrt, noise)?;
    Ok(tape.value(p).item())
}
