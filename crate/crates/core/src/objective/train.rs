use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{objective_on_tape, reconstruction_on_tape, LossBreakdown};
use crate::autodiff::{AdError, Tape};
use crate::constraints::ConstraintExpr;
use crate::error::{Error, Result};
use crate::model::{GaussianNoise, Model, ModelConfig, Normalizer};
use crate::nets::{clip_global_norm, Adam};
use crate::trajectory::Trajectory;

// Independent streams derived from the run seed.
const SHUFFLE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const PENALTY_STREAM: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
    pub skipped_updates: usize,
}

/// Owns a model, its optimizer state and every random stream used in
/// training, so a run is reproducible from the config seed alone.
pub struct Trainer {
    model: Model,
    optimizer: Adam,
    constraint: Option<ConstraintExpr>,
    shuffle: ChaCha8Rng,
    noise: GaussianNoise<ChaCha8Rng>,
    penalty_noise: GaussianNoise<ChaCha8Rng>,
    epoch: usize,
}

impl Trainer {
    /// `constraint` is required exactly when the config asks for a
    /// constrained variant.
    pub fn new(model: Model, constraint: Option<ConstraintExpr>) -> Result<Self> {
        let cfg = model.config().clone();
        cfg.validate()?;
        match (&constraint, cfg.constrained) {
            (None, true) => return Err(Error::Config("constrained training needs a constraint expression".into())),
            (Some(_), false) => return Err(Error::Config("a constraint was given but the config is unconstrained".into())),
            (Some(c), true) => {
                c.validate()?;
                if !cfg.variant.is_latent() {
                    return Err(Error::Variant {
                        variant: cfg.variant.name(),
                        action: "train with a constraint penalty",
                    });
                }
            }
            (None, false) => {}
        }
        Ok(Self {
            optimizer: Adam::new(cfg.learning_rate),
            constraint,
            shuffle: stream(cfg.seed, SHUFFLE_STREAM),
            noise: GaussianNoise::new(stream(cfg.seed, NOISE_STREAM)),
            penalty_noise: GaussianNoise::new(stream(cfg.seed, PENALTY_STREAM)),
            epoch: 0,
            model,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One pass over `data` in seeded shuffled order. Returns the loss terms
    /// averaged over trajectories.
    pub fn train_epoch(&mut self, data: &[Trajectory]) -> Result<EpochRecord> {
        let cfg = self.model.config().clone();
        if data.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.shuffle);
        let mut sum = LossBreakdown::default();
        let mut skipped = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Trajectory> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grads) = self.batch_gradients(&batch).map_err(|e| match e {
                Error::Autodiff(AdError::NonFinite { .. }) => Error::Divergence { batch: b },
                other => other,
            })?;
            if !loss.total.is_finite() {
                return Err(Error::Divergence { batch: b });
            }
            let mut grads = grads;
            clip_global_norm(&mut grads, cfg.clip_norm);
            let report = self.optimizer.step(self.model.params_mut(), &grads)?;
            skipped += report.skipped.len();
            let w = batch.len() as f64;
            sum.reconstruction += w * loss.reconstruction;
            sum.kl_f += w * loss.kl_f;
            sum.kl_z += w * loss.kl_z;
            sum.penalty += w * loss.penalty;
        }
        let n = data.len() as f64;
        let mut mean = LossBreakdown {
            reconstruction: sum.reconstruction / n,
            kl_f: sum.kl_f / n,
            kl_z: sum.kl_z / n,
            penalty: sum.penalty / n,
            total: 0.0,
            beta: cfg.beta,
            penalty_weight: if self.constraint.is_some() { cfg.penalty_weight } else { 0.0 },
        };
        mean.recompute_total();
        self.epoch += 1;
        Ok(EpochRecord {
            epoch: self.epoch,
            loss: mean,
            skipped_updates: skipped,
        })
    }

    fn batch_gradients(&mut self, batch: &[&Trajectory]) -> Result<(LossBreakdown, crate::nets::ParamSet)> {
        let mut tape = Tape::new();
        match &self.model {
            Model::Latent(m) => {
                let bound = m.params.bind(&mut tape)?;
                let vars = objective_on_tape(m, &mut tape, &bound, batch, self.constraint.as_ref(), &mut self.noise, &mut self.penalty_noise)?;
                tape.backward(vars.total)?;
                let weight = if self.constraint.is_some() { m.config().penalty_weight } else { 0.0 };
                Ok((vars.breakdown(&tape, m.config().beta, weight), bound.grads(&tape)))
            }
            Model::Baseline(m) => {
                let bound = m.params.bind(&mut tape)?;
                let (preds, targets) = m.teacher_forced(&mut tape, &bound, batch)?;
                let loss = reconstruction_on_tape(&mut tape, &targets, &preds)?;
                tape.backward(loss)?;
                let value = tape.value(loss).item();
                let breakdown = LossBreakdown {
                    reconstruction: value,
                    total: value,
                    ..LossBreakdown::default()
                };
                Ok((breakdown, bound.grads(&tape)))
            }
        }
    }
}

/// Fresh model for `config` with its normalizer fitted on `data`. Checks
/// that every trajectory has `config.seq_len` points.
pub fn initial_model(config: ModelConfig, data: &[Trajectory]) -> Result<Model> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if let Some(bad) = data.iter().find(|t| t.len() != config.seq_len) {
        return Err(Error::Data(format!(
            "training trajectory has {} points, config expects {}",
            bad.len(),
            config.seq_len
        )));
    }
    let mut model = Model::new(config)?;
    model.set_norm(Normalizer::fit(data.iter().flat_map(|t| t.points.iter())));
    Ok(model)
}

pub(crate) fn log_epoch(record: &EpochRecord) {
    log::info!(
        "epoch {} total {:.4} recon {:.4} kl_f {:.4} kl_z {:.4} penalty {:.4}",
        record.epoch,
        record.loss.total,
        record.loss.reconstruction,
        record.loss.kl_f,
        record.loss.kl_z,
        record.loss.penalty
    );
}

/// Builds a model with [`initial_model`] and trains it for `config.epochs`,
/// handing each epoch record to `on_epoch`.
pub fn train(
    config: ModelConfig,
    data: &[Trajectory],
    constraint: Option<ConstraintExpr>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Model> {
    let epochs = config.epochs;
    let mut trainer = Trainer::new(initial_model(config, data)?, constraint)?;
    for _ in 0..epochs {
        let record = trainer.train_epoch(data)?;
        log_epoch(&record);
        on_epoch(&record);
    }
    Ok(trainer.into_model())
}
