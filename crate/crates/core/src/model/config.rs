use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which latent factors a model carries and how the step posterior is
/// conditioned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Global latent only.
    SvaeY,
    /// Step latents only.
    SvaeZ,
    /// Both; the step posterior sees the global latent.
    Dsvae,
    /// Both; the step posterior is independent of the global latent.
    Fdsvae,
    /// Autoregressive LSTM without latents.
    LstmBaseline,
}

/// How the step-latent posterior is conditioned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorMode {
    Factorized,
    Full,
}

/// Input fed to the sequential prior generator at every step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorCondition {
    /// All-zero vector of width `prior_input`.
    Zero,
    /// The global latent; reduces the model to a plain sequential VAE.
    Global,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::SvaeY,
        Variant::SvaeZ,
        Variant::Dsvae,
        Variant::Fdsvae,
        Variant::LstmBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SvaeY => "svae-y",
            Variant::SvaeZ => "svae-z",
            Variant::Dsvae => "dsvae",
            Variant::Fdsvae => "fdsvae",
            Variant::LstmBaseline => "lstm-baseline",
        }
    }

    pub fn has_global(self) -> bool {
        matches!(self, Variant::SvaeY | Variant::Dsvae | Variant::Fdsvae)
    }

    pub fn has_steps(self) -> bool {
        matches!(self, Variant::SvaeZ | Variant::Dsvae | Variant::Fdsvae)
    }

    pub fn is_latent(self) -> bool {
        self != Variant::LstmBaseline
    }

    pub fn posterior_mode(self) -> Option<PosteriorMode> {
        match self {
            Variant::Dsvae => Some(PosteriorMode::Full),
            Variant::SvaeZ | Variant::Fdsvae => Some(PosteriorMode::Factorized),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// Architecture and training hyper-parameters.
///
/// [`ModelConfig::default`] is the taxi configuration; [`ModelConfig::checkin`]
/// and [`ModelConfig::toy`] are the alternatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Adds the validity penalty to the objective.
    pub constrained: bool,
    pub seq_len: usize,
    /// Point embedding widths.
    pub embed: Vec<usize>,
    pub hidden: usize,
    pub f_dim: usize,
    pub z_dim: usize,
    pub prior_input: usize,
    pub prior_condition: PriorCondition,
    /// Hidden widths of the decoder head; a final width-2 layer is implied.
    pub head: Vec<usize>,
    pub beta: f64,
    pub penalty_weight: f64,
    pub penalty_samples: usize,
    pub penalty_sqrt: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub interval_s: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Fdsvae,
            constrained: false,
            seq_len: 32,
            embed: vec![48, 16],
            hidden: 512,
            f_dim: 256,
            z_dim: 64,
            prior_input: 16,
            prior_condition: PriorCondition::Zero,
            head: vec![128],
            beta: 100.0,
            penalty_weight: 1.0,
            penalty_samples: 128,
            penalty_sqrt: false,
            learning_rate: 2e-4,
            batch_size: 128,
            epochs: 100,
            clip_norm: 5.0,
            seed: 0,
            interval_s: crate::trajectory::DEFAULT_INTERVAL_S,
        }
    }
}

impl ModelConfig {
    /// Check-in datasets: wider embedding, 32-wide step latents, two-layer head.
    pub fn checkin() -> Self {
        Self {
            embed: vec![48, 32],
            z_dim: 32,
            prior_input: 32,
            head: vec![64, 32],
            learning_rate: 2e-3,
            ..Self::default()
        }
    }

    /// Desk-scale configuration used for the synthetic corpus.
    pub fn toy() -> Self {
        Self {
            seq_len: 16,
            embed: vec![16, 8],
            hidden: 16,
            f_dim: 8,
            z_dim: 4,
            prior_input: 4,
            head: vec![32],
            beta: 0.1,
            penalty_samples: 32,
            learning_rate: 5e-3,
            batch_size: 64,
            epochs: 30,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "taxi" | "porto" => Ok(Self::default()),
            "checkin" => Ok(Self::checkin()),
            "toy" => Ok(Self::toy()),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("seq_len", self.seq_len),
            ("hidden", self.hidden),
            ("f_dim", self.f_dim),
            ("z_dim", self.z_dim),
            ("prior_input", self.prior_input),
            ("batch_size", self.batch_size),
            ("penalty_samples", self.penalty_samples),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.embed.is_empty() || self.embed.contains(&0) || self.head.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let nonneg = [
            ("beta", self.beta),
            ("penalty_weight", self.penalty_weight),
            ("learning_rate", self.learning_rate),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.clip_norm > 0.0) || !(self.interval_s > 0.0) {
            return Err(Error::Config("clip_norm and interval_s must be positive".into()));
        }
        Ok(())
    }

    /// Display name with the `-S` suffix for constrained training.
    pub fn label(&self) -> String {
        if self.constrained {
            format!("{}-S", self.variant.name())
        } else {
            self.variant.name().to_string()
        }
    }

    pub fn embed_width(&self) -> usize {
        *self.embed.last().expect("validated")
    }

    /// Input width of the step-latent encoder.
    pub fn step_encoder_input(&self) -> usize {
        match self.variant.posterior_mode() {
            Some(PosteriorMode::Full) => self.embed_width() + self.f_dim,
            _ => self.embed_width(),
        }
    }

    /// Input width of the decoder recurrence.
    pub fn decoder_input(&self) -> usize {
        let f = if self.variant.has_global() { self.f_dim } else { 0 };
        let z = if self.variant.has_steps() { self.z_dim } else { 0 };
        f + z
    }

    pub fn prior_width(&self) -> usize {
        match self.prior_condition {
            PriorCondition::Zero => self.prior_input,
            PriorCondition::Global => self.f_dim,
        }
    }
}

/// Affine map between kilometre coordinates and the network's working range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub center: [f64; 2],
    pub scale: f64,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self {
            center: [0.0, 0.0],
            scale: 1.0,
        }
    }
}

impl Normalizer {
    /// Centre at the mean point, scale to the largest per-axis standard
    /// deviation.
    pub fn fit<'a>(points: impl IntoIterator<Item = &'a [f64; 2]>) -> Self {
        let mut n = 0.0;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for p in points {
            n += 1.0;
            for k in 0..2 {
                sum[k] += p[k];
                sq[k] += p[k] * p[k];
            }
        }
        if n == 0.0 {
            return Self::default();
        }
        let center = [sum[0] / n, sum[1] / n];
        let sd = (0..2)
            .map(|k| (sq[k] / n - center[k] * center[k]).max(0.0).sqrt())
            .fold(0.0, f64::max);
        Self {
            center,
            scale: if sd > 1e-9 { sd } else { 1.0 },
        }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.center[0]) / self.scale, (p[1] - self.center[1]) / self.scale]
    }
}
