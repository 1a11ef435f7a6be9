//! The trajectory generative model, its ablation variants and the LSTM
//! baseline.

mod baseline;
mod config;
mod noise;
mod stg;

pub use baseline::LstmBaseline;
pub use config::{ModelConfig, Normalizer, PosteriorMode, PriorCondition, Variant};
pub use noise::{GaussianNoise, Noise, ReplayNoise, ZeroNoise};
pub use stg::{reparameterize, ForwardPass, GaussianVars, StgModel, ThetaSeq, SIGMA_FLOOR};

use crate::error::Result;
use crate::nets::ParamSet;

/// Either model family, as stored in a weights file.
pub enum Model {
    Latent(StgModel),
    Baseline(LstmBaseline),
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        if config.variant.is_latent() {
            StgModel::new(config).map(Model::Latent)
        } else {
            LstmBaseline::new(config).map(Model::Baseline)
        }
    }

    pub fn from_params(config: ModelConfig, params: ParamSet, norm: Normalizer) -> Result<Self> {
        if config.variant.is_latent() {
            StgModel::from_params(config, params, norm).map(Model::Latent)
        } else {
            LstmBaseline::from_params(config, params, norm).map(Model::Baseline)
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Model::Latent(m) => m.config(),
            Model::Baseline(m) => m.config(),
        }
    }

    pub fn params(&self) -> &ParamSet {
        match self {
            Model::Latent(m) => &m.params,
            Model::Baseline(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            Model::Latent(m) => &mut m.params,
            Model::Baseline(m) => &mut m.params,
        }
    }

    pub fn norm(&self) -> Normalizer {
        match self {
            Model::Latent(m) => m.norm,
            Model::Baseline(m) => m.norm,
        }
    }

    pub fn set_norm(&mut self, norm: Normalizer) {
        match self {
            Model::Latent(m) => m.norm = norm,
            Model::Baseline(m) => m.norm = norm,
        }
    }
}
