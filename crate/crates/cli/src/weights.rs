use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use stgen::model::{Model, ModelConfig, Normalizer, Variant};
use stgen::nets::ParamSet;
use stgen::Error;

pub const FORMAT_VERSION: u32 = 1;

/// On-disk model: architecture echo plus every named parameter array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub format_version: u32,
    pub variant: Variant,
    pub config: ModelConfig,
    pub norm: Normalizer,
    pub params: ParamSet,
}

impl WeightsFile {
    pub fn from_model(model: &Model) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            variant: model.config().variant,
            config: model.config().clone(),
            norm: model.norm(),
            params: model.params().clone(),
        }
    }

    pub fn to_string(&self) -> Result<String> {
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: WeightsFile = serde_json::from_str(text).map_err(|e| Error::Data(format!("weights: {e}")))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "weights format version {} is not supported (expected {FORMAT_VERSION})",
                file.format_version
            ))
            .into());
        }
        if file.variant != file.config.variant {
            return Err(Error::Config(format!(
                "weights declare variant {} but the config echo says {}",
                file.variant, file.config.variant
            ))
            .into());
        }
        for (name, t) in file.params.iter() {
            if t.shape().iter().product::<usize>() != t.data().len() {
                return Err(Error::Data(format!("parameter `{name}` has {} values for shape {:?}", t.data().len(), t.shape())).into());
            }
            if !t.is_finite() {
                return Err(Error::Data(format!("parameter `{name}` is not finite")).into());
            }
        }
        Ok(file)
    }

    pub fn into_model(self) -> Result<Model> {
        Ok(Model::from_params(self.config, self.params, self.norm)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_string()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).with_context(|| format!("loading {}", path.display()))
    }
}

pub fn load_model(path: &Path) -> Result<Model> {
    WeightsFile::load(path)?.into_model().with_context(|| format!("building model from {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ModelConfig {
        ModelConfig {
            seq_len: 4,
            hidden: 4,
            ..ModelConfig::toy()
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let model = Model::new(toy()).unwrap();
        let text = WeightsFile::from_model(&model).to_string().unwrap();
        let again = WeightsFile::parse(&text).unwrap().to_string().unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn variant_mismatch_is_rejected() {
        let model = Model::new(toy()).unwrap();
        let mut file = WeightsFile::from_model(&model);
        file.variant = Variant::Dsvae;
        let err = WeightsFile::parse(&file.to_string().unwrap()).unwrap_err();
        assert!(matches!(err.downcast_ref::<Error>(), Some(Error::Config(_))));
    }

    #[test]
    fn config_mismatch_is_rejected() {
        let model = Model::new(toy()).unwrap();
        let mut file = WeightsFile::from_model(&model);
        file.config.hidden = 5;
        let parsed = WeightsFile::parse(&file.to_string().unwrap()).unwrap();
        assert!(parsed.into_model().is_err());
    }

    #[test]
    fn unsupported_version() {
        let model = Model::new(toy()).unwrap();
        let mut file = WeightsFile::from_model(&model);
        file.format_version = 9;
        assert!(WeightsFile::parse(&file.to_string().unwrap()).is_err());
    }
}
