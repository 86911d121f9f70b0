use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::metrics::MetricsConfig;
use crate::samix::MixConfig;
use crate::scle::ExpansionConfig;

/// Every tunable of the pipeline under one JSON document. Absent keys take
/// their defaults; unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub expansion: ExpansionConfig,
    pub mix: MixConfig,
    pub loss: LossWeights,
    pub metrics: MetricsConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.expansion.validate()?;
        self.mix.validate()?;
        self.loss.validate()?;
        self.metrics.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_documents() {
        let cfg = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        let cfg = PipelineConfig::from_json(r#"{"expansion": {"b1": 3}, "mix": {"t": "inf"}}"#).unwrap();
        assert_eq!(cfg.expansion.b1, 3.0);
        assert_eq!(cfg.expansion.b2, 8.0);
        assert!(cfg.mix.t.is_infinite());
        assert_eq!(cfg.loss.lambda1, 0.1);
        assert_eq!(cfg.metrics.tau, 0.5);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(PipelineConfig::from_json(r#"{"extra": 1}"#), Err(Error::Config(_))));
        assert!(PipelineConfig::from_json(r#"{"loss": {"lambda3": 1}}"#).is_err());
        assert!(matches!(
            PipelineConfig::from_json(r#"{"expansion": {"b1": 9}}"#),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_json(&text).unwrap(), cfg);
    }
}
