//! Run configuration, read from TOML with every field defaulted.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use aoitraj_core::evaluation::T2mRule;
use aoitraj_core::predictor::{FeatureSet, TrainConfig, HIDDEN};
use aoitraj_core::risk::RiskConfig;
use aoitraj_core::scenegen::{CorpusSpec, SuiteSpec};
use aoitraj_core::{OBS_DT, OBS_LEN, PRED_DT, PRED_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub horizons: HorizonConfig,
    pub errors: ErrorConfig,
    pub risk: RiskConfig,
    pub suite: SuiteSpec,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 2024,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            horizons: HorizonConfig::default(),
            errors: ErrorConfig::default(),
            risk: RiskConfig::default(),
            suite: SuiteSpec::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Seconds between consecutive record windows of one episode.
    pub stride: f64,
    pub corpus: CorpusSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { stride: 1.0, corpus: CorpusSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub patience: usize,
    /// Inputs of the intention model trained by `train-di`.
    pub di_features: String,
    /// Inputs of the multimodal trajectory model and the FF-LSTM baseline.
    pub mt_features: String,
    /// Inputs of the MTP-LSTM baseline.
    pub mtp_features: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: HIDDEN,
            lr: 1e-3,
            batch: 32,
            epochs: 30,
            patience: 5,
            di_features: FeatureSet::SEC.name().into(),
            mt_features: FeatureSet::SEC.name().into(),
            mtp_features: FeatureSet::SC.name().into(),
        }
    }
}

impl ModelConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { batch: self.batch, epochs: self.epochs, patience: self.patience, lr: self.lr, seed }
    }
}

/// Horizons of the record schema. They are fixed at compile time and only
/// checked here, so a config cannot silently disagree with the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonConfig {
    pub observation_seconds: f64,
    pub prediction_steps: usize,
    pub observation_step: f64,
    pub prediction_step: f64,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig {
            observation_seconds: OBS_LEN as f64 * OBS_DT,
            prediction_steps: PRED_LEN,
            observation_step: OBS_DT,
            prediction_step: PRED_DT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorConfig {
    /// Steps shorter than this reuse the previous motion direction, metres.
    pub min_displacement: f64,
    pub min_samples: usize,
}

impl Default for ErrorConfig {
    fn default() -> Self {
        ErrorConfig { min_displacement: 0.05, min_samples: aoitraj_core::riskstats::MIN_SAMPLES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// "stable" or "first".
    pub t2m_rule: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { t2m_rule: "stable".into() }
    }
}

impl EvalConfig {
    pub fn rule(&self) -> Result<T2mRule> {
        match self.t2m_rule.as_str() {
            "stable" => Ok(T2mRule::Stable),
            "first" => Ok(T2mRule::First),
            other => bail!("unknown t2m_rule {other:?} (expected \"stable\" or \"first\")"),
        }
    }
}

pub fn features(name: &str) -> Result<FeatureSet> {
    FeatureSet::from_name(name).with_context(|| format!("unknown feature set {name:?}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.horizons;
        let same = |a: f64, b: f64| (a - b).abs() < 1e-9;
        if !same(h.observation_seconds, OBS_LEN as f64 * OBS_DT)
            || h.prediction_steps != PRED_LEN
            || !same(h.observation_step, OBS_DT)
            || !same(h.prediction_step, PRED_DT)
        {
            bail!(
                "horizons must match the record schema: {} s observed at {} s, {} steps of {} s",
                OBS_LEN as f64 * OBS_DT,
                OBS_DT,
                PRED_LEN,
                PRED_DT
            );
        }
        if !(self.data.stride > 0.0) {
            bail!("data.stride must be positive");
        }
        if self.model.hidden == 0 || self.model.batch == 0 || self.model.epochs == 0 {
            bail!("model.hidden, model.batch and model.epochs must be positive");
        }
        if !(self.model.lr > 0.0) {
            bail!("model.lr must be positive");
        }
        features(&self.model.di_features)?;
        features(&self.model.mt_features)?;
        features(&self.model.mtp_features)?;
        self.eval.rule()?;
        self.risk.validate().map_err(|e| anyhow::anyhow!("risk: {e}"))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_takes_defaults() {
        let c: RunConfig = toml::from_str("seed = 7\n[risk]\nparticles = 500\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.risk.particles, 500);
        assert_eq!(c.risk.threshold, 0.4);
        assert_eq!(c.model.hidden, 128);
        assert_eq!(c.data.corpus, CorpusSpec::default());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_horizons() {
        assert!(toml::from_str::<RunConfig>("sed = 7").is_err());
        let mut c = RunConfig::default();
        c.horizons.prediction_steps = 12;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.model.di_features = "nope".into();
        assert!(c.validate().is_err());
    }
}
