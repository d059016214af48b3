//! Serializable mirrors of the core configuration types.

use kucnet_core::model::{Activation, ModelConfig};
use kucnet_core::subgraph::Pruning;
use kucnet_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    Ppr,
    Random,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub sampling: Sampling,
    pub k: usize,
    pub depth: usize,
    pub dim: usize,
    pub att_dim: usize,
    pub activation: String,
    pub attention: bool,
    pub negatives_per_positive: usize,
    pub exclude_targets: bool,
    pub target_fraction: f64,
    pub patience: Option<usize>,
    pub validation_n: usize,
    pub seed: u64,
}

impl From<&TrainConfig> for TrainSettings {
    fn from(c: &TrainConfig) -> Self {
        let (sampling, k) = match c.pruning {
            Pruning::None => (Sampling::None, 0),
            Pruning::Ppr(k) => (Sampling::Ppr, k),
            Pruning::Random(k) => (Sampling::Random, k),
        };
        Self {
            learning_rate: c.learning_rate,
            weight_decay: c.weight_decay,
            dropout: c.dropout,
            batch_size: c.batch_size,
            epochs: c.epochs,
            sampling,
            k,
            depth: c.depth,
            dim: c.dim,
            att_dim: c.att_dim,
            activation: c.activation.name().to_string(),
            attention: c.attention,
            negatives_per_positive: c.negatives_per_positive,
            exclude_targets: c.exclude_targets,
            target_fraction: c.target_fraction,
            patience: c.patience,
            validation_n: c.validation_n,
            seed: c.seed,
        }
    }
}

impl TryFrom<&TrainSettings> for TrainConfig {
    type Error = Error;

    fn try_from(s: &TrainSettings) -> Result<Self> {
        Ok(TrainConfig {
            learning_rate: s.learning_rate,
            weight_decay: s.weight_decay,
            dropout: s.dropout,
            batch_size: s.batch_size,
            epochs: s.epochs,
            pruning: pruning(s.sampling, s.k),
            depth: s.depth,
            dim: s.dim,
            att_dim: s.att_dim,
            activation: activation(&s.activation)?,
            attention: s.attention,
            negatives_per_positive: s.negatives_per_positive,
            exclude_targets: s.exclude_targets,
            target_fraction: s.target_fraction,
            patience: s.patience,
            validation_n: s.validation_n,
            seed: s.seed,
        })
    }
}

pub fn pruning(sampling: Sampling, k: usize) -> Pruning {
    match sampling {
        Sampling::None => Pruning::None,
        Sampling::Ppr => Pruning::Ppr(k),
        Sampling::Random => Pruning::Random(k),
    }
}

pub fn activation(name: &str) -> Result<Activation> {
    Activation::from_name(name).ok_or_else(|| Error::Usage(format!("unknown activation `{name}`")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dim: usize,
    pub att_dim: usize,
    pub depth: usize,
    pub relation_count: usize,
    pub activation: String,
    pub attention: bool,
}

impl From<ModelConfig> for ModelSpec {
    fn from(c: ModelConfig) -> Self {
        Self {
            dim: c.dim,
            att_dim: c.att_dim,
            depth: c.depth,
            relation_count: c.relation_count,
            activation: c.activation.name().to_string(),
            attention: c.attention,
        }
    }
}

impl TryFrom<&ModelSpec> for ModelConfig {
    type Error = Error;

    fn try_from(s: &ModelSpec) -> Result<Self> {
        let mut c = ModelConfig::new(s.dim, s.att_dim, s.depth, s.relation_count);
        c.activation = activation(&s.activation)?;
        c.attention = s.attention;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_settings_round_trip() {
        let c = TrainConfig {
            pruning: Pruning::Random(7),
            activation: Activation::Tanh,
            patience: Some(3),
            ..TrainConfig::default()
        };
        let s = TrainSettings::from(&c);
        let json = serde_json::to_string(&s).unwrap();
        let back: TrainSettings = serde_json::from_str(&json).unwrap();
        assert_eq!(TrainConfig::try_from(&back).unwrap(), c);
    }
}
