//! Full-batch training: joint objective assembly, Adam updates, early
//! stopping on validation accuracy, and multi-seed fan-out.

mod model;
mod run;

pub use model::{accuracy, Cg3Model, ModelViews, Predictions};
pub use run::{train, train_model, train_seeds, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::encoders::EncoderError;
use crate::graphdata::DataError;
use crate::losses::{LossError, LossWeights};
use crate::numcore::NumError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{split} split is empty")]
    EmptySplit { split: &'static str },
    #[error("node {node} in the {split} split has no label")]
    UnlabeledInSplit { split: &'static str, node: usize },
    #[error("non-finite {component} loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, component: &'static str },
    #[error("{component} failed at epoch {epoch}: {source}")]
    AtEpoch { epoch: usize, component: &'static str, source: Box<TrainError> },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Which loss terms participate. Ablation modes zero the matching weights;
/// they change nothing else about the run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Full,
    NoContrastive,
    NoGenerative,
    GcnBaseline,
}

impl TrainMode {
    pub const NAMES: [&'static str; 4] =
        ["full", "no-contrastive", "no-generative", "gcn-baseline"];

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Full => "full",
            TrainMode::NoContrastive => "no-contrastive",
            TrainMode::NoGenerative => "no-generative",
            TrainMode::GcnBaseline => "gcn-baseline",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(TrainMode::Full),
            "no-contrastive" => Ok(TrainMode::NoContrastive),
            "no-generative" => Ok(TrainMode::NoGenerative),
            "gcn-baseline" => Ok(TrainMode::GcnBaseline),
            other => Err(format!(
                "unknown mode '{}'; expected one of {}",
                other,
                Self::NAMES.join(", ")
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_iters: usize,
    pub hidden: usize,
    pub levels: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub weights: LossWeights,
    /// `None` picks the exact denominator when the graph is small enough and
    /// column sampling otherwise.
    pub exact_contrast: Option<bool>,
    pub neg_ratio: f64,
    pub normalize_rows: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iters: 500,
            hidden: 128,
            levels: 2,
            dropout: 0.5,
            lr: 0.01,
            weight_decay: 5e-4,
            patience: 100,
            seed: 0,
            mode: TrainMode::Full,
            weights: LossWeights::default(),
            exact_contrast: None,
            neg_ratio: 1.0,
            normalize_rows: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.max_iters == 0 {
            return Err(TrainError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(TrainError::InvalidConfig("hidden width must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TrainError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(TrainError::InvalidConfig(format!("learning rate {} must be positive", self.lr)));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(TrainError::InvalidConfig(format!(
                "weight decay {} must be nonnegative",
                self.weight_decay
            )));
        }
        if !self.neg_ratio.is_finite() || self.neg_ratio < 0.0 {
            return Err(TrainError::InvalidConfig(format!(
                "negative sampling ratio {} must be nonnegative",
                self.neg_ratio
            )));
        }
        self.weights
            .validate()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }

    /// Loss weights after applying the mode: ablations zero terms, nothing
    /// more, so `--mode gcn-baseline` and explicit zero weights coincide.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights.clone();
        match self.mode {
            TrainMode::Full => {}
            TrainMode::NoContrastive => w.lambda_ssc = 0.0,
            TrainMode::NoGenerative => w.lambda_g2 = 0.0,
            TrainMode::GcnBaseline => {
                w.lambda_ssc = 0.0;
                w.lambda_g2 = 0.0;
            }
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub ce: f64,
    pub uc: f64,
    pub sc: f64,
    pub g2: f64,
    pub total: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub test_acc: f64,
    pub wall_secs: f64,
}
