//! Trains and scores one model per architecture variant.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::data::Dataset;
use crate::error::Result;
use crate::train::trainer::{evaluate, train, EvalReport};
use crate::variant::Variant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub variant: String,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub test: EvalReport,
    pub final_train_loss: f64,
    #[serde(rename = "final_train_Lc")]
    pub final_train_lc: f64,
    #[serde(rename = "final_train_Ld")]
    pub final_train_ld: f64,
}

/// Trains `variant` under `config` and evaluates its best-validation
/// checkpoint on `test`.
pub fn run_ablation(
    variant: Variant,
    config: &ModelConfig,
    echo: BTreeMap<String, String>,
    train_set: &Dataset,
    val_set: &Dataset,
    test_set: &Dataset,
) -> Result<AblationResult> {
    let config = ModelConfig { variant, ..config.clone() };
    let outcome = train(&config, echo, train_set, val_set, |_| Ok(()))?;
    let test = evaluate(&outcome.best.model, test_set)?;
    let last = outcome.history.last();
    let best = outcome.history.get(outcome.best.epoch.saturating_sub(1));
    Ok(AblationResult {
        variant: variant.name().to_string(),
        best_epoch: outcome.best.epoch,
        best_val_acc: best.map_or(0.0, |r| r.val_acc),
        test,
        final_train_loss: last.map_or(0.0, |r| r.train_loss),
        final_train_lc: last.map_or(0.0, |r| r.train_lc),
        final_train_ld: last.map_or(0.0, |r| r.train_ld),
    })
}
