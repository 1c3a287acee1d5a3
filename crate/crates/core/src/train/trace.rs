//! Per-step attention and gate dumps for a single question.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, QaInstance};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::unit::ViewWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub question_attention: Vec<f64>,
    pub appearance_mask: Vec<f64>,
    pub motion_mask: Vec<f64>,
    pub view_weights: ViewWeights,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gat_attention: Vec<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub qid: String,
    pub video_id: String,
    pub question: Vec<String>,
    pub qtype: String,
    pub steps: Vec<TraceStep>,
    pub readout_weights: Vec<f64>,
    pub prediction: String,
    pub answer: String,
}

impl TraceDocument {
    /// Mean of the motion and appearance masks over all steps, when both exist.
    pub fn mean_masks(&self) -> Option<(f64, f64)> {
        let mean = |pick: fn(&TraceStep) -> &Vec<f64>| {
            let values: Vec<f64> = self.steps.iter().flat_map(|s| pick(s).iter().copied()).collect();
            (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
        };
        Some((mean(|s| &s.appearance_mask)?, mean(|s| &s.motion_mask)?))
    }
}

/// Runs one question and collects every step's attention values.
pub fn trace_dump(model: &Model, dataset: &Dataset, instance: &QaInstance, with_gat: bool) -> Result<TraceDocument> {
    let video = dataset
        .video(&instance.video_id)
        .ok_or_else(|| Error::InvalidArgument(format!("video {} not in dataset", instance.video_id)))?;
    let p = model.predict(&instance.tokens, video, with_gat)?;
    let steps = p
        .traces
        .into_iter()
        .enumerate()
        .map(|(i, t)| TraceStep {
            step: i + 1,
            question_attention: t.question_attention,
            appearance_mask: t.appearance_mask,
            motion_mask: t.motion_mask,
            view_weights: t.view_weights,
            gat_attention: t.gat_attention,
        })
        .collect();
    Ok(TraceDocument {
        qid: instance.qid.clone(),
        video_id: instance.video_id.clone(),
        question: instance.tokens.clone(),
        qtype: instance.qtype.name().to_string(),
        steps,
        readout_weights: p.readout_weights,
        prediction: model.answer_vocab.token(p.answer).unwrap_or_default().to_string(),
        answer: instance.answer.clone(),
    })
}
