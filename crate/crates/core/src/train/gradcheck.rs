//! Reverse-mode gradients of the full training loss against central
//! finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::config::ModelConfig;
use crate::data::{VideoFeatures, Vocab};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Gradients smaller than this in both estimates are compared absolutely.
/// Central differences at `STEP` on an O(1) loss carry roughly
/// `ε·|L|/STEP ≈ 2e-11` of roundoff, so relative error is only meaningful
/// above about 1e-6; below it the test is `|a − n| < tolerance · 1e-6`.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub group: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn max_abs_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_abs_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GroupError> {
        self.groups.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_error < self.tolerance)
    }

    /// `Err` naming the worst group if any group exceeds the tolerance.
    pub fn into_result(self) -> Result<Self> {
        match self.worst() {
            Some(w) if w.max_rel_error >= self.tolerance => {
                Err(Error::GradientCheck { group: w.group.clone(), error: w.max_rel_error, tolerance: self.tolerance })
            }
            _ => Ok(self),
        }
    }
}

/// `|a − n| / max(|a|, |n|, FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// A seeded question/video/label triple sized for `config`.
pub struct Probe {
    pub tokens: Vec<usize>,
    pub video: VideoFeatures,
    pub label: usize,
}

/// Builds a model with `answers` classes and a random probe of `question_len` tokens.
pub fn micro_setup(config: &ModelConfig, answers: usize, question_len: usize, frames: usize) -> Result<(Model, Probe)> {
    let words = question_len + 4;
    let qv = Vocab::from_tokens((0..words).map(|i| format!("w{i}")).collect());
    let av = Vocab::from_tokens((0..answers).map(|i| format!("a{i}")).collect());
    let model = Model::new(config.clone(), qv, av)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6C);
    let n = config.n_clips;
    let video = VideoFeatures {
        video_id: "probe".into(),
        n_clips: n,
        frames_per_clip: frames,
        app_dim: config.app_dim,
        motion_dim: config.motion_dim,
        appearance: (0..n * frames * config.app_dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
        motion: (0..n * config.motion_dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
    };
    let tokens = (0..question_len).map(|_| rng.gen_range(2..words)).collect();
    let label = rng.gen_range(0..answers);
    Ok((model, Probe { tokens, video, label }))
}

fn loss_at(model: &Model, params: &ParamStore, probe: &Probe) -> Result<f64> {
    let mut g = Graph::new(params);
    let f = model.forward(&mut g, &probe.tokens, &probe.video)?;
    let l = model.loss(&mut g, &f, probe.label)?;
    Ok(g.value(l.total).item())
}

/// Compares every parameter entry. `corrupt` may alter an analytic
/// gradient before comparison (used to test the checker itself).
pub fn check_gradients(
    model: &Model,
    probe: &Probe,
    tolerance: f64,
    corrupt: Option<&dyn Fn(&str, &mut Tensor)>,
) -> Result<GradCheckReport> {
    let mut g = Graph::new(&model.params);
    let f = model.forward(&mut g, &probe.tokens, &probe.video)?;
    let l = model.loss(&mut g, &f, probe.label)?;
    g.backward(l.total);
    let mut analytic: Vec<Tensor> = model.params.zeros_like();
    for (id, grad) in g.param_grads() {
        analytic[id.0] = grad.clone();
    }
    drop(g);
    if let Some(c) = corrupt {
        for (id, name, _) in model.params.iter() {
            c(name, &mut analytic[id.0]);
        }
    }

    let mut params = model.params.clone();
    let mut groups = Vec::with_capacity(params.len());
    for id in model.params.ids() {
        let len = params.get(id).len();
        let mut worst = 0.0f64;
        let mut worst_abs = 0.0f64;
        for j in 0..len {
            let original = params.get(id).data()[j];
            params.get_mut(id).data_mut()[j] = original + STEP;
            let plus = loss_at(model, &params, probe)?;
            params.get_mut(id).data_mut()[j] = original - STEP;
            let minus = loss_at(model, &params, probe)?;
            params.get_mut(id).data_mut()[j] = original;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic[id.0].data()[j];
            worst = worst.max(relative_error(a, numeric));
            worst_abs = worst_abs.max((a - numeric).abs());
        }
        groups.push(GroupError { group: model.params.name(id).to_string(), max_rel_error: worst, max_abs_error: worst_abs, entries: len });
    }
    Ok(GradCheckReport { tolerance, groups })
}

/// Gradient check of `config` with `answers` classes and a `question_len`-token probe.
pub fn grad_check(config: &ModelConfig, answers: usize, question_len: usize, tolerance: f64) -> Result<GradCheckReport> {
    let (model, probe) = micro_setup(config, answers, question_len, 2)?;
    check_gradients(&model, &probe, tolerance, None)
}
