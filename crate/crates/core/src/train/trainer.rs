//! Mini-batch training with best-validation checkpointing, and evaluation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::config::ModelConfig;
use crate::data::{build_vocab, mix_seed, Dataset, QuestionType};
use crate::decoder::argmax;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::params::ParamId;
use crate::tensor::Tensor;
use crate::train::checkpoint::Checkpoint;
use crate::train::optim::{Adam, AdamSettings};

/// Loss values and parameter gradients of one instance.
#[derive(Debug, Clone)]
pub struct SampleGradients {
    pub total: f64,
    pub task: f64,
    pub consistency: f64,
    pub disparity: f64,
    pub grads: Vec<(ParamId, Tensor)>,
}

/// Runs forward and backward for one question.
pub fn sample_gradients(model: &Model, tokens: &[usize], video: &crate::data::VideoFeatures, label: usize) -> Result<SampleGradients> {
    let mut g = Graph::new(&model.params);
    let f = model.forward(&mut g, tokens, video)?;
    let l = model.loss(&mut g, &f, label)?;
    let out = SampleGradients {
        total: g.value(l.total).item(),
        task: g.value(l.task).item(),
        consistency: g.value(l.consistency).item(),
        disparity: g.value(l.disparity).item(),
        grads: Vec::new(),
    };
    g.backward(l.total);
    let grads = g.param_grads().map(|(id, t)| (id, t.clone())).collect();
    Ok(SampleGradients { grads, ..out })
}

/// One epoch's metrics; written as a line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(rename = "train_Lt")]
    pub train_lt: f64,
    #[serde(rename = "train_Lc")]
    pub train_lc: f64,
    #[serde(rename = "train_Ld")]
    pub train_ld: f64,
    pub val_acc: f64,
    pub per_qtype: BTreeMap<String, f64>,
    /// Resolved configuration the run was started with.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeAccuracy {
    pub correct: usize,
    pub total: usize,
}

impl TypeAccuracy {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_qtype: BTreeMap<QuestionType, TypeAccuracy>,
}

impl EvalReport {
    pub fn per_qtype_accuracy(&self) -> BTreeMap<String, f64> {
        self.per_qtype.iter().map(|(k, v)| (k.name().to_string(), v.accuracy())).collect()
    }
}

fn pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidConfig(format!("cannot start {workers} workers: {e}")))
}

/// Maps `f` over `items`, in parallel when a pool is given; output order
/// always matches input order.
fn ordered_map<T: Sync, U: Send>(pool: &Option<rayon::ThreadPool>, items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    match pool {
        Some(p) => p.install(|| items.par_iter().map(&f).collect()),
        None => items.iter().map(f).collect(),
    }
}

/// Checks that the dataset can be scored by `model`: every answer is in the
/// answer vocabulary and feature widths match.
pub fn check_compatible(model: &Model, dataset: &Dataset) -> Result<()> {
    for q in &dataset.instances {
        if model.answer_vocab.get(&q.answer).is_none() {
            return Err(Error::InvalidCheckpoint(format!(
                "answer {:?} of question {} is not in the model's answer vocabulary",
                q.answer, q.qid
            )));
        }
    }
    for v in &dataset.videos {
        if v.app_dim != model.config.app_dim || v.motion_dim != model.config.motion_dim {
            return Err(Error::InvalidCheckpoint(format!(
                "video {} has feature dims ({}, {}), model was trained on ({}, {})",
                v.video_id, v.app_dim, v.motion_dim, model.config.app_dim, model.config.motion_dim
            )));
        }
    }
    Ok(())
}

fn score(model: &Model, dataset: &Dataset, workers: usize) -> Result<EvalReport> {
    let pool = pool(workers)?;
    let outcomes = ordered_map(&pool, &dataset.instances, |q| -> Result<bool> {
        let video = dataset.video(&q.video_id).expect("dataset index is consistent");
        let logits = model.logits(&q.tokens, video)?;
        Ok(model.answer_vocab.get(&q.answer) == Some(argmax(&logits)))
    });
    let mut per_qtype: BTreeMap<QuestionType, TypeAccuracy> = BTreeMap::new();
    let mut correct = 0;
    for (q, ok) in dataset.instances.iter().zip(outcomes) {
        let ok = ok?;
        let e = per_qtype.entry(q.qtype).or_insert(TypeAccuracy { correct: 0, total: 0 });
        e.total += 1;
        if ok {
            e.correct += 1;
            correct += 1;
        }
    }
    let total = dataset.len();
    let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
    Ok(EvalReport { accuracy, correct, total, per_qtype })
}

/// Overall and per-question-type accuracy. Answers outside the model's
/// vocabulary are an error.
pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<EvalReport> {
    check_compatible(model, dataset)?;
    score(model, dataset, model.config.effective_workers())
}

struct Encoded {
    tokens: Vec<usize>,
    label: usize,
    video: usize,
}

/// Holds the model and optimizer across epochs.
pub struct Trainer {
    pub model: Model,
    pub optimizer: Adam,
    pub history: Vec<EpochRecord>,
    pub config_echo: BTreeMap<String, String>,
    rng: ChaCha8Rng,
    pool: Option<rayon::ThreadPool>,
}

/// Mean loss terms over one epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochLosses {
    pub total: f64,
    pub task: f64,
    pub consistency: f64,
    pub disparity: f64,
}

fn check_finite(s: &SampleGradients, epoch: usize, batch: usize) -> Result<()> {
    for (term, value) in [("L_t", s.task), ("L_c", s.consistency), ("L_d", s.disparity)] {
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { term, epoch, batch, value });
        }
    }
    if !s.total.is_finite() {
        return Err(Error::NonFiniteLoss { term: "total", epoch, batch, value: s.total });
    }
    Ok(())
}

impl Trainer {
    pub fn new(model: Model) -> Result<Self> {
        let optimizer = Adam::new(&model.params, AdamSettings::new(model.config.learning_rate));
        let rng = ChaCha8Rng::seed_from_u64(mix_seed(model.config.seed, 0xBA7C));
        let pool = pool(model.config.effective_workers())?;
        Ok(Self { model, optimizer, history: Vec::new(), config_echo: BTreeMap::new(), rng, pool })
    }

    fn encode(&self, dataset: &Dataset) -> Result<Vec<Encoded>> {
        let index: std::collections::HashMap<&str, usize> =
            dataset.videos.iter().enumerate().map(|(i, v)| (v.video_id.as_str(), i)).collect();
        dataset
            .instances
            .iter()
            .map(|q| {
                let label = self.model.answer_vocab.get(&q.answer).ok_or_else(|| {
                    Error::InvalidArgument(format!("training answer {:?} ({}) not in answer vocabulary", q.answer, q.qid))
                })?;
                Ok(Encoded { tokens: self.model.encode_tokens(&q.tokens), label, video: index[q.video_id.as_str()] })
            })
            .collect()
    }

    /// One pass over `dataset` in a seeded random order. Gradients are
    /// averaged over each batch and summed in a fixed order, so results do
    /// not depend on the number of workers.
    pub fn train_epoch(&mut self, dataset: &Dataset, epoch: usize) -> Result<EpochLosses> {
        let encoded = self.encode(dataset)?;
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        order.shuffle(&mut self.rng);
        let mut sums = EpochLosses::default();
        let n_params = self.model.params.len();
        for (b, batch) in order.chunks(self.model.config.batch_size).enumerate() {
            let model = &self.model;
            let results = ordered_map(&self.pool, batch, |&i| {
                let e = &encoded[i];
                sample_gradients(model, &e.tokens, &dataset.videos[e.video], e.label)
            });
            let mut acc: Vec<Option<Tensor>> = vec![None; n_params];
            for r in results {
                let s = r?;
                check_finite(&s, epoch, b)?;
                sums.total += s.total;
                sums.task += s.task;
                sums.consistency += s.consistency;
                sums.disparity += s.disparity;
                for (id, grad) in s.grads {
                    match &mut acc[id.0] {
                        Some(t) => t.add_assign(&grad),
                        slot @ None => *slot = Some(grad),
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for t in acc.iter_mut().flatten() {
                t.scale_in_place(scale);
            }
            self.optimizer.update(&mut self.model.params, &acc);
        }
        let n = encoded.len().max(1) as f64;
        Ok(EpochLosses { total: sums.total / n, task: sums.task / n, consistency: sums.consistency / n, disparity: sums.disparity / n })
    }

    pub fn snapshot(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            optimizer: self.optimizer.clone(),
            epoch: self.history.len(),
            history: self.history.clone(),
        }
    }
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint of the epoch with the best validation accuracy (earliest on ties).
    pub best: Checkpoint,
    /// State after the final epoch.
    pub last: Checkpoint,
    pub history: Vec<EpochRecord>,
}

/// Trains a fresh model for `config.epochs` epochs. Vocabularies come from
/// the training split. `on_epoch` sees every record as soon as it exists.
pub fn train(
    config: &ModelConfig,
    config_echo: BTreeMap<String, String>,
    train_set: &Dataset,
    val_set: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let (question_vocab, answer_vocab) = build_vocab(&train_set.instances);
    let model = Model::new(config.clone(), question_vocab, answer_vocab)?;
    let mut trainer = Trainer::new(model)?;
    trainer.config_echo = config_echo;
    let mut best: Option<(f64, Checkpoint)> = None;
    for epoch in 1..=config.epochs {
        let losses = trainer.train_epoch(train_set, epoch)?;
        let report = score(&trainer.model, val_set, trainer.model.config.effective_workers())?;
        let record = EpochRecord {
            epoch,
            train_loss: losses.total,
            train_lt: losses.task,
            train_lc: losses.consistency,
            train_ld: losses.disparity,
            val_acc: report.accuracy,
            per_qtype: report.per_qtype_accuracy(),
            config: trainer.config_echo.clone(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} (L_t {:.4}, L_c {:.4}, L_d {:.3e}) val_acc {:.4}",
            record.train_loss,
            record.train_lt,
            record.train_lc,
            record.train_ld,
            record.val_acc
        );
        trainer.history.push(record.clone());
        on_epoch(&record)?;
        if best.as_ref().is_none_or(|(acc, _)| report.accuracy > *acc) {
            best = Some((report.accuracy, trainer.snapshot()));
        }
    }
    let last = trainer.snapshot();
    let mut best = best.map(|(_, c)| c).unwrap_or_else(|| last.clone());
    best.history = trainer.history.clone();
    Ok(TrainOutcome { best, last, history: trainer.history })
}
