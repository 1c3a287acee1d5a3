//! Flat `key = value` configuration.
//!
//! One file configures both the model/trainer ([`ModelConfig`]) and the
//! synthetic data generator ([`DataConfig`]). Keys shared by both (clip
//! count, feature widths) set both. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::variant::Variant;

/// Node-update nonlinearity applied after GAT aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GatActivation {
    Elu,
    Sigmoid,
}

impl FromStr for GatActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "elu" => Ok(Self::Elu),
            "sigmoid" => Ok(Self::Sigmoid),
            other => Err(Error::InvalidConfig(format!("unknown activation {other:?} (expected elu or sigmoid)"))),
        }
    }
}

impl GatActivation {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Elu => "elu",
            Self::Sigmoid => "sigmoid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Clip/question feature width.
    pub d: usize,
    /// Per-head GAT width.
    pub d1: usize,
    pub heads: usize,
    /// Reasoning steps.
    pub steps: usize,
    pub n_clips: usize,
    pub word_dim: usize,
    pub app_dim: usize,
    pub motion_dim: usize,
    pub mfb_factor: usize,
    /// Consistency weight.
    pub gamma: f64,
    /// Disparity (HSIC) weight.
    pub beta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub variant: Variant,
    pub activation: GatActivation,
    pub tied_steps: bool,
    /// Worker threads for per-sample gradients; forced to 1 in deterministic mode.
    pub workers: usize,
    pub deterministic: bool,
}

impl Default for ModelConfig {
    /// Desk-scale defaults.
    fn default() -> Self {
        Self {
            d: 64,
            d1: 16,
            heads: 4,
            steps: 2,
            n_clips: 8,
            word_dim: 300,
            app_dim: 64,
            motion_dim: 64,
            mfb_factor: 5,
            gamma: 1.0,
            beta: 1e-6,
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 25,
            seed: 0,
            variant: Variant::DualVgr,
            activation: GatActivation::Elu,
            tied_steps: false,
            workers: 1,
            deterministic: true,
        }
    }
}

impl ModelConfig {
    /// Width-768 configuration for 2048-wide clip features.
    pub fn full_scale() -> Self {
        Self { d: 768, d1: 192, heads: 4, steps: 4, n_clips: 20, app_dim: 2048, motion_dim: 2048, batch_size: 256, ..Self::default() }
    }

    /// Tiny configuration for finite-difference gradient checks.
    pub fn micro() -> Self {
        Self {
            d: 8,
            d1: 2,
            heads: 4,
            steps: 2,
            n_clips: 3,
            word_dim: 6,
            app_dim: 5,
            motion_dim: 4,
            mfb_factor: 2,
            gamma: 1.0,
            beta: 0.5,
            batch_size: 2,
            epochs: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.heads == 0 || self.d1 == 0 {
            return bad("heads and d1 must be positive".into());
        }
        if self.heads * self.d1 != self.d {
            return bad(format!("heads * d1 = {} * {} must equal d = {}", self.heads, self.d1, self.d));
        }
        if !self.d.is_multiple_of(2) {
            return bad(format!("d = {} must be even for the bidirectional encoders", self.d));
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if self.n_clips == 0 {
            return bad("n_clips must be at least 1".into());
        }
        if self.word_dim == 0 || self.app_dim == 0 || self.motion_dim == 0 || self.mfb_factor == 0 {
            return bad("word_dim, app_dim, motion_dim and mfb_factor must be positive".into());
        }
        if !(self.gamma >= 0.0 && self.beta >= 0.0) {
            return bad(format!("loss weights must be nonnegative (gamma = {}, beta = {})", self.gamma, self.beta));
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate must be nonnegative".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        Ok(())
    }

    pub fn effective_workers(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.workers.max(1)
        }
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "d" => self.d = parse(key, value)?,
            "d1" => self.d1 = parse(key, value)?,
            "heads" | "k" => self.heads = parse(key, value)?,
            "steps" | "t" => self.steps = parse(key, value)?,
            "n_clips" => self.n_clips = parse(key, value)?,
            "word_dim" => self.word_dim = parse(key, value)?,
            "app_dim" => self.app_dim = parse(key, value)?,
            "motion_dim" => self.motion_dim = parse(key, value)?,
            "mfb_factor" => self.mfb_factor = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "learning_rate" | "lr" => self.learning_rate = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "variant" => self.variant = value.parse()?,
            "activation" => self.activation = value.parse()?,
            "tied_steps" => self.tied_steps = parse_bool(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "deterministic" => self.deterministic = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn write_kv(&self, out: &mut String) {
        let _ = writeln!(out, "d = {}", self.d);
        let _ = writeln!(out, "d1 = {}", self.d1);
        let _ = writeln!(out, "heads = {}", self.heads);
        let _ = writeln!(out, "steps = {}", self.steps);
        let _ = writeln!(out, "n_clips = {}", self.n_clips);
        let _ = writeln!(out, "word_dim = {}", self.word_dim);
        let _ = writeln!(out, "app_dim = {}", self.app_dim);
        let _ = writeln!(out, "motion_dim = {}", self.motion_dim);
        let _ = writeln!(out, "mfb_factor = {}", self.mfb_factor);
        let _ = writeln!(out, "gamma = {:?}", self.gamma);
        let _ = writeln!(out, "beta = {:?}", self.beta);
        let _ = writeln!(out, "learning_rate = {:?}", self.learning_rate);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "epochs = {}", self.epochs);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "variant = {}", self.variant.name());
        let _ = writeln!(out, "activation = {}", self.activation.as_str());
        let _ = writeln!(out, "tied_steps = {}", self.tied_steps);
        let _ = writeln!(out, "workers = {}", self.workers);
        let _ = writeln!(out, "deterministic = {}", self.deterministic);
    }
}

/// Question template length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuestionStyle {
    /// About six words.
    Short,
    /// Compositional, about twenty words.
    Long,
    /// Each question picks short or long at random.
    Mixed,
}

impl FromStr for QuestionStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "short" => Ok(Self::Short),
            "long" => Ok(Self::Long),
            "mixed" => Ok(Self::Mixed),
            other => Err(Error::InvalidConfig(format!("unknown question_style {other:?}"))),
        }
    }
}

impl QuestionStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Short => "short",
            Self::Long => "long",
            Self::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub data_seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub qa_per_video: usize,
    pub n_clips: usize,
    pub frames_per_clip: usize,
    /// Raw frames rendered per video before clip splitting; 0 means `n_clips * frames_per_clip`.
    pub total_frames: usize,
    pub app_dim: usize,
    pub motion_dim: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub noise: f64,
    pub question_style: QuestionStyle,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            data_seed: 0,
            n_train: 2000,
            n_val: 400,
            n_test: 400,
            qa_per_video: 5,
            n_clips: 8,
            frames_per_clip: 4,
            total_frames: 0,
            app_dim: 64,
            motion_dim: 64,
            min_objects: 1,
            max_objects: 6,
            noise: 0.1,
            question_style: QuestionStyle::Mixed,
        }
    }
}

impl DataConfig {
    pub fn frames(&self) -> usize {
        if self.total_frames == 0 {
            self.n_clips * self.frames_per_clip
        } else {
            self.total_frames
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_clips == 0 || self.frames_per_clip == 0 {
            return bad("n_clips and frames_per_clip must be positive".into());
        }
        if self.frames() < self.n_clips * self.frames_per_clip {
            return bad(format!(
                "total_frames = {} cannot hold {} clips of {} frames",
                self.frames(),
                self.n_clips,
                self.frames_per_clip
            ));
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects || self.max_objects > 6 {
            return bad(format!("object count range [{}, {}] must lie within [1, 6]", self.min_objects, self.max_objects));
        }
        if self.qa_per_video == 0 {
            return bad("qa_per_video must be positive".into());
        }
        if !(self.noise >= 0.0) {
            return bad("noise must be nonnegative".into());
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "data_seed" => self.data_seed = parse(key, value)?,
            "n_train" => self.n_train = parse(key, value)?,
            "n_val" => self.n_val = parse(key, value)?,
            "n_test" => self.n_test = parse(key, value)?,
            "qa_per_video" => self.qa_per_video = parse(key, value)?,
            "n_clips" => self.n_clips = parse(key, value)?,
            "frames_per_clip" => self.frames_per_clip = parse(key, value)?,
            "total_frames" => self.total_frames = parse(key, value)?,
            "app_dim" => self.app_dim = parse(key, value)?,
            "motion_dim" => self.motion_dim = parse(key, value)?,
            "min_objects" => self.min_objects = parse(key, value)?,
            "max_objects" => self.max_objects = parse(key, value)?,
            "noise" => self.noise = parse(key, value)?,
            "question_style" => self.question_style = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn write_kv(&self, out: &mut String) {
        let _ = writeln!(out, "data_seed = {}", self.data_seed);
        let _ = writeln!(out, "n_train = {}", self.n_train);
        let _ = writeln!(out, "n_val = {}", self.n_val);
        let _ = writeln!(out, "n_test = {}", self.n_test);
        let _ = writeln!(out, "qa_per_video = {}", self.qa_per_video);
        let _ = writeln!(out, "frames_per_clip = {}", self.frames_per_clip);
        let _ = writeln!(out, "total_frames = {}", self.total_frames);
        let _ = writeln!(out, "min_objects = {}", self.min_objects);
        let _ = writeln!(out, "max_objects = {}", self.max_objects);
        let _ = writeln!(out, "noise = {:?}", self.noise);
        let _ = writeln!(out, "question_style = {}", self.question_style.as_str());
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: DataConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_key_values(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim();
        let a = self.model.apply(&key, value)?;
        let b = self.data.apply(&key, value)?;
        if a || b {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("unknown key {key:?}")))
        }
    }

    /// Applies a `key=value` override from the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override {pair:?} is not key=value")))?;
        self.set(k, v)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.data.validate()
    }

    /// The fully resolved configuration in the file format it was read from.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.model.write_kv(&mut out);
        self.data.write_kv(&mut out);
        out
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value, got {raw:?}", lineno + 1)))?;
        map.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    Ok(map)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("bad boolean {value:?} for {key}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
        ModelConfig::micro().validate().unwrap();
        ModelConfig::full_scale().validate().unwrap();
    }

    #[test]
    fn rejects_head_width_mismatch() {
        let cfg = ModelConfig { d1: 15, ..ModelConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn rejects_odd_width_and_zero_steps() {
        let cfg = ModelConfig { d: 9, d1: 3, heads: 3, ..ModelConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig { steps: 0, ..ModelConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nd = 32\nd1=8\n gamma = 100 \nvariant = MVgraph\nnoise = 0.25\n").unwrap();
        assert_eq!(cfg.model.d, 32);
        assert_eq!(cfg.model.gamma, 100.0);
        assert_eq!(cfg.model.variant, Variant::MvGraph);
        assert_eq!(cfg.data.noise, 0.25);
        let mut again = RunConfig::default();
        again.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn shared_keys_set_both_sections() {
        let mut cfg = RunConfig::default();
        cfg.set("n_clips", "12").unwrap();
        assert_eq!(cfg.model.n_clips, 12);
        assert_eq!(cfg.data.n_clips, 12);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.apply_text("colour = red"), Err(Error::InvalidConfig(_))));
        assert!(cfg.set_pair("novalue").is_err());
    }
}
