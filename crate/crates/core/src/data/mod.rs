//! Synthetic video-QA data: scenes, rendered features, templated questions,
//! the on-disk dataset format and vocabularies.

pub mod io;
pub mod qa;
pub mod scene;
pub mod vocab;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::config::DataConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use io::{read_dataset, write_dataset};
pub use qa::{generate_qa, QaInstance, QuestionType};
pub use scene::{generate_scene, render_features, Prototypes, SyntheticScene};
pub use vocab::{build_vocab, Vocab};

/// Raw features of one video: appearance `[N × F × D_app]` and motion
/// `[N × D_mot]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatures {
    pub video_id: String,
    pub n_clips: usize,
    pub frames_per_clip: usize,
    pub app_dim: usize,
    pub motion_dim: usize,
    pub appearance: Vec<f32>,
    pub motion: Vec<f32>,
}

impl VideoFeatures {
    pub fn check_shape(&self) -> Result<()> {
        let app = self.n_clips * self.frames_per_clip * self.app_dim;
        let mot = self.n_clips * self.motion_dim;
        if self.appearance.len() != app || self.motion.len() != mot {
            return Err(Error::InvalidArgument(format!(
                "video {}: expected {app} appearance and {mot} motion values, got {} and {}",
                self.video_id,
                self.appearance.len(),
                self.motion.len()
            )));
        }
        Ok(())
    }

    /// Appearance frames of each clip as `[F × D_app]` tensors.
    pub fn appearance_clips(&self) -> Vec<Tensor> {
        let per_clip = self.frames_per_clip * self.app_dim;
        self.appearance
            .chunks(per_clip.max(1))
            .take(self.n_clips)
            .map(|c| Tensor::from_vec(self.frames_per_clip, self.app_dim, c.iter().map(|&x| x as f64).collect()))
            .collect()
    }

    /// Appearance frames regrouped by time step: entry `f` is `[N × D_app]`,
    /// row `i` being frame `f` of clip `i`.
    pub fn appearance_by_frame(&self) -> Vec<Tensor> {
        (0..self.frames_per_clip)
            .map(|f| {
                let mut t = Tensor::zeros(self.n_clips, self.app_dim);
                for i in 0..self.n_clips {
                    let start = (i * self.frames_per_clip + f) * self.app_dim;
                    for (dst, &src) in t.row_mut(i).iter_mut().zip(&self.appearance[start..start + self.app_dim]) {
                        *dst = src as f64;
                    }
                }
                t
            })
            .collect()
    }

    pub fn motion_tensor(&self) -> Tensor {
        Tensor::from_vec(self.n_clips, self.motion_dim, self.motion.iter().map(|&x| x as f64).collect())
    }

    /// Reorders clips; `order[i]` is the source clip of output clip `i`.
    pub fn permute_clips(&self, order: &[usize]) -> Self {
        let app = self.frames_per_clip * self.app_dim;
        let mut out = self.clone();
        out.appearance.clear();
        out.motion.clear();
        for &src in order {
            out.appearance.extend_from_slice(&self.appearance[src * app..(src + 1) * app]);
            out.motion.extend_from_slice(&self.motion[src * self.motion_dim..(src + 1) * self.motion_dim]);
        }
        out
    }
}

/// One split: videos, questions and (for synthetic data) the latent scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub noise: f64,
    pub prototypes: Option<Prototypes>,
    pub videos: Vec<VideoFeatures>,
    pub instances: Vec<QaInstance>,
    pub scenes: Vec<SyntheticScene>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(
        seed: u64,
        noise: f64,
        prototypes: Option<Prototypes>,
        videos: Vec<VideoFeatures>,
        instances: Vec<QaInstance>,
        scenes: Vec<SyntheticScene>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(videos.len());
        for (i, v) in videos.iter().enumerate() {
            v.check_shape()?;
            if index.insert(v.video_id.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate video id {}", v.video_id)));
            }
        }
        for q in &instances {
            if !index.contains_key(&q.video_id) {
                return Err(Error::InvalidArgument(format!("question {} refers to unknown video {}", q.qid, q.video_id)));
            }
        }
        Ok(Self { seed, noise, prototypes, videos, instances, scenes, index })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn video(&self, video_id: &str) -> Option<&VideoFeatures> {
        self.index.get(video_id).map(|&i| &self.videos[i])
    }

    pub fn scene(&self, video_id: &str) -> Option<&SyntheticScene> {
        self.scenes.iter().find(|s| s.video_id == video_id)
    }

    /// Keeps the first `n` questions and the videos they use.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let instances: Vec<QaInstance> = self.instances.iter().take(n).cloned().collect();
        let keep: std::collections::HashSet<&str> = instances.iter().map(|q| q.video_id.as_str()).collect();
        let videos = self.videos.iter().filter(|v| keep.contains(v.video_id.as_str())).cloned().collect();
        let scenes = self.scenes.iter().filter(|s| keep.contains(s.video_id.as_str())).cloned().collect();
        Self::new(self.seed, self.noise, self.prototypes.clone(), videos, instances, scenes)
    }

    /// Fraction of questions whose answer is the most frequent answer.
    pub fn majority_baseline(&self) -> f64 {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for q in &self.instances {
            *counts.entry(q.answer.as_str()).or_default() += 1;
        }
        let best = counts.values().copied().max().unwrap_or(0);
        if self.instances.is_empty() {
            0.0
        } else {
            best as f64 / self.instances.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates one split of `n_pairs` questions. Prototypes depend only on
/// `config.data_seed`, so all splits of a dataset share them.
pub fn generate_split(config: &DataConfig, split: Split, n_pairs: usize) -> Result<Dataset> {
    config.validate()?;
    let prototypes = Prototypes::generate(mix_seed(config.data_seed, 0), config.app_dim, config.motion_dim);
    let split_seed = mix_seed(config.data_seed, split.tag());
    let n_videos = n_pairs.div_ceil(config.qa_per_video);
    let mut videos = Vec::with_capacity(n_videos);
    let mut scenes = Vec::with_capacity(n_videos);
    let mut instances = Vec::with_capacity(n_pairs);
    for v in 0..n_videos {
        let video_seed = mix_seed(split_seed, v as u64);
        let video_id = format!("{}-v{:05}", split.name(), v);
        let scene = generate_scene(mix_seed(video_seed, 1), config, video_id.clone());
        let features = render_features(&scene, &prototypes, config, mix_seed(video_seed, 2))?;
        let want = config.qa_per_video.min(n_pairs - instances.len());
        let qa = generate_qa(&scene, mix_seed(video_seed, 3), config.question_style, want, &video_id);
        instances.extend(qa);
        videos.push(features);
        scenes.push(scene);
    }
    for (i, q) in instances.iter_mut().enumerate() {
        q.qid = format!("{}-{:06}", split.name(), i);
    }
    Dataset::new(config.data_seed, config.noise, Some(prototypes), videos, instances, scenes)
}

/// Train, validation and test splits sized by `config`.
pub fn generate_all(config: &DataConfig) -> Result<[Dataset; 3]> {
    Ok([
        generate_split(config, Split::Train, config.n_train)?,
        generate_split(config, Split::Val, config.n_val)?,
        generate_split(config, Split::Test, config.n_test)?,
    ])
}
