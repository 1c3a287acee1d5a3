//! On-disk dataset format.
//!
//! A split directory holds `manifest.json`, `features.bin` (little-endian
//! f32, appearance block then motion block per video at the declared byte
//! offsets), `qa.jsonl`, optionally `scenes.jsonl`, and the vocab files.
//! Externally extracted features may instead live in `features/<video_id>.bin`,
//! one file per video with offsets relative to that file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::scene::{Prototypes, SyntheticScene};
use crate::data::vocab::build_vocab;
use crate::data::{Dataset, QaInstance, VideoFeatures};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const FEATURES: &str = "features.bin";
pub const FEATURE_DIR: &str = "features";
pub const QA: &str = "qa.jsonl";
pub const SCENES: &str = "scenes.jsonl";
pub const QUESTION_VOCAB: &str = "question_vocab.txt";
pub const ANSWER_VOCAB: &str = "answer_vocab.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub n_clips: usize,
    pub f_frames: usize,
    pub d_app: usize,
    pub d_mot: usize,
    pub appearance_offset: u64,
    pub motion_offset: u64,
}

impl VideoRecord {
    fn appearance_bytes(&self) -> u64 {
        4 * (self.n_clips * self.f_frames * self.d_app) as u64
    }

    fn motion_bytes(&self) -> u64 {
        4 * (self.n_clips * self.d_mot) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dataset_seed: u64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub prototypes: Option<Prototypes>,
    pub videos: Vec<VideoRecord>,
}

fn push_f32(buf: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn jsonl<T: Serialize>(items: &[T], context: &str) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|source| Error::Json { context: context.into(), source })?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Writes one split to `dir`, creating it if needed.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bytes = Vec::new();
    let mut records = Vec::with_capacity(dataset.videos.len());
    for v in &dataset.videos {
        v.check_shape()?;
        let appearance_offset = bytes.len() as u64;
        push_f32(&mut bytes, &v.appearance);
        let motion_offset = bytes.len() as u64;
        push_f32(&mut bytes, &v.motion);
        records.push(VideoRecord {
            video_id: v.video_id.clone(),
            n_clips: v.n_clips,
            f_frames: v.frames_per_clip,
            d_app: v.app_dim,
            d_mot: v.motion_dim,
            appearance_offset,
            motion_offset,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        dataset_seed: dataset.seed,
        noise: dataset.noise,
        prototypes: dataset.prototypes.clone(),
        videos: records,
    };
    let text = serde_json::to_vec_pretty(&manifest).map_err(|source| Error::Json { context: "manifest".into(), source })?;
    write_file(&dir.join(MANIFEST), &text)?;
    let mut f = fs::File::create(dir.join(FEATURES)).map_err(|e| Error::io(dir.join(FEATURES), e))?;
    f.write_all(&bytes).map_err(|e| Error::io(dir.join(FEATURES), e))?;
    write_file(&dir.join(QA), &jsonl(&dataset.instances, "qa record")?)?;
    if !dataset.scenes.is_empty() {
        write_file(&dir.join(SCENES), &jsonl(&dataset.scenes, "scene record")?)?;
    }
    let (question, answer) = build_vocab(&dataset.instances);
    write_file(&dir.join(QUESTION_VOCAB), question.to_text().as_bytes())?;
    write_file(&dir.join(ANSWER_VOCAB), answer.to_text().as_bytes())?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn decode_f32(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
}

/// Extracts one video's arrays from `bytes`, checking that the record is
/// laid out at `expected_offset` and fits in the buffer.
fn slice_video(file: &Path, bytes: &[u8], r: &VideoRecord, expected_offset: u64) -> Result<VideoFeatures> {
    let record = format!("video {}", r.video_id);
    if r.n_clips == 0 {
        return Err(Error::corrupt(file, record, "n_clips is 0"));
    }
    if r.appearance_offset != expected_offset {
        return Err(Error::corrupt(
            file,
            record,
            format!("offset mismatch: appearance_offset {} but previous data ends at {expected_offset}", r.appearance_offset),
        ));
    }
    let motion_start = r.appearance_offset + r.appearance_bytes();
    if r.motion_offset != motion_start {
        return Err(Error::corrupt(
            file,
            record,
            format!("offset mismatch: motion_offset {} but appearance block ends at {motion_start}", r.motion_offset),
        ));
    }
    let end = motion_start + r.motion_bytes();
    if end > bytes.len() as u64 {
        return Err(Error::corrupt(
            file,
            record,
            format!(
                "truncated: declared shape (N={}, F={}, D_app={}, D_mot={}) needs bytes up to {end}, file has {}",
                r.n_clips,
                r.f_frames,
                r.d_app,
                r.d_mot,
                bytes.len()
            ),
        ));
    }
    Ok(VideoFeatures {
        video_id: r.video_id.clone(),
        n_clips: r.n_clips,
        frames_per_clip: r.f_frames,
        app_dim: r.d_app,
        motion_dim: r.d_mot,
        appearance: decode_f32(&bytes[r.appearance_offset as usize..motion_start as usize]),
        motion: decode_f32(&bytes[motion_start as usize..end as usize]),
    })
}

fn read_features(dir: &Path, manifest: &Manifest) -> Result<Vec<VideoFeatures>> {
    let packed = dir.join(FEATURES);
    let mut videos = Vec::with_capacity(manifest.videos.len());
    if packed.exists() {
        let bytes = read_bytes(&packed)?;
        let mut offset = 0u64;
        for r in &manifest.videos {
            let v = slice_video(&packed, &bytes, r, offset)?;
            offset = r.motion_offset + r.motion_bytes();
            videos.push(v);
        }
        if offset != bytes.len() as u64 {
            return Err(Error::corrupt(&packed, "end of file", format!("{} trailing bytes after the last video", bytes.len() as u64 - offset)));
        }
    } else {
        for r in &manifest.videos {
            let path = dir.join(FEATURE_DIR).join(format!("{}.bin", r.video_id));
            let bytes = read_bytes(&path)?;
            let v = slice_video(&path, &bytes, r, 0)?;
            let end = r.motion_offset + r.motion_bytes();
            if end != bytes.len() as u64 {
                return Err(Error::corrupt(&path, format!("video {}", r.video_id), format!("{} trailing bytes", bytes.len() as u64 - end)));
            }
            videos.push(v);
        }
    }
    Ok(videos)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| Error::corrupt(path, format!("line {}", i + 1), e.to_string()))?;
        out.push(item);
    }
    Ok(out)
}

/// Reads a split written by [`write_dataset`] or an external feature
/// directory with a compatible manifest.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST);
    let text = read_bytes(&manifest_path)?;
    let manifest: Manifest =
        serde_json::from_slice(&text).map_err(|e| Error::corrupt(&manifest_path, "manifest", e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::corrupt(&manifest_path, "manifest", format!("unsupported format_version {}", manifest.format_version)));
    }
    let videos = read_features(dir, &manifest)?;
    let qa_path = dir.join(QA);
    let instances: Vec<QaInstance> = read_jsonl(&qa_path)?;
    let mut seen = std::collections::HashSet::new();
    for v in &videos {
        if !seen.insert(v.video_id.as_str()) {
            return Err(Error::corrupt(&manifest_path, format!("video {}", v.video_id), "duplicate video id"));
        }
    }
    for (i, q) in instances.iter().enumerate() {
        if !seen.contains(q.video_id.as_str()) {
            return Err(Error::corrupt(&qa_path, format!("line {} ({})", i + 1, q.qid), format!("unknown video_id {}", q.video_id)));
        }
    }
    let scenes_path = dir.join(SCENES);
    let scenes: Vec<SyntheticScene> = if scenes_path.exists() { read_jsonl(&scenes_path)? } else { Vec::new() };
    Dataset::new(manifest.dataset_seed, manifest.noise, manifest.prototypes, videos, instances, scenes)
}

/// Path of a split directory under a dataset root.
pub fn split_dir(root: &Path, split: crate::data::Split) -> PathBuf {
    root.join(split.name())
}
