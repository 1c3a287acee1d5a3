//! Dual-visual graph reasoning for video question answering.
//!
//! Clip features from an appearance and a motion stream are gated by the
//! question, passed through four graph-attention networks (two view-specific,
//! two cross-view), fused per view and updated residually over several
//! reasoning steps. The final streams are fused with MFB, pooled by an
//! attention readout and classified into an answer vocabulary.
//!
//! Training adds two constraints on the graph embeddings: the cross-view
//! embeddings of both streams should induce the same clip-similarity
//! structure, and each view-specific embedding should be independent (by
//! HSIC) of its cross-view counterpart.
//!
//! Everything runs on a small tape-based autodiff engine over dense `f64`
//! matrices ([`autodiff::Graph`]); [`data`] generates synthetic scenes with
//! exactly known answers, and [`train`] holds the training and evaluation
//! harness used by the `dualvgr` binary.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod decoder;
pub mod encoders;
pub mod error;
pub mod losses;
pub mod model;
pub mod params;
pub mod tensor;
pub mod train;
pub mod unit;
pub mod variant;

pub use config::{DataConfig, ModelConfig, RunConfig};
pub use error::{Error, Result};
pub use model::Model;
pub use variant::Variant;
