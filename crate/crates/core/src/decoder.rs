//! Clip fusion (MFB), attention readout over clips and the answer head.

use rand::Rng;

use crate::autodiff::{Graph, NodeId};
use crate::encoders::NORM_EPS;
use crate::params::{Initializer, ParamId};

/// Constant inside the power-normalization root.
pub const POWER_EPS: f64 = 1e-12;

/// Multimodal factorized bilinear pooling of each clip row.
///
/// `a, m [N × d]`, `u_a, u_m [k·d × d]`. The elementwise product of the two
/// projections is sum-pooled over consecutive blocks of `k`, then
/// power-normalized and row L2-normalized. Returns `[N × d]`.
pub fn mfb_fuse(g: &mut Graph, a: NodeId, m: NodeId, u_a: NodeId, u_m: NodeId, factor: usize) -> NodeId {
    let pa = g.matmul_nt(a, u_a);
    let pm = g.matmul_nt(m, u_m);
    let joint = g.mul(pa, pm);
    let pooled = g.sum_pool_cols(joint, factor);
    let powered = g.power_normalize(pooled, POWER_EPS);
    g.row_l2_normalize(powered, NORM_EPS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadoutParams {
    /// `[d × d]`
    pub map: ParamId,
    /// `[1 × d]`
    pub bias: ParamId,
    /// `[1 × d]`
    pub scorer: ParamId,
}

impl ReadoutParams {
    pub fn init<R: Rng>(init: &mut Initializer<'_, R>, name: &str, d: usize) -> Self {
        Self {
            map: init.weight(format!("{name}.map"), d, d),
            bias: init.bias(format!("{name}.bias"), d, d),
            scorer: init.weight(format!("{name}.scorer"), 1, d),
        }
    }
}

/// Softmax attention over clips. Returns `(õ [1 × d], weights [1 × N])`.
pub fn readout(g: &mut Graph, clips: NodeId, map: NodeId, bias: NodeId, scorer: NodeId) -> (NodeId, NodeId) {
    let t = g.matmul_nt(clips, map);
    let t = g.add_row(t, bias);
    let t = g.tanh(t);
    let scores = g.matmul_nt(t, scorer);
    let scores = g.transpose(scores);
    let weights = g.softmax_rows(scores);
    (g.matmul_order_invariant(weights, clips), weights)
}

/// Answer head weights; every bias is its own parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderParams {
    /// `[d × d]`
    pub question: ParamId,
    pub question_bias: ParamId,
    /// `[d × 2d]`
    pub joint: ParamId,
    pub joint_bias: ParamId,
    /// `[d × d]`
    pub hidden: ParamId,
    pub hidden_bias: ParamId,
    /// `[|A| × d]`
    pub output: ParamId,
    pub output_bias: ParamId,
}

impl DecoderParams {
    pub fn init<R: Rng>(init: &mut Initializer<'_, R>, name: &str, d: usize, answers: usize) -> Self {
        Self {
            question: init.weight(format!("{name}.question"), d, d),
            question_bias: init.bias(format!("{name}.question_bias"), d, d),
            joint: init.weight(format!("{name}.joint"), d, 2 * d),
            joint_bias: init.bias(format!("{name}.joint_bias"), d, 2 * d),
            hidden: init.weight(format!("{name}.hidden"), d, d),
            hidden_bias: init.bias(format!("{name}.hidden_bias"), d, d),
            output: init.weight(format!("{name}.output"), answers, d),
            output_bias: init.bias(format!("{name}.output_bias"), answers, d),
        }
    }
}

/// Parameter nodes of the answer head.
#[derive(Debug, Clone, Copy)]
pub struct DecoderNodes {
    pub question: NodeId,
    pub question_bias: NodeId,
    pub joint: NodeId,
    pub joint_bias: NodeId,
    pub hidden: NodeId,
    pub hidden_bias: NodeId,
    pub output: NodeId,
    pub output_bias: NodeId,
}

impl DecoderNodes {
    pub fn bind(g: &mut Graph, p: &DecoderParams) -> Self {
        Self {
            question: g.param(p.question),
            question_bias: g.param(p.question_bias),
            joint: g.param(p.joint),
            joint_bias: g.param(p.joint_bias),
            hidden: g.param(p.hidden),
            hidden_bias: g.param(p.hidden_bias),
            output: g.param(p.output),
            output_bias: g.param(p.output_bias),
        }
    }
}

/// Two ELU layers over `[õ ++ (W_Q·E_Q + b)]`, then answer logits `[1 × |A|]`.
pub fn decode_answer(g: &mut Graph, video: NodeId, question: NodeId, p: &DecoderNodes) -> NodeId {
    let q = g.matmul_nt(question, p.question);
    let q = g.add_row(q, p.question_bias);
    let joint = g.concat_cols(&[video, q]);
    let y = g.matmul_nt(joint, p.joint);
    let y = g.add_row(y, p.joint_bias);
    let y = g.elu(y);
    let y = g.matmul_nt(y, p.hidden);
    let y = g.add_row(y, p.hidden_bias);
    let y = g.elu(y);
    let logits = g.matmul_nt(y, p.output);
    g.add_row(logits, p.output_bias)
}

/// Argmax with ties broken toward the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
