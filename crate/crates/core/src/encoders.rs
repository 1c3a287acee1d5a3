//! Question and clip encoders.
//!
//! Words are embedded and run through a bidirectional LSTM; each clip's
//! frames go through a second bidirectional LSTM (all clips of a video are
//! processed together as one batch); motion vectors get an affine
//! projection. Everything is recorded on a [`Graph`].

use rand::Rng;

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::params::{Initializer, ParamId};
use crate::tensor::Tensor;

/// Guard for every L2 normalization.
pub const NORM_EPS: f64 = 1e-12;

/// Splits `[L × D]` frame features into `n_clips` consecutive clips of
/// `⌊L / n_clips⌋` frames. Trailing frames are dropped.
pub fn split_clips(frames: &Tensor, n_clips: usize) -> Result<Vec<Tensor>> {
    if n_clips == 0 {
        return Err(Error::InvalidArgument("n_clips must be positive".into()));
    }
    if n_clips > frames.rows() {
        return Err(Error::InvalidArgument(format!("cannot split {} frames into {n_clips} clips", frames.rows())));
    }
    let per_clip = frames.rows() / n_clips;
    Ok((0..n_clips).map(|i| frames.slice_rows(i * per_clip, per_clip)).collect())
}

/// Looks up one embedding row per token id.
pub fn embed_question(g: &mut Graph, tokens: &[usize], table: NodeId) -> Result<NodeId> {
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("empty token sequence".into()));
    }
    let vocab = g.shape(table).0;
    if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab) {
        return Err(Error::InvalidArgument(format!("token id {bad} outside vocabulary of {vocab}")));
    }
    Ok(g.gather_rows(table, tokens))
}

/// One direction of an LSTM. Gate blocks are ordered input, forget, candidate, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn init<R: Rng>(init: &mut Initializer<'_, R>, name: &str, input: usize, hidden: usize) -> Self {
        let w_ih = init.weight(format!("{name}.w_ih"), 4 * hidden, input);
        let w_hh = init.weight(format!("{name}.w_hh"), 4 * hidden, hidden);
        let mut b = Tensor::uniform(1, 4 * hidden, 1.0 / (hidden as f64).sqrt(), init.rng);
        for j in hidden..2 * hidden {
            b.data_mut()[j] = 1.0;
        }
        let bias = init.constant(format!("{name}.bias"), b);
        Self { w_ih, w_hh, bias, hidden }
    }

    /// Runs the cell over `inputs` (each `[B × in]`) from a zero state and
    /// returns the hidden state after every step.
    pub fn run(&self, g: &mut Graph, inputs: &[NodeId]) -> Vec<NodeId> {
        let batch = g.shape(inputs[0]).0;
        let stacked = g.concat_rows(inputs);
        self.run_stacked(g, stacked, batch, false)
    }

    /// Like [`run`](Self::run) with the steps stacked row-wise in one
    /// `[steps·B × in]` node, visited last-first when `reverse`. The input
    /// projection is a single product over all steps.
    pub fn run_stacked(&self, g: &mut Graph, stacked: NodeId, batch: usize, reverse: bool) -> Vec<NodeId> {
        let steps = g.shape(stacked).0 / batch;
        let h_dim = self.hidden;
        let (w_ih, w_hh, bias) = (g.param(self.w_ih), g.param(self.w_hh), g.param(self.bias));
        let projected = g.matmul_nt(stacked, w_ih);
        let projected = g.add_row(projected, bias);
        let mut h = g.input(Tensor::zeros(batch, h_dim));
        let mut c = g.input(Tensor::zeros(batch, h_dim));
        let mut states = Vec::with_capacity(steps);
        for k in 0..steps {
            let t = if reverse { steps - 1 - k } else { k };
            let xi = g.slice_rows(projected, t * batch, batch);
            let hh = g.matmul_nt(h, w_hh);
            let pre = g.add(xi, hh);
            let i_pre = g.slice_cols(pre, 0, h_dim);
            let f_pre = g.slice_cols(pre, h_dim, h_dim);
            let c_pre = g.slice_cols(pre, 2 * h_dim, h_dim);
            let o_pre = g.slice_cols(pre, 3 * h_dim, h_dim);
            let i_gate = g.sigmoid(i_pre);
            let f_gate = g.sigmoid(f_pre);
            let cand = g.tanh(c_pre);
            let o_gate = g.sigmoid(o_pre);
            let keep = g.mul(f_gate, c);
            let write = g.mul(i_gate, cand);
            c = g.add(keep, write);
            let squashed = g.tanh(c);
            h = g.mul(o_gate, squashed);
            states.push(h);
        }
        states
    }
}

/// Single-layer bidirectional LSTM; each direction has half the output width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

/// Per-position outputs and the final summary of a [`BiLstm`] pass.
#[derive(Debug, Clone)]
pub struct BiLstmOutput {
    /// `[B × out]` per position, forward state ++ backward state.
    pub states: Vec<NodeId>,
    /// `[B × out]`: final forward state ++ final backward state (the one at position 0).
    pub summary: NodeId,
}

impl BiLstm {
    pub fn init<R: Rng>(init: &mut Initializer<'_, R>, name: &str, input: usize, out: usize) -> Result<Self> {
        if !out.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("bidirectional width {out} must be even")));
        }
        Ok(Self {
            forward: LstmCell::init(init, &format!("{name}.fwd"), input, out / 2),
            backward: LstmCell::init(init, &format!("{name}.bwd"), input, out / 2),
        })
    }

    pub fn run(&self, g: &mut Graph, inputs: &[NodeId]) -> BiLstmOutput {
        let batch = g.shape(inputs[0]).0;
        let stacked = g.concat_rows(inputs);
        self.run_stacked(g, stacked, batch)
    }

    /// [`run`](Self::run) over steps stacked row-wise, `batch` rows per step.
    pub fn run_stacked(&self, g: &mut Graph, stacked: NodeId, batch: usize) -> BiLstmOutput {
        let fwd = self.forward.run_stacked(g, stacked, batch, false);
        let mut bwd = self.backward.run_stacked(g, stacked, batch, true);
        bwd.reverse();
        let states = fwd.iter().zip(&bwd).map(|(&f, &b)| g.concat_cols(&[f, b])).collect();
        let summary = g.concat_cols(&[*fwd.last().expect("nonempty"), bwd[0]]);
        BiLstmOutput { states, summary }
    }
}

/// Encoded question: raw word embeddings, contextual states and the global summary.
#[derive(Debug, Clone, Copy)]
pub struct QuestionEncoding {
    /// `[L_q × D_w]`
    pub words: NodeId,
    /// `[L_q × d]`
    pub contextual: NodeId,
    /// `[1 × d]`
    pub summary: NodeId,
}

pub fn encode_question(g: &mut Graph, words: NodeId, lstm: &BiLstm) -> QuestionEncoding {
    let out = lstm.run_stacked(g, words, 1);
    let contextual = g.concat_rows(&out.states);
    QuestionEncoding { words, contextual, summary: out.summary }
}

/// Encodes every clip of a video at once: `frames[t]` is `[N × D_app]`
/// holding frame `t` of each clip. Returns `[N × d]`.
pub fn encode_clip_appearance(g: &mut Graph, frames: &[NodeId], lstm: &BiLstm) -> Result<NodeId> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("clip has no frames".into()));
    }
    Ok(lstm.run(g, frames).summary)
}

/// Affine map of raw motion rows `[N × D_mot]` to `[N × d]`; `weight` is `[d × D_mot]`.
pub fn project_motion(g: &mut Graph, raw: NodeId, weight: NodeId, bias: NodeId) -> NodeId {
    let y = g.matmul_nt(raw, weight);
    g.add_row(y, bias)
}

/// Per-step question self-attention.
///
/// Scores each contextual state through `w1 [d × d]` (then L2 normalized)
/// and `w2 [1 × d]`, softmaxes over positions and pools the raw word
/// embeddings. Returns `(q_w [1 × D_w], α_q [1 × L_q])`.
pub fn question_step_summary(g: &mut Graph, q: &QuestionEncoding, w1: NodeId, w2: NodeId) -> (NodeId, NodeId) {
    let projected = g.matmul_nt(q.contextual, w1);
    let normed = g.row_l2_normalize(projected, NORM_EPS);
    let scores = g.matmul_nt(normed, w2);
    let scores = g.transpose(scores);
    let alpha = g.softmax_rows(scores);
    let pooled = g.matmul(alpha, q.words);
    (pooled, alpha)
}

/// Question summary with fixed uniform attention.
pub fn uniform_question_summary(g: &mut Graph, q: &QuestionEncoding) -> (NodeId, NodeId) {
    let len = g.shape(q.words).0;
    let alpha = g.input(Tensor::filled(1, len, 1.0 / len as f64));
    let pooled = g.matmul(alpha, q.words);
    (pooled, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frames(l: usize) -> Tensor {
        Tensor::from_vec(l, 2, (0..2 * l).map(|x| x as f64).collect())
    }

    #[test]
    fn split_clips_floor_rule() {
        let clips = split_clips(&frames(300), 20).unwrap();
        assert_eq!(clips.len(), 20);
        assert!(clips.iter().all(|c| c.rows() == 15));

        let clips = split_clips(&frames(10), 10).unwrap();
        assert!(clips.iter().all(|c| c.rows() == 1));

        let clips = split_clips(&frames(11), 2).unwrap();
        assert_eq!(clips[0].rows(), 5);
        assert_eq!(clips[1].row(4), frames(11).row(9));
    }

    #[test]
    fn split_clips_errors() {
        assert!(matches!(split_clips(&frames(3), 4), Err(Error::InvalidArgument(_))));
        assert!(matches!(split_clips(&frames(3), 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn embedding_lookup() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let mut table = Tensor::zeros(5, 2);
        table.row_mut(3).copy_from_slice(&[0.1, -0.2]);
        let t = g.input(table);
        let w = embed_question(&mut g, &[3], t).unwrap();
        assert_eq!(g.value(w).data(), &[0.1, -0.2]);
        let w = embed_question(&mut g, &[0, 0], t).unwrap();
        assert_eq!(g.value(w).row(0), g.value(w).row(1));
        assert!(embed_question(&mut g, &[], t).is_err());
        assert!(embed_question(&mut g, &[5], t).is_err());
    }

    fn zero_lstm(store: &mut ParamStore, input: usize, out: usize) -> BiLstm {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lstm = BiLstm::init(&mut Initializer { store, rng: &mut rng }, "q", input, out).unwrap();
        for id in [lstm.forward.w_ih, lstm.forward.w_hh, lstm.forward.bias, lstm.backward.w_ih, lstm.backward.w_hh, lstm.backward.bias] {
            let t = store.get_mut(id);
            *t = Tensor::zeros(t.rows(), t.cols());
        }
        lstm
    }

    #[test]
    fn zero_lstm_outputs_zero() {
        let mut store = ParamStore::new();
        let lstm = zero_lstm(&mut store, 3, 4);
        let mut g = Graph::new(&store);
        let w = g.input(Tensor::uniform(5, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(1)));
        let q = encode_question(&mut g, w, &lstm);
        assert_eq!(g.shape(q.contextual), (5, 4));
        assert!(g.value(q.contextual).data().iter().all(|&x| x == 0.0));
        assert!(g.value(q.summary).data().iter().all(|&x| x == 0.0));

        let f = g.input(Tensor::uniform(3, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(2)));
        let clip = encode_clip_appearance(&mut g, &[f, f], &lstm).unwrap();
        assert_eq!(g.shape(clip), (3, 4));
        assert!(g.value(clip).data().iter().all(|&x| x == 0.0));
    }

    /// Hand-unrolled LSTM over one input, used as an independent reference.
    fn lstm_step_reference(x: &[f64], w_ih: &Tensor, bias: &Tensor, hidden: usize) -> Vec<f64> {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre: Vec<f64> = (0..4 * hidden)
            .map(|r| w_ih.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias.data()[r])
            .collect();
        (0..hidden)
            .map(|j| {
                let c = sig(pre[j]) * pre[2 * hidden + j].tanh();
                sig(pre[3 * hidden + j]) * c.tanh()
            })
            .collect()
    }

    #[test]
    fn single_token_uses_one_step_each_direction() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lstm = BiLstm::init(&mut Initializer { store: &mut store, rng: &mut rng }, "q", 3, 4).unwrap();
        let x = [0.3, -0.7, 0.2];
        let mut g = Graph::new(&store);
        let w = g.input(Tensor::row_vector(&x));
        let q = encode_question(&mut g, w, &lstm);
        assert_eq!(g.shape(q.contextual), (1, 4));
        let fwd = lstm_step_reference(&x, store.get(lstm.forward.w_ih), store.get(lstm.forward.bias), 2);
        let bwd = lstm_step_reference(&x, store.get(lstm.backward.w_ih), store.get(lstm.backward.bias), 2);
        let expected: Vec<f64> = fwd.into_iter().chain(bwd).collect();
        let got = g.value(q.summary).data();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(g.value(q.summary), g.value(q.contextual));
    }

    #[test]
    fn encoder_is_deterministic() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lstm = BiLstm::init(&mut Initializer { store: &mut store, rng: &mut rng }, "q", 3, 6).unwrap();
        let w = Tensor::uniform(4, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(5));
        let run = || {
            let mut g = Graph::new(&store);
            let wn = g.input(w.clone());
            let q = encode_question(&mut g, wn, &lstm);
            (g.value(q.contextual).clone(), g.value(q.summary).clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn odd_width_rejected() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            BiLstm::init(&mut Initializer { store: &mut store, rng: &mut rng }, "q", 3, 5),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn motion_projection() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let raw = g.input(Tensor::row_vector(&[1.0, 2.0]));
        let w = g.input(Tensor::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]));
        let b = g.input(Tensor::row_vector(&[0.0, 1.0]));
        let y = project_motion(&mut g, raw, w, b);
        assert_eq!(g.value(y).data(), &[3.0, 3.0]);

        let id = g.input(Tensor::identity(2));
        let zb = g.input(Tensor::zeros(1, 2));
        let y = project_motion(&mut g, raw, id, zb);
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);
        let zw = g.input(Tensor::zeros(2, 2));
        let y = project_motion(&mut g, raw, zw, zb);
        assert_eq!(g.value(y).data(), &[0.0, 0.0]);
    }

    fn summary_fixture(g: &mut Graph, words: Tensor, contextual: Tensor) -> QuestionEncoding {
        let words = g.input(words);
        let contextual = g.input(contextual);
        let summary = g.slice_rows(contextual, 0, 1);
        QuestionEncoding { words, contextual, summary }
    }

    #[test]
    fn question_summary_single_token() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let q = summary_fixture(&mut g, Tensor::row_vector(&[0.5, -1.0, 2.0]), Tensor::row_vector(&[1.0, 2.0]));
        let w1 = g.input(Tensor::identity(2));
        let w2 = g.input(Tensor::row_vector(&[0.3, 0.4]));
        let (qw, alpha) = question_step_summary(&mut g, &q, w1, w2);
        assert_eq!(g.value(alpha).data(), &[1.0]);
        assert_eq!(g.value(qw).data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn question_summary_zero_scorer_is_mean() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let words = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 3.0], &[2.0, 3.0]]);
        let q = summary_fixture(&mut g, words, Tensor::uniform(3, 2, 1.0, &mut ChaCha8Rng::seed_from_u64(9)));
        let w1 = g.input(Tensor::identity(2));
        let w2 = g.input(Tensor::zeros(1, 2));
        let (qw, alpha) = question_step_summary(&mut g, &q, w1, w2);
        for &a in g.value(alpha).data() {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
        let v = g.value(qw).data();
        assert!((v[0] - 1.0).abs() < 1e-15 && (v[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn question_summary_two_token_softmax() {
        // contextual rows normalize to unit vectors; w2 = (1, 0) gives logits (1, 0).
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let words = Tensor::from_rows(&[&[1.0, 2.0], &[-3.0, 0.5]]);
        let q = summary_fixture(&mut g, words, Tensor::from_rows(&[&[5.0, 0.0], &[0.0, 2.0]]));
        let w1 = g.input(Tensor::identity(2));
        let w2 = g.input(Tensor::row_vector(&[1.0, 0.0]));
        let (qw, alpha) = question_step_summary(&mut g, &q, w1, w2);
        let a = g.value(alpha).data();
        let e = std::f64::consts::E;
        let a0 = e / (e + 1.0);
        assert!((a[0] - 0.7310585786300049).abs() < 1e-12 && (a0 - a[0]).abs() < 1e-15);
        assert!((a[1] - 0.2689414213699951).abs() < 1e-12);
        let v = g.value(qw).data();
        assert!((v[0] - (a[0] * 1.0 + a[1] * -3.0)).abs() < 1e-14);
        assert!((v[1] - (a[0] * 2.0 + a[1] * 0.5)).abs() < 1e-14);
    }
}
