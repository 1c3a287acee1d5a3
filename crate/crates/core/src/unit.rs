//! The reasoning unit: query punishment, multi-view graph attention, view
//! fusion and the residual update, plus the T-step chain.
//!
//! Clips form a complete graph with self-loops, so every GAT attends over
//! all `N` clips and the whole unit is equivariant to clip permutations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::config::GatActivation;
use crate::encoders::{question_step_summary, uniform_question_summary, QuestionEncoding};
use crate::error::{Error, Result};
use crate::params::{Initializer, ParamId};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Query-guided sigmoid gate per clip.
///
/// `features [N × d]`, `q_w [1 × D_w]`, `map [d × D_w]`. Returns the
/// masked features and the gate column `β [N × 1]`.
pub fn punish(g: &mut Graph, features: NodeId, q_w: NodeId, map: NodeId) -> (NodeId, NodeId) {
    let query = g.matmul_nt(q_w, map);
    let scores = g.matmul_nt(features, query);
    let beta = g.sigmoid(scores);
    let masked = g.mul_col(features, beta);
    (masked, beta)
}

/// Parameters of one multi-head GAT. Heads are packed: rows `k·d1..(k+1)·d1`
/// of `weight` and columns of `bias` belong to head `k`; row `k` of
/// `attention` is that head's `[source ++ target]` scoring vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatParams {
    /// `[K·d1 × d]`
    pub weight: ParamId,
    /// `[1 × K·d1]`
    pub bias: ParamId,
    /// `[K × 2·d1]`
    pub attention: ParamId,
    pub heads: usize,
    pub head_dim: usize,
}

impl GatParams {
    pub fn init<R: Rng>(init: &mut Initializer<'_, R>, name: &str, input: usize, heads: usize, head_dim: usize) -> Self {
        let width = heads * head_dim;
        Self {
            weight: init.weight(format!("{name}.weight"), width, input),
            bias: init.bias(format!("{name}.bias"), width, input),
            attention: init.weight(format!("{name}.attention"), heads, 2 * head_dim),
            heads,
            head_dim,
        }
    }
}

/// GAT output `[N × K·d1]` and the per-head `[N × N]` attention matrices.
#[derive(Debug, Clone)]
pub struct GatOutput {
    pub output: NodeId,
    pub attention: Vec<NodeId>,
}

pub fn gat_layer(g: &mut Graph, nodes: NodeId, params: &GatParams, activation: GatActivation) -> Result<GatOutput> {
    if g.shape(nodes).0 == 0 {
        return Err(Error::InvalidArgument("graph has no nodes".into()));
    }
    let (weight, bias, att) = (g.param(params.weight), g.param(params.bias), g.param(params.attention));
    let projected = g.matmul_nt(nodes, weight);
    let projected = g.add_row(projected, bias);
    let d1 = params.head_dim;
    let mut heads = Vec::with_capacity(params.heads);
    let mut attention = Vec::with_capacity(params.heads);
    for k in 0..params.heads {
        let h = g.slice_cols(projected, k * d1, d1);
        let a = g.slice_rows(att, k, 1);
        let a_src = g.slice_cols(a, 0, d1);
        let a_dst = g.slice_cols(a, d1, d1);
        let s_src = g.matmul_nt(h, a_src);
        let s_dst = g.matmul_nt(h, a_dst);
        let logits = g.outer_sum(s_src, s_dst);
        let logits = g.leaky_relu(logits, LEAKY_SLOPE);
        let alpha = g.softmax_rows(logits);
        let agg = g.matmul_order_invariant(alpha, h);
        let out = match activation {
            GatActivation::Elu => g.elu(agg),
            GatActivation::Sigmoid => g.sigmoid(agg),
        };
        heads.push(out);
        attention.push(alpha);
    }
    let output = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
    Ok(GatOutput { output, attention })
}

/// Scorer that weighs a specific embedding against a common one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionParams {
    /// `[K·d1 × K·d1]`
    pub weight: ParamId,
    /// `[1 × K·d1]`
    pub bias: ParamId,
    /// `[1 × K·d1]`
    pub scorer: ParamId,
}

impl FusionParams {
    pub fn init<R: Rng>(init: &mut Initializer<'_, R>, name: &str, width: usize) -> Self {
        Self {
            weight: init.weight(format!("{name}.weight"), width, width),
            bias: init.bias(format!("{name}.bias"), width, width),
            scorer: init.weight(format!("{name}.scorer"), 1, width),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FusedViews {
    pub fused: NodeId,
    /// `[N × 1]`
    pub alpha_specific: NodeId,
    /// `[N × 1]`
    pub alpha_common: NodeId,
}

fn view_score(g: &mut Graph, z: NodeId, weight: NodeId, bias: NodeId, scorer: NodeId) -> NodeId {
    let t = g.matmul_nt(z, weight);
    let t = g.add_row(t, bias);
    let t = g.tanh(t);
    g.matmul_nt(t, scorer)
}

/// Per-clip two-way softmax between a specific and a common embedding.
pub fn fuse_views(g: &mut Graph, specific: NodeId, common: NodeId, params: &FusionParams) -> FusedViews {
    let (w, b, u) = (g.param(params.weight), g.param(params.bias), g.param(params.scorer));
    fuse_views_with(g, specific, common, w, b, u)
}

/// [`fuse_views`] with explicit parameter nodes.
pub fn fuse_views_with(g: &mut Graph, specific: NodeId, common: NodeId, weight: NodeId, bias: NodeId, scorer: NodeId) -> FusedViews {
    let v_spec = view_score(g, specific, weight, bias, scorer);
    let v_common = view_score(g, common, weight, bias, scorer);
    let pair = g.concat_cols(&[v_spec, v_common]);
    let alpha = g.softmax_rows(pair);
    let alpha_specific = g.slice_cols(alpha, 0, 1);
    let alpha_common = g.slice_cols(alpha, 1, 1);
    let a = g.mul_col(specific, alpha_specific);
    let b = g.mul_col(common, alpha_common);
    let fused = g.add(a, b);
    FusedViews { fused, alpha_specific, alpha_common }
}

/// Specific and common embeddings of both streams for one step.
#[derive(Debug, Clone, Copy)]
pub struct ViewEmbeddings {
    pub appearance: NodeId,
    pub appearance_common: NodeId,
    pub motion: NodeId,
    pub motion_common: NodeId,
}

/// The four graphs of the multi-view network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiViewParams {
    pub aig: GatParams,
    pub amc: GatParams,
    pub mig: GatParams,
    pub mac: GatParams,
}

#[derive(Debug, Clone)]
pub struct MultiViewOutput {
    pub views: ViewEmbeddings,
    /// Per-head attention of AIG, AMC, MIG, MAC in that order.
    pub attention: Vec<Vec<NodeId>>,
}

pub fn multi_view_graphs(
    g: &mut Graph,
    masked_a: NodeId,
    masked_m: NodeId,
    params: &MultiViewParams,
    activation: GatActivation,
) -> Result<MultiViewOutput> {
    let a = gat_layer(g, masked_a, &params.aig, activation)?;
    let ca = gat_layer(g, masked_a, &params.amc, activation)?;
    let m = gat_layer(g, masked_m, &params.mig, activation)?;
    let cm = gat_layer(g, masked_m, &params.mac, activation)?;
    Ok(MultiViewOutput {
        views: ViewEmbeddings { appearance: a.output, appearance_common: ca.output, motion: m.output, motion_common: cm.output },
        attention: vec![a.attention, ca.attention, m.attention, cm.attention],
    })
}

/// How a step builds the per-step question vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryAttention {
    /// `w1 [d × d]`, `w2 [1 × d]`.
    Learned { w1: ParamId, w2: ParamId },
    Uniform,
}

/// Graph stage of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepGraphs {
    /// One GAT per present stream.
    Single { appearance: Option<GatParams>, motion: Option<GatParams> },
    MultiView { graphs: MultiViewParams, fuse_appearance: FusionParams, fuse_motion: FusionParams },
}

/// Parameters of one reasoning step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepParams {
    pub query: QueryAttention,
    /// Punishment maps `[d × D_w]`; absent when the variant has no punishment.
    pub punish_appearance: Option<ParamId>,
    pub punish_motion: Option<ParamId>,
    pub graphs: StepGraphs,
}

/// Node handles of everything a step exposes for inspection.
#[derive(Debug, Clone, Default)]
pub struct StepTraceNodes {
    pub question_attention: Option<NodeId>,
    pub appearance_mask: Option<NodeId>,
    pub motion_mask: Option<NodeId>,
    pub appearance_weights: Option<(NodeId, NodeId)>,
    pub motion_weights: Option<(NodeId, NodeId)>,
    pub gat_attention: Vec<Vec<NodeId>>,
}

/// Clip features of the active streams. Single-stream variants use one slot;
/// the fused stream of FG/PFG occupies the appearance slot.
#[derive(Debug, Clone, Copy)]
pub struct Streams {
    pub appearance: Option<NodeId>,
    pub motion: Option<NodeId>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub streams: Streams,
    pub views: Option<ViewEmbeddings>,
    pub trace: StepTraceNodes,
}

fn check_residual(g: &Graph, input: NodeId, update: NodeId) -> Result<()> {
    if g.shape(input) != g.shape(update) {
        return Err(Error::InvalidConfig(format!(
            "graph output {:?} does not match clip features {:?}; heads * d1 must equal d",
            g.shape(update),
            g.shape(input)
        )));
    }
    Ok(())
}

fn residual(g: &mut Graph, input: NodeId, update: NodeId) -> Result<NodeId> {
    check_residual(g, input, update)?;
    Ok(g.add(input, update))
}

/// One reasoning step over whichever streams are present.
pub fn reasoning_step(
    g: &mut Graph,
    streams: Streams,
    question: &QuestionEncoding,
    params: &StepParams,
    activation: GatActivation,
) -> Result<StepOutput> {
    let mut trace = StepTraceNodes::default();
    let needs_query = params.punish_appearance.is_some() || params.punish_motion.is_some();
    let q_w = if needs_query {
        let (q_w, alpha) = match params.query {
            QueryAttention::Learned { w1, w2 } => {
                let (w1, w2) = (g.param(w1), g.param(w2));
                question_step_summary(g, question, w1, w2)
            }
            QueryAttention::Uniform => uniform_question_summary(g, question),
        };
        trace.question_attention = Some(alpha);
        Some(q_w)
    } else {
        None
    };

    let gate = |g: &mut Graph, stream: Option<NodeId>, map: Option<ParamId>| -> (Option<NodeId>, Option<NodeId>) {
        match (stream, map, q_w) {
            (Some(v), Some(map), Some(q_w)) => {
                let map = g.param(map);
                let (masked, beta) = punish(g, v, q_w, map);
                (Some(masked), Some(beta))
            }
            (v, _, _) => (v, None),
        }
    };
    let (masked_a, beta_a) = gate(g, streams.appearance, params.punish_appearance);
    let (masked_m, beta_m) = gate(g, streams.motion, params.punish_motion);
    trace.appearance_mask = beta_a;
    trace.motion_mask = beta_m;

    match &params.graphs {
        StepGraphs::Single { appearance, motion } => {
            let mut out = Streams { appearance: None, motion: None };
            if let (Some(v), Some(x)) = (streams.appearance, masked_a) {
                let p = appearance.as_ref().ok_or_else(|| Error::InvalidConfig("appearance stream has no graph".into()))?;
                let z = gat_layer(g, x, p, activation)?;
                trace.gat_attention.push(z.attention);
                out.appearance = Some(residual(g, v, z.output)?);
            }
            if let (Some(v), Some(x)) = (streams.motion, masked_m) {
                let p = motion.as_ref().ok_or_else(|| Error::InvalidConfig("motion stream has no graph".into()))?;
                let z = gat_layer(g, x, p, activation)?;
                trace.gat_attention.push(z.attention);
                out.motion = Some(residual(g, v, z.output)?);
            }
            Ok(StepOutput { streams: out, views: None, trace })
        }
        StepGraphs::MultiView { graphs, fuse_appearance, fuse_motion } => {
            let (Some(v_a), Some(v_m), Some(x_a), Some(x_m)) = (streams.appearance, streams.motion, masked_a, masked_m) else {
                return Err(Error::InvalidConfig("multi-view graphs need both streams".into()));
            };
            let mv = multi_view_graphs(g, x_a, x_m, graphs, activation)?;
            let views = mv.views;
            trace.gat_attention = mv.attention;
            let fa = fuse_views(g, views.appearance, views.appearance_common, fuse_appearance);
            let fm = fuse_views(g, views.motion, views.motion_common, fuse_motion);
            trace.appearance_weights = Some((fa.alpha_specific, fa.alpha_common));
            trace.motion_weights = Some((fm.alpha_specific, fm.alpha_common));
            let appearance = residual(g, v_a, fa.fused)?;
            let motion = residual(g, v_m, fm.fused)?;
            Ok(StepOutput { streams: Streams { appearance: Some(appearance), motion: Some(motion) }, views: Some(views), trace })
        }
    }
}

/// The full two-stream step: punishment on both streams, four graphs, view
/// fusion and the residual update.
pub fn dualvgr_step(
    g: &mut Graph,
    appearance: NodeId,
    motion: NodeId,
    question: &QuestionEncoding,
    params: &StepParams,
    activation: GatActivation,
) -> Result<(NodeId, NodeId, ViewEmbeddings, StepTraceNodes)> {
    let out = reasoning_step(g, Streams { appearance: Some(appearance), motion: Some(motion) }, question, params, activation)?;
    let views = out.views.ok_or_else(|| Error::InvalidConfig("dualvgr_step requires multi-view step parameters".into()))?;
    let (Some(a), Some(m)) = (out.streams.appearance, out.streams.motion) else {
        return Err(Error::InvalidConfig("dualvgr_step requires both streams".into()));
    };
    Ok((a, m, views, out.trace))
}

#[derive(Debug, Clone)]
pub struct StackOutput {
    pub streams: Streams,
    pub views: Vec<ViewEmbeddings>,
    pub traces: Vec<StepTraceNodes>,
}

/// Chains one step per entry of `steps`, feeding each output forward.
pub fn run_stack(
    g: &mut Graph,
    streams: Streams,
    question: &QuestionEncoding,
    steps: &[StepParams],
    activation: GatActivation,
) -> Result<StackOutput> {
    if steps.is_empty() {
        return Err(Error::InvalidConfig("at least one reasoning step is required".into()));
    }
    let mut current = streams;
    let mut views = Vec::with_capacity(steps.len());
    let mut traces = Vec::with_capacity(steps.len());
    for params in steps {
        let out = reasoning_step(g, current, question, params, activation)?;
        current = out.streams;
        views.extend(out.views);
        traces.push(out.trace);
    }
    Ok(StackOutput { streams: current, views, traces })
}

/// Per-step attention values pulled out of a graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViewWeights {
    pub appearance_specific: Vec<f64>,
    pub appearance_common: Vec<f64>,
    pub motion_specific: Vec<f64>,
    pub motion_common: Vec<f64>,
}

/// Values of one step's attention and gates. Components a variant does not
/// have are left empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub question_attention: Vec<f64>,
    pub appearance_mask: Vec<f64>,
    pub motion_mask: Vec<f64>,
    pub view_weights: ViewWeights,
    /// `[graph][head]` row-major `N × N` attention.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gat_attention: Vec<Vec<Vec<Vec<f64>>>>,
}

impl StepTrace {
    pub fn collect(g: &Graph, nodes: &StepTraceNodes, with_gat: bool) -> Self {
        let vals = |id: Option<NodeId>| id.map(|n| g.value(n).data().to_vec()).unwrap_or_default();
        let mut view_weights = ViewWeights::default();
        if let Some((s, c)) = nodes.appearance_weights {
            view_weights.appearance_specific = vals(Some(s));
            view_weights.appearance_common = vals(Some(c));
        }
        if let Some((s, c)) = nodes.motion_weights {
            view_weights.motion_specific = vals(Some(s));
            view_weights.motion_common = vals(Some(c));
        }
        let gat_attention = if with_gat {
            nodes
                .gat_attention
                .iter()
                .map(|heads| {
                    heads
                        .iter()
                        .map(|&h| {
                            let t = g.value(h);
                            (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
                        })
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            question_attention: vals(nodes.question_attention),
            appearance_mask: vals(nodes.appearance_mask),
            motion_mask: vals(nodes.motion_mask),
            view_weights,
            gat_attention,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn punish_zero_map_halves() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let f = g.input(Tensor::from_rows(&[&[1.0, -2.0], &[3.0, 4.0]]));
        let q = g.input(Tensor::row_vector(&[0.7, 0.1, 5.0]));
        let map = g.input(Tensor::zeros(2, 3));
        let (masked, beta) = punish(&mut g, f, q, map);
        assert_eq!(g.value(beta).data(), &[0.5, 0.5]);
        assert_eq!(g.value(masked).data(), &[0.5, -1.0, 1.5, 2.0]);
    }

    #[test]
    fn punish_identity_example() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let f = g.input(Tensor::identity(2));
        let q = g.input(Tensor::row_vector(&[1.0, 1.0]));
        let map = g.input(Tensor::identity(2));
        let (masked, beta) = punish(&mut g, f, q, map);
        for &b in g.value(beta).data() {
            assert!((b - 0.7310585786300049).abs() < 1e-12);
        }
        let m = g.value(masked);
        assert!((m.get(0, 0) - 0.7310585786300049).abs() < 1e-12);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(1, 0), 0.0);
    }

    fn gat_fixture(store: &mut ParamStore, d: usize, heads: usize, d1: usize, seed: u64) -> GatParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GatParams::init(&mut Initializer { store, rng: &mut rng }, &format!("gat{seed}"), d, heads, d1)
    }

    #[test]
    fn gat_single_node() {
        let mut store = ParamStore::new();
        let p = gat_fixture(&mut store, 4, 2, 2, 1);
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::row_vector(&[0.1, 0.2, -0.3, 0.4]));
        let out = gat_layer(&mut g, x, &p, GatActivation::Elu).unwrap();
        for &a in &out.attention {
            assert_eq!(g.value(a).data(), &[1.0]);
        }
        let h = g.value(x).matmul_nt(store.get(p.weight)).zip_map(store.get(p.bias), |a, b| a + b);
        let expected = h.map(|v| if v > 0.0 { v } else { v.exp_m1() });
        assert!(g.value(out.output).max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn gat_identical_nodes_uniform_attention() {
        let mut store = ParamStore::new();
        let p = gat_fixture(&mut store, 4, 2, 2, 2);
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::from_rows(&[&[0.5, -0.1, 0.3, 0.2][..]; 3]));
        let out = gat_layer(&mut g, x, &p, GatActivation::Elu).unwrap();
        for &a in &out.attention {
            for &v in g.value(a).data() {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let o = g.value(out.output);
        assert_eq!(o.row(0), o.row(1));
        assert_eq!(o.row(1), o.row(2));
    }

    #[test]
    fn gat_two_node_enumeration() {
        // N=2, K=1, d=d1=1, U=1, b=0, attention=(1,1), nodes (1, −1).
        let mut store = ParamStore::new();
        let p = GatParams {
            weight: store.insert("w", Tensor::scalar(1.0)),
            bias: store.insert("b", Tensor::scalar(0.0)),
            attention: store.insert("a", Tensor::row_vector(&[1.0, 1.0])),
            heads: 1,
            head_dim: 1,
        };
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::column_vector(&[1.0, -1.0]));
        let out = gat_layer(&mut g, x, &p, GatActivation::Elu).unwrap();

        let h = [1.0f64, -1.0];
        let lrelu = |v: f64| if v > 0.0 { v } else { 0.2 * v };
        let mut expected_att = [[0.0; 2]; 2];
        let mut expected_out = [0.0; 2];
        for i in 0..2 {
            let logits: Vec<f64> = (0..2).map(|j| lrelu(h[i] + h[j])).collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for j in 0..2 {
                expected_att[i][j] = logits[j].exp() / z;
            }
            let agg: f64 = (0..2).map(|j| expected_att[i][j] * h[j]).sum();
            expected_out[i] = if agg > 0.0 { agg } else { agg.exp_m1() };
        }
        let att = g.value(out.attention[0]);
        for i in 0..2 {
            for j in 0..2 {
                assert!((att.get(i, j) - expected_att[i][j]).abs() < 1e-15);
            }
            assert!((g.value(out.output).get(i, 0) - expected_out[i]).abs() < 1e-15);
        }
        // Row 0 logits (2, 0): weight e²/(e²+1).
        assert!((att.get(0, 0) - 0.8807970779778823).abs() < 1e-12);
    }

    #[test]
    fn fuse_equal_inputs() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = FusionParams::init(&mut Initializer { store: &mut store, rng: &mut rng }, "f", 3);
        let mut g = Graph::new(&store);
        let z = Tensor::uniform(4, 3, 1.0, &mut rng);
        let a = g.input(z.clone());
        let b = g.input(z.clone());
        let f = fuse_views(&mut g, a, b, &p);
        assert!(g.value(f.fused).max_abs_diff(&z) < 1e-15);
    }

    #[test]
    fn fuse_zero_scorer_is_mean() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = g.input(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = g.input(Tensor::from_rows(&[&[3.0, 0.0], &[-1.0, 0.0]]));
        let w = g.input(Tensor::identity(2));
        let bias = g.input(Tensor::zeros(1, 2));
        let u = g.input(Tensor::zeros(1, 2));
        let f = fuse_views_with(&mut g, a, b, w, bias, u);
        assert_eq!(g.value(f.alpha_specific).data(), &[0.5, 0.5]);
        assert_eq!(g.value(f.fused).data(), &[2.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn fuse_scalar_example() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = g.input(Tensor::scalar(1.0));
        let b = g.input(Tensor::scalar(0.0));
        let w = g.input(Tensor::scalar(1.0));
        let bias = g.input(Tensor::scalar(0.0));
        let u = g.input(Tensor::scalar(1.0));
        let f = fuse_views_with(&mut g, a, b, w, bias, u);
        let t = 1f64.tanh();
        let expected = t.exp() / (t.exp() + 1.0);
        assert!((t - 0.7615941559557649).abs() < 1e-15);
        assert!((g.value(f.alpha_specific).item() - expected).abs() < 1e-15);
        assert!((expected - 0.6816997421945262).abs() < 1e-15);
        assert!((g.value(f.fused).item() - expected).abs() < 1e-15);
        assert!((g.value(f.alpha_specific).item() + g.value(f.alpha_common).item() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_graph_rejected() {
        let mut store = ParamStore::new();
        let p = gat_fixture(&mut store, 2, 1, 2, 4);
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::zeros(0, 2));
        assert!(matches!(gat_layer(&mut g, x, &p, GatActivation::Elu), Err(Error::InvalidArgument(_))));
    }
}
