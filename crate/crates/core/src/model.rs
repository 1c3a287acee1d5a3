//! Full video-QA model: encoders, the reasoning stack, clip fusion and the
//! answer head, with parameter layouts for every ablation variant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{softmax_rows, Graph, NodeId};
use crate::config::ModelConfig;
use crate::data::{Vocab, VideoFeatures};
use crate::decoder::{argmax, decode_answer, mfb_fuse, readout, DecoderNodes, DecoderParams, ReadoutParams};
use crate::encoders::{embed_question, encode_clip_appearance, encode_question, project_motion, BiLstm, QuestionEncoding};
use crate::error::{Error, Result};
use crate::losses::{consistency_loss, cross_entropy, disparity_loss, total_loss};
use crate::params::{Initializer, ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::unit::{
    run_stack, FusionParams, GatParams, MultiViewParams, QueryAttention, StackOutput, StepGraphs, StepParams, StepTrace,
    Streams,
};
use crate::variant::{Graphs, Streams as StreamKind};

/// Half-width of the uniform word-embedding initialization.
pub const EMBEDDING_INIT: f64 = 0.08;

/// Two-layer perceptron merging appearance and motion clips (FG, PFG).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamMerge {
    /// `[d × 2d]`
    pub hidden: ParamId,
    pub hidden_bias: ParamId,
    /// `[d × d]`
    pub output: ParamId,
    pub output_bias: ParamId,
}

/// Parameter handles of a built model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub embedding: ParamId,
    pub question_lstm: BiLstm,
    pub appearance_lstm: Option<BiLstm>,
    /// `(weight [d × D_mot], bias [1 × d])`
    pub motion_projection: Option<(ParamId, ParamId)>,
    pub merge: Option<StreamMerge>,
    pub steps: Vec<StepParams>,
    /// `(U_a, U_m)`, each `[k·d × d]`; two-stream variants only.
    pub mfb: Option<(ParamId, ParamId)>,
    pub readout: ReadoutParams,
    pub decoder: DecoderParams,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub layout: Layout,
    pub question_vocab: Vocab,
    pub answer_vocab: Vocab,
}

/// Node handles of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub question: QuestionEncoding,
    pub stack: StackOutput,
    /// `[1 × N]`
    pub readout_weights: NodeId,
    /// `[1 × |A|]`
    pub logits: NodeId,
}

/// Loss terms of one instance; constraint terms are constant zero for
/// variants without the multi-view graphs.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub total: NodeId,
    pub task: NodeId,
    pub consistency: NodeId,
    pub disparity: NodeId,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub answer: usize,
    pub probabilities: Vec<f64>,
    pub traces: Vec<StepTrace>,
    pub readout_weights: Vec<f64>,
}

fn init_step<R: rand::Rng>(init: &mut Initializer<'_, R>, config: &ModelConfig, name: &str) -> StepParams {
    let v = config.variant;
    let (d, d1, k, dw) = (config.d, config.d1, config.heads, config.word_dim);
    let punishment = v.punishment();
    let query = if punishment && v.question_attention() {
        QueryAttention::Learned { w1: init.weight(format!("{name}.query.w1"), d, d), w2: init.weight(format!("{name}.query.w2"), 1, d) }
    } else {
        QueryAttention::Uniform
    };
    let streams = v.streams();
    let has_app = matches!(streams, StreamKind::Appearance | StreamKind::Fused | StreamKind::Both);
    let has_mot = matches!(streams, StreamKind::Motion | StreamKind::Both);
    let punish_appearance = (punishment && has_app).then(|| init.weight(format!("{name}.punish.appearance"), d, dw));
    let punish_motion = (punishment && has_mot).then(|| init.weight(format!("{name}.punish.motion"), d, dw));
    let graphs = match v.graphs() {
        Graphs::Single => StepGraphs::Single {
            appearance: has_app.then(|| GatParams::init(init, &format!("{name}.gat.appearance"), d, k, d1)),
            motion: has_mot.then(|| GatParams::init(init, &format!("{name}.gat.motion"), d, k, d1)),
        },
        Graphs::MultiView => {
            let aig = GatParams::init(init, &format!("{name}.aig"), d, k, d1);
            let amc = GatParams::init(init, &format!("{name}.amc"), d, k, d1);
            let mig = GatParams::init(init, &format!("{name}.mig"), d, k, d1);
            let mac = if v.shared_common_graph() { amc } else { GatParams::init(init, &format!("{name}.mac"), d, k, d1) };
            StepGraphs::MultiView {
                graphs: MultiViewParams { aig, amc, mig, mac },
                fuse_appearance: FusionParams::init(init, &format!("{name}.fuse.appearance"), k * d1),
                fuse_motion: FusionParams::init(init, &format!("{name}.fuse.motion"), k * d1),
            }
        }
    };
    StepParams { query, punish_appearance, punish_motion, graphs }
}

impl Model {
    /// Builds a freshly initialized model; initialization is a function of
    /// `config.seed`, the variant and the vocabulary sizes.
    pub fn new(config: ModelConfig, question_vocab: Vocab, answer_vocab: Vocab) -> Result<Self> {
        config.validate()?;
        if question_vocab.len() < 2 || answer_vocab.is_empty() {
            return Err(Error::InvalidArgument("vocabularies must be nonempty".into()));
        }
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut init = Initializer { store: &mut store, rng: &mut rng };
        let d = config.d;
        let v = config.variant;
        let streams = v.streams();
        let needs_app = !matches!(streams, StreamKind::Motion);
        let needs_mot = !matches!(streams, StreamKind::Appearance);

        let embedding = init.uniform("embedding", question_vocab.len(), config.word_dim, EMBEDDING_INIT);
        let question_lstm = BiLstm::init(&mut init, "question_lstm", config.word_dim, d)?;
        let appearance_lstm = if needs_app { Some(BiLstm::init(&mut init, "appearance_lstm", config.app_dim, d)?) } else { None };
        let motion_projection = needs_mot.then(|| {
            (init.weight("motion_projection.weight", d, config.motion_dim), init.bias("motion_projection.bias", d, config.motion_dim))
        });
        let merge = matches!(streams, StreamKind::Fused).then(|| StreamMerge {
            hidden: init.weight("merge.hidden", d, 2 * d),
            hidden_bias: init.bias("merge.hidden_bias", d, 2 * d),
            output: init.weight("merge.output", d, d),
            output_bias: init.bias("merge.output_bias", d, d),
        });
        let steps = if config.tied_steps {
            let s = init_step(&mut init, &config, "step");
            vec![s; config.steps]
        } else {
            (0..config.steps).map(|t| init_step(&mut init, &config, &format!("step{t}"))).collect()
        };
        let mfb = matches!(streams, StreamKind::Both).then(|| {
            let k = config.mfb_factor;
            (init.weight("mfb.appearance", k * d, d), init.weight("mfb.motion", k * d, d))
        });
        let readout = ReadoutParams::init(&mut init, "readout", d);
        let decoder = DecoderParams::init(&mut init, "decoder", d, answer_vocab.len());
        let layout = Layout { embedding, question_lstm, appearance_lstm, motion_projection, merge, steps, mfb, readout, decoder };
        Ok(Self { config, params: store, layout, question_vocab, answer_vocab })
    }

    pub fn num_answers(&self) -> usize {
        self.answer_vocab.len()
    }

    fn check_video(&self, video: &VideoFeatures) -> Result<()> {
        if video.app_dim != self.config.app_dim || video.motion_dim != self.config.motion_dim {
            return Err(Error::InvalidArgument(format!(
                "video {} has feature dims ({}, {}), model expects ({}, {})",
                video.video_id, video.app_dim, video.motion_dim, self.config.app_dim, self.config.motion_dim
            )));
        }
        if video.n_clips == 0 || video.frames_per_clip == 0 {
            return Err(Error::InvalidArgument(format!("video {} has no clips", video.video_id)));
        }
        Ok(())
    }

    /// Clip-level features `[N × d]` of each stream before reasoning.
    fn encode_video(&self, g: &mut Graph, video: &VideoFeatures) -> Result<Streams> {
        let l = &self.layout;
        let appearance = match &l.appearance_lstm {
            Some(lstm) => {
                let frames: Vec<NodeId> = video.appearance_by_frame().into_iter().map(|t| g.input(t)).collect();
                Some(encode_clip_appearance(g, &frames, lstm)?)
            }
            None => None,
        };
        let motion = match l.motion_projection {
            Some((w, b)) => {
                let raw = g.input(video.motion_tensor());
                let (w, b) = (g.param(w), g.param(b));
                Some(project_motion(g, raw, w, b))
            }
            None => None,
        };
        Ok(match (l.merge, appearance, motion) {
            (Some(m), Some(a), Some(mo)) => {
                let joint = g.concat_cols(&[a, mo]);
                let (w1, b1, w2, b2) = (g.param(m.hidden), g.param(m.hidden_bias), g.param(m.output), g.param(m.output_bias));
                let h = g.matmul_nt(joint, w1);
                let h = g.add_row(h, b1);
                let h = g.elu(h);
                let h = g.matmul_nt(h, w2);
                Streams { appearance: Some(g.add_row(h, b2)), motion: None }
            }
            _ => Streams { appearance, motion },
        })
    }

    /// Forward pass for one question (`tokens` are question-vocab ids).
    pub fn forward(&self, g: &mut Graph, tokens: &[usize], video: &VideoFeatures) -> Result<Forward> {
        self.check_video(video)?;
        let l = &self.layout;
        let table = g.param(l.embedding);
        let words = embed_question(g, tokens, table)?;
        let question = encode_question(g, words, &l.question_lstm);
        let streams = self.encode_video(g, video)?;
        let stack = run_stack(g, streams, &question, &l.steps, self.config.activation)?;
        let clips = match (stack.streams.appearance, stack.streams.motion, l.mfb) {
            (Some(a), Some(m), Some((ua, um))) => {
                let (ua, um) = (g.param(ua), g.param(um));
                mfb_fuse(g, a, m, ua, um, self.config.mfb_factor)
            }
            (Some(x), None, _) | (None, Some(x), _) => x,
            _ => return Err(Error::InvalidConfig("variant produced no clip stream".into())),
        };
        let (map, bias, scorer) = (g.param(l.readout.map), g.param(l.readout.bias), g.param(l.readout.scorer));
        let (video_vec, readout_weights) = readout(g, clips, map, bias, scorer);
        let nodes = DecoderNodes::bind(g, &l.decoder);
        let logits = decode_answer(g, video_vec, question.summary, &nodes);
        Ok(Forward { question, stack, readout_weights, logits })
    }

    /// `L_t + γ·L_c + β·L_d` for one instance.
    pub fn loss(&self, g: &mut Graph, forward: &Forward, label: usize) -> Result<LossNodes> {
        let task = cross_entropy(g, forward.logits, label)?;
        let (consistency, disparity) = if forward.stack.views.is_empty() {
            let zero = g.input(Tensor::scalar(0.0));
            (zero, zero)
        } else {
            let pairs: Vec<(NodeId, NodeId)> =
                forward.stack.views.iter().map(|v| (v.appearance_common, v.motion_common)).collect();
            (consistency_loss(g, &pairs)?, disparity_loss(g, &forward.stack.views)?)
        };
        let total = total_loss(g, task, consistency, disparity, self.config.gamma, self.config.beta);
        Ok(LossNodes { total, task, consistency, disparity })
    }

    pub fn encode_tokens(&self, words: &[String]) -> Vec<usize> {
        self.question_vocab.encode_question(words)
    }

    pub fn predict(&self, words: &[String], video: &VideoFeatures, with_gat: bool) -> Result<Prediction> {
        let mut g = Graph::new(&self.params);
        let f = self.forward(&mut g, &self.encode_tokens(words), video)?;
        let probs = softmax_rows(g.value(f.logits));
        Ok(Prediction {
            answer: argmax(g.value(f.logits).data()),
            probabilities: probs.into_vec(),
            traces: f.stack.traces.iter().map(|t| StepTrace::collect(&g, t, with_gat)).collect(),
            readout_weights: g.value(f.readout_weights).data().to_vec(),
        })
    }

    /// Logits only; the cheap path used by evaluation.
    pub fn logits(&self, words: &[String], video: &VideoFeatures) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let f = self.forward(&mut g, &self.encode_tokens(words), video)?;
        Ok(g.value(f.logits).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variant::Variant;

    fn vocab(n: usize) -> Vocab {
        Vocab::from_tokens((0..n).map(|i| format!("t{i}")).collect())
    }

    fn video(cfg: &ModelConfig, frames: usize) -> VideoFeatures {
        let n = cfg.n_clips;
        VideoFeatures {
            video_id: "v".into(),
            n_clips: n,
            frames_per_clip: frames,
            app_dim: cfg.app_dim,
            motion_dim: cfg.motion_dim,
            appearance: (0..n * frames * cfg.app_dim).map(|i| ((i * 7 % 11) as f32 - 5.0) / 5.0).collect(),
            motion: (0..n * cfg.motion_dim).map(|i| ((i * 3 % 7) as f32 - 3.0) / 3.0).collect(),
        }
    }

    #[test]
    fn every_variant_runs() {
        for v in Variant::ALL {
            let cfg = ModelConfig { variant: v, ..ModelConfig::micro() };
            let m = Model::new(cfg.clone(), vocab(6), vocab(3)).unwrap();
            let mut g = Graph::new(&m.params);
            let f = m.forward(&mut g, &[2, 3, 4, 5], &video(&cfg, 2)).unwrap();
            let l = m.loss(&mut g, &f, 1).unwrap();
            assert!(g.value(l.total).item().is_finite(), "{v}");
            assert_eq!(g.shape(f.logits), (1, 3));
            if !v.has_constraints() {
                assert_eq!(g.value(l.consistency).item(), 0.0);
                assert_eq!(g.value(l.disparity).item(), 0.0);
            }
        }
    }

    #[test]
    fn shared_common_graph_ties_parameters() {
        let cfg = ModelConfig { variant: Variant::ShareDvgr, ..ModelConfig::micro() };
        let m = Model::new(cfg, vocab(6), vocab(3)).unwrap();
        let StepGraphs::MultiView { graphs, .. } = m.layout.steps[0].graphs else { panic!() };
        assert_eq!(graphs.amc, graphs.mac);
        assert!(m.params.id("step0.mac.weight").is_none());
    }

    #[test]
    fn tied_steps_share_parameters() {
        let cfg = ModelConfig { tied_steps: true, ..ModelConfig::micro() };
        let m = Model::new(cfg, vocab(6), vocab(3)).unwrap();
        assert_eq!(m.layout.steps[0], m.layout.steps[1]);
    }

    #[test]
    fn same_seed_same_init() {
        let cfg = ModelConfig::micro();
        let a = Model::new(cfg.clone(), vocab(6), vocab(3)).unwrap();
        let b = Model::new(cfg, vocab(6), vocab(3)).unwrap();
        for ((_, n1, t1), (_, n2, t2)) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1, t2);
        }
    }

    #[test]
    fn wrong_feature_dims_rejected() {
        let cfg = ModelConfig::micro();
        let m = Model::new(cfg.clone(), vocab(6), vocab(3)).unwrap();
        let mut v = video(&cfg, 2);
        v.app_dim += 1;
        assert!(m.logits(&["t2".into()], &v).is_err());
    }
}
