mod common;

use std::collections::BTreeMap;

use dualvgr::autodiff::Graph;
use dualvgr::data::{build_vocab, generate_all, generate_split, Dataset, Split};
use dualvgr::losses::cross_entropy;
use dualvgr::tensor::Tensor;
use dualvgr::train::optim::{Adam, AdamSettings};
use dualvgr::train::{evaluate, sample_gradients, trace_dump, train, Checkpoint, Trainer};
use dualvgr::{Error, Model, ModelConfig, Variant};

fn splits() -> [Dataset; 3] {
    generate_all(&common::tiny_data()).unwrap()
}

fn metrics_lines(config: &ModelConfig, train_set: &Dataset, val_set: &Dataset) -> Vec<String> {
    let mut lines = Vec::new();
    train(config, BTreeMap::new(), train_set, val_set, |r| {
        lines.push(serde_json::to_string(r).unwrap());
        Ok(())
    })
    .unwrap();
    lines
}

#[test]
fn seeded_runs_are_identical() {
    let [tr, va, _] = splits();
    let cfg = common::tiny_model();
    let a = metrics_lines(&cfg, &tr, &va);
    assert_eq!(a.len(), cfg.epochs);
    assert_eq!(a, metrics_lines(&cfg, &tr, &va));
    // Parallel workers reduce in a fixed order, so the trajectory does not
    // depend on the worker count.
    let parallel = ModelConfig { workers: 3, ..cfg.clone() };
    assert_eq!(a, metrics_lines(&parallel, &tr, &va));
    let other = ModelConfig { seed: 8, ..cfg };
    assert_ne!(a, metrics_lines(&other, &tr, &va));
}

#[test]
fn zero_constraint_weights_match_plain_cross_entropy() {
    let [tr, _, _] = splits();
    let one = tr.truncated(1).unwrap();
    let cfg = ModelConfig { gamma: 0.0, beta: 0.0, batch_size: 1, ..common::tiny_model() };
    // Vocabularies from the whole split so the answer space is not trivial.
    let (qv, av) = build_vocab(&tr.instances);
    let model = Model::new(cfg.clone(), qv, av.clone()).unwrap();

    let mut trainer = Trainer::new(model.clone()).unwrap();
    let mut reference = model;
    let mut adam = Adam::new(&reference.params, AdamSettings::new(cfg.learning_rate));
    let q = &one.instances[0];
    let video = &one.videos[0];
    let label = av.get(&q.answer).unwrap();
    for epoch in 1..=4 {
        let losses = trainer.train_epoch(&one, epoch).unwrap();

        let tokens = reference.encode_tokens(&q.tokens);
        let mut g = Graph::new(&reference.params);
        let f = reference.forward(&mut g, &tokens, video).unwrap();
        let ce = cross_entropy(&mut g, f.logits, label).unwrap();
        let ce_value = g.value(ce).item();
        g.backward(ce);
        let mut grads: Vec<Option<Tensor>> = vec![None; reference.params.len()];
        for (id, t) in g.param_grads() {
            grads[id.0] = Some(t.clone());
        }
        drop(g);
        adam.update(&mut reference.params, &grads);

        assert_eq!(losses.total.to_bits(), ce_value.to_bits(), "epoch {epoch}");
        assert_eq!(losses.task.to_bits(), ce_value.to_bits());
        assert_eq!(trainer.model.params, reference.params, "epoch {epoch}");
    }
}

#[test]
fn checkpoint_reload_reproduces_forward_bitwise() {
    // The tiny held-out splits can contain answers never seen in training,
    // so the checks run on the training split itself.
    let [tr, va, _] = splits();
    let te = &tr;
    let outcome = train(&common::tiny_model(), BTreeMap::new(), &tr, &va, |_| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.bin");
    outcome.last.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.epoch, outcome.last.epoch);
    assert_eq!(back.history, outcome.last.history);
    assert_eq!(back.optimizer, outcome.last.optimizer);
    for q in &te.instances {
        let video = te.video(&q.video_id).unwrap();
        let a = outcome.last.model.logits(&q.tokens, video).unwrap();
        let b = back.model.logits(&q.tokens, video).unwrap();
        assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }
    assert_eq!(evaluate(&outcome.last.model, te).unwrap(), evaluate(&back.model, te).unwrap());
}

#[test]
fn best_checkpoint_is_earliest_best_epoch() {
    let [tr, va, _] = splits();
    let cfg = ModelConfig { epochs: 4, ..common::tiny_model() };
    let outcome = train(&cfg, BTreeMap::new(), &tr, &va, |_| Ok(())).unwrap();
    let accs: Vec<f64> = outcome.history.iter().map(|r| r.val_acc).collect();
    let best = accs.iter().cloned().fold(f64::MIN, f64::max);
    let expected = accs.iter().position(|&a| a == best).unwrap() + 1;
    assert_eq!(outcome.best.epoch, expected);
    assert_eq!(outcome.last.epoch, 4);
    assert_eq!(outcome.best.history.len(), 4);
}

#[test]
fn zero_decoder_scores_uniform_chance() {
    let cfg = common::tiny_data();
    let mut data = generate_split(&cfg, Split::Train, 60).unwrap();
    let (qv, _) = build_vocab(&data.instances);
    let answers: Vec<String> = (0..6).map(|i| format!("answer{i}")).collect();
    // Round-robin labels make every class equally frequent.
    for (i, q) in data.instances.iter_mut().enumerate() {
        q.answer = answers[i % answers.len()].clone();
    }
    let (_, av) = build_vocab(&data.instances);
    let mut model = Model::new(common::tiny_model(), qv, av).unwrap();
    for name in ["decoder.output", "decoder.output_bias"] {
        let id = model.params.id(name).unwrap();
        model.params.get_mut(id).data_mut().fill(0.0);
    }
    let q = &data.instances[0];
    let p = model.predict(&q.tokens, data.video(&q.video_id).unwrap(), false).unwrap();
    assert!(p.probabilities.iter().all(|&x| (x - 1.0 / 6.0).abs() < 1e-12));
    let report = evaluate(&model, &data).unwrap();
    assert!((report.accuracy - 1.0 / 6.0).abs() < 1e-12, "{}", report.accuracy);
}

#[test]
fn single_instance_with_correct_argmax_scores_one() {
    let [tr, _, _] = splits();
    let one = tr.truncated(1).unwrap();
    let (qv, _) = build_vocab(&tr.instances);
    let (_, av) = build_vocab(&tr.instances);
    let mut model = Model::new(common::tiny_model(), qv, av.clone()).unwrap();
    let id = model.params.id("decoder.output_bias").unwrap();
    let label = av.get(&one.instances[0].answer).unwrap();
    model.params.get_mut(id).data_mut()[label] = 100.0;
    let report = evaluate(&model, &one).unwrap();
    assert_eq!(report.accuracy, 1.0);
    assert_eq!((report.correct, report.total), (1, 1));
}

#[test]
fn per_type_accuracy_partitions_overall() {
    let [tr, va, _] = splits();
    let te = &tr;
    let outcome = train(&common::tiny_model(), BTreeMap::new(), &tr, &va, |_| Ok(())).unwrap();
    let report = evaluate(&outcome.best.model, te).unwrap();
    let total: usize = report.per_qtype.values().map(|t| t.total).sum();
    let correct: usize = report.per_qtype.values().map(|t| t.correct).sum();
    assert_eq!(total, te.len());
    assert_eq!(correct, report.correct);
    let weighted: f64 = report.per_qtype.values().map(|t| t.accuracy() * t.total as f64).sum::<f64>() / total as f64;
    assert!((weighted - report.accuracy).abs() < 1e-12);
    for (ty, t) in &report.per_qtype {
        assert_eq!(t.total, te.instances.iter().filter(|q| q.qtype == *ty).count());
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let [tr, _, _] = splits();
    let (qv, av) = build_vocab(&tr.instances);
    let cfg = ModelConfig { learning_rate: 0.0, ..common::tiny_model() };
    let model = Model::new(cfg, qv, av).unwrap();
    let before = model.params.clone();
    let mut trainer = Trainer::new(model).unwrap();
    trainer.train_epoch(&tr, 1).unwrap();
    assert_eq!(trainer.model.params, before);
    assert!(trainer.optimizer.step > 0);
}

#[test]
fn non_finite_task_loss_is_named() {
    let [tr, _, _] = splits();
    let (qv, av) = build_vocab(&tr.instances);
    let mut model = Model::new(common::tiny_model(), qv, av).unwrap();
    let id = model.params.id("decoder.output_bias").unwrap();
    model.params.get_mut(id).data_mut()[0] = f64::NAN;
    let mut trainer = Trainer::new(model).unwrap();
    match trainer.train_epoch(&tr, 1) {
        Err(Error::NonFiniteLoss { term, epoch, .. }) => {
            assert_eq!(term, "L_t");
            assert_eq!(epoch, 1);
        }
        other => panic!("expected non-finite loss, got {other:?}"),
    }
}

#[test]
fn trace_has_one_record_per_step() {
    let [tr, _, te] = splits();
    let (qv, av) = build_vocab(&tr.instances);
    let cfg = ModelConfig { steps: 3, ..common::tiny_model() };
    let model = Model::new(cfg.clone(), qv, av).unwrap();
    let q = &te.instances[0];
    let doc = trace_dump(&model, &te, q, true).unwrap();
    assert_eq!(doc.steps.len(), 3);
    assert_eq!(doc.qid, q.qid);
    assert_eq!(doc.answer, q.answer);
    for (i, s) in doc.steps.iter().enumerate() {
        assert_eq!(s.step, i + 1);
        assert_eq!(s.question_attention.len(), q.tokens.len());
        assert!((s.question_attention.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert_eq!(s.appearance_mask.len(), cfg.n_clips);
        assert_eq!(s.motion_mask.len(), cfg.n_clips);
        assert!(s.appearance_mask.iter().chain(&s.motion_mask).all(|&b| b > 0.0 && b < 1.0));
        assert_eq!(s.gat_attention.len(), 4);
    }
    assert!((doc.readout_weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    let json: serde_json::Value = serde_json::to_value(&doc).unwrap();
    assert_eq!(json["steps"].as_array().unwrap().len(), 3);
    assert!(json["steps"][0]["view_weights"].is_object());
    assert!(doc.mean_masks().is_some());
}

#[test]
fn single_stream_variants_report_no_constraints() {
    let [tr, va, _] = splits();
    for variant in [Variant::Ag, Variant::Mg] {
        let cfg = ModelConfig { variant, epochs: 1, ..common::tiny_model() };
        let outcome = train(&cfg, BTreeMap::new(), &tr, &va, |_| Ok(())).unwrap();
        let r = &outcome.history[0];
        assert_eq!((r.train_lc, r.train_ld), (0.0, 0.0), "{variant}");
        assert_eq!(r.train_loss, r.train_lt);
        let q = &tr.instances[0];
        let model = &outcome.last.model;
        let s = sample_gradients(model, &model.encode_tokens(&q.tokens), tr.video(&q.video_id).unwrap(), 0).unwrap();
        assert_eq!((s.consistency, s.disparity), (0.0, 0.0));
    }
}

#[test]
fn answers_outside_the_vocabulary_reject_the_checkpoint() {
    let [tr, va, _] = splits();
    let te = &tr;
    let outcome = train(&ModelConfig { epochs: 1, ..common::tiny_model() }, BTreeMap::new(), &tr, &va, |_| Ok(())).unwrap();
    let mut odd = te.clone();
    odd.instances[0].answer = "no-such-answer".into();
    assert!(matches!(evaluate(&outcome.best.model, &odd), Err(Error::InvalidCheckpoint(_))));

    let wide = generate_split(&dualvgr::DataConfig { app_dim: 7, ..common::tiny_data() }, Split::Test, 8).unwrap();
    assert!(matches!(evaluate(&outcome.best.model, &wide), Err(Error::InvalidCheckpoint(_))));
}

#[test]
fn unknown_variant_lists_the_registry() {
    let err = "DualGraph".parse::<Variant>().unwrap_err();
    let text = err.to_string();
    assert!(matches!(err, Error::InvalidArgument(_)));
    for v in Variant::ALL {
        assert!(text.contains(v.name()), "{text}");
    }
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
    }
}

#[test]
fn damaged_checkpoint_is_rejected() {
    let [tr, _, _] = splits();
    let (qv, av) = build_vocab(&tr.instances);
    let model = Model::new(common::tiny_model(), qv, av).unwrap();
    let ckpt = Trainer::new(model).unwrap().snapshot();
    let bytes = ckpt.to_bytes().unwrap();
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]), Err(Error::InvalidCheckpoint(_))));
    assert!(matches!(Checkpoint::from_bytes(b"not a checkpoint"), Err(Error::InvalidCheckpoint(_))));
}
