use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;

use super::*;
use crate::autodiff::Graph;
use crate::model::{embed_features, encoder_forward, quantile_head, ForwardPlan};
use crate::synthetic::{PoolConfig, SynthRng};

fn tiny_model() -> ModelConfig {
    ModelConfig {
        patch_len: 4,
        d_model: 8,
        n_blocks: 1,
        n_heads: 2,
        d_ff: 16,
        max_context: 64,
        max_output_patches: 2,
        ..Default::default()
    }
}

fn tiny_train() -> TrainConfig {
    TrainConfig {
        stage1: StageConfig { context: 24, steps: 4, max_output_patches: 1 },
        stage2: StageConfig { context: 64, steps: 4, max_output_patches: 2 },
        min_context: 8,
        batch_tasks: 4,
        seed: 11,
        ..Default::default()
    }
}

fn pool() -> GeneratorPool {
    GeneratorPool::new(PoolConfig::default()).unwrap()
}

fn fixed_batch(seed: u64) -> TrainingBatch {
    let cfg = tiny_train();
    sample_training_batch(&pool(), &cfg, &cfg.stage2, 4, &mut SynthRng::seed_from_u64(seed)).unwrap()
}

#[test]
fn schedule_warms_up_then_decays() {
    let cfg = TrainConfig { stage1: StageConfig { context: 8, steps: 100, max_output_patches: 1 }, ..tiny_train() };
    let total = cfg.total_steps();
    let warm = (0.05 * total as f64).ceil() as usize;
    assert!(learning_rate(&cfg, 0) > 0.0);
    for s in 1..warm {
        assert!(learning_rate(&cfg, s) > learning_rate(&cfg, s - 1));
    }
    assert!((learning_rate(&cfg, warm - 1) - cfg.lr).abs() < 1e-18);
    for s in warm + 1..total {
        assert!(learning_rate(&cfg, s) <= learning_rate(&cfg, s - 1));
    }
    let end = learning_rate(&cfg, total - 1);
    assert!(end >= cfg.min_lr_frac * cfg.lr && end < 0.2 * cfg.lr);
}

#[test]
fn config_validation() {
    let m = tiny_model();
    assert!(tiny_train().validate(&m).is_ok());
    let bad = TrainConfig { task_mix: [0.5, 0.5, 0.5], ..tiny_train() };
    assert!(bad.validate(&m).is_err());
    let mut bad = tiny_train();
    bad.stage2.context = 16;
    assert!(bad.validate(&m).is_err());
    let mut bad = tiny_train();
    bad.stage2.max_output_patches = 3;
    assert!(bad.validate(&m).is_err());
}

#[test]
fn univariate_mix_gives_singleton_groups() {
    let cfg = TrainConfig { task_mix: [1.0, 0.0, 0.0], batch_tasks: 6, ..tiny_train() };
    let b = sample_training_batch(&pool(), &cfg, &cfg.stage1, 4, &mut SynthRng::seed_from_u64(3)).unwrap();
    let ids = b.batch.group_ids();
    assert_eq!(ids.len(), 6);
    let mut sorted = ids.clone();
    sorted.dedup();
    assert_eq!(sorted, ids);
}

#[test]
fn batches_are_deterministic() {
    // NaN padding defeats PartialEq, so compare the debug rendering
    let show = |b: TrainingBatch| alloc::format!("{b:?}");
    assert_eq!(show(fixed_batch(5)), show(fixed_batch(5)));
    assert_ne!(show(fixed_batch(5)), show(fixed_batch(6)));
}

#[test]
fn task_family_frequencies_follow_mix() {
    let mix = [0.4, 0.3, 0.3];
    let mut counts = [0usize; 3];
    let mut rng = SynthRng::seed_from_u64(8);
    let n = 10_000;
    for _ in 0..n {
        counts[sample_family(&mix, &mut rng) as usize] += 1;
    }
    for (c, p) in counts.iter().zip(mix) {
        assert!((*c as f64 / n as f64 - p).abs() <= 0.02, "{counts:?}");
    }
}

#[test]
fn batch_rows_have_truth_only_for_targets() {
    let b = fixed_batch(9);
    for (row, truth) in b.batch.rows.iter().zip(&b.truth) {
        assert_eq!(row.role == Role::Target, truth.is_some());
        if let Some(t) = truth {
            assert_eq!(t.len(), b.horizon);
        }
    }
}

#[test]
fn zero_learning_rate_keeps_parameters_bit_exact() {
    let m = tiny_model();
    let cfg = tiny_train();
    let mut state = TrainerState::new(&cfg, &m);
    let before = state.params.clone();
    let loss = train_step(&mut state.params, &mut state.optimizer, &fixed_batch(1), 0.0, &m, 0).unwrap();
    assert!(loss.is_finite());
    assert_eq!(state.params, before);
}

#[test]
fn reported_loss_matches_independent_evaluation() {
    let m = tiny_model();
    let cfg = tiny_train();
    let state = TrainerState::new(&cfg, &m);
    let batch = fixed_batch(2);
    let (loss, _) = loss_and_gradients(&state.params, &batch, &m).unwrap();

    let tb = tokenize_batch(&batch.batch, &m).unwrap();
    let mut g = Graph::new();
    let pv = register_params(&mut g, &state.params);
    let head = forward(&mut g, &pv, &tb, &m).unwrap();
    let pred = g.value(head.predictions).clone();
    let nq = m.num_quantiles();
    let mut inputs = LossInputs { predictions: Vec::new(), targets: Vec::new(), mask: Vec::new() };
    for (s, &(row, patch)) in head.slots.iter().enumerate() {
        let truth = batch.truth[row].as_ref().unwrap();
        for j in 0..m.patch_len {
            let h = patch * m.patch_len + j;
            inputs.predictions.extend_from_slice(&pred.row(s)[j * nq..(j + 1) * nq]);
            if h < batch.horizon {
                inputs.targets.push(tb.scalers[row].normalize(truth[h]));
                inputs.mask.push(1.0);
            } else {
                inputs.targets.push(0.0);
                inputs.mask.push(0.0);
            }
        }
    }
    let independent = pinball_loss(&inputs, &m.quantile_levels).unwrap();
    assert!((loss - independent).abs() <= 1e-12 * independent.abs());
}

#[test]
fn loss_is_invariant_to_target_rescaling() {
    let m = tiny_model();
    let state = TrainerState::new(&tiny_train(), &m);
    let batch = fixed_batch(3);
    let mut scaled = batch.clone();
    let a = 37.5;
    for r in &mut scaled.batch.rows {
        r.history.iter_mut().for_each(|v| *v *= a);
        r.future.iter_mut().for_each(|v| *v *= a);
    }
    for t in scaled.truth.iter_mut().flatten() {
        t.iter_mut().for_each(|v| *v *= a);
    }
    let (l1, _) = loss_and_gradients(&state.params, &batch, &m).unwrap();
    let (l2, _) = loss_and_gradients(&state.params, &scaled, &m).unwrap();
    assert!((l1 - l2).abs() <= 1e-10 * l1, "{l1} vs {l2}");
}

#[test]
fn non_finite_parameters_are_reported() {
    let m = tiny_model();
    let mut state = TrainerState::new(&tiny_train(), &m);
    state.params.reg.data[0] = f64::NAN;
    let err = train_step(&mut state.params, &mut state.optimizer, &fixed_batch(4), 1e-3, &m, 7).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { step: 7, .. }), "{err}");
}

#[test]
fn overfits_one_small_batch() {
    let m = tiny_model();
    let cfg = TrainConfig { grad_clip: 0.0, weight_decay: 0.0, ..tiny_train() };
    let mut state = TrainerState::new(&cfg, &m);
    let batch = fixed_batch(12);
    let first = train_step(&mut state.params, &mut state.optimizer, &batch, 1e-2, &m, 0).unwrap();
    let mut last = first;
    for step in 1..200 {
        last = train_step(&mut state.params, &mut state.optimizer, &batch, 1e-2, &m, step).unwrap();
    }
    assert!(last <= 0.5 * first, "{first} -> {last}");
}

#[test]
fn known_covariate_futures_receive_gradient_and_masked_slots_do_not() {
    let m = tiny_model();
    let state = TrainerState::new(&tiny_train(), &m);
    let cfg = TrainConfig { task_mix: [0.0, 0.0, 1.0], ..tiny_train() };
    let batch = sample_training_batch(&pool(), &cfg, &cfg.stage2, 4, &mut SynthRng::seed_from_u64(21)).unwrap();
    let tb = tokenize_batch(&batch.batch, &m).unwrap();
    let mut g = Graph::new();
    let pv = register_params(&mut g, &state.params);
    let feats = g.leaf(tb.features.clone());
    let tokens = embed_features(&mut g, &pv, feats, &tb).unwrap();
    let plan = ForwardPlan::new(&tb, &m);
    let enc = encoder_forward(&mut g, &pv, tokens, &plan, &m);
    let head = quantile_head(&mut g, &pv, enc, &tb);
    let (targets, mut weights) = loss_targets(&tb, &head.slots, &batch.truth);
    // mask out the first slot entirely
    weights[..m.patch_len].iter_mut().for_each(|w| *w = 0.0);
    let loss = g.pinball(head.predictions, &targets, &weights, &m.quantile_levels).unwrap();
    let grads = g.backward(loss).unwrap();
    let gp = grads.get(head.predictions).unwrap();
    assert!(gp.row(0).iter().all(|&v| v == 0.0));
    let gf = grads.get(feats).unwrap();
    let per_row = tb.layout.n_ctx + tb.layout.n_fut;
    let mut flow = 0.0;
    for (r, row) in batch.batch.rows.iter().enumerate() {
        if row.role == Role::KnownCovariate {
            flow += gf.row(r * per_row + tb.layout.n_ctx).iter().map(|v| v.abs()).sum::<f64>();
        }
    }
    assert!(flow > 0.0);
}

#[test]
fn update_is_invariant_to_row_order_with_singleton_groups() {
    let m = tiny_model();
    let cfg = TrainConfig { task_mix: [1.0, 0.0, 0.0], ..tiny_train() };
    let batch = sample_training_batch(&pool(), &cfg, &cfg.stage1, 4, &mut SynthRng::seed_from_u64(30)).unwrap();
    let mut reversed = batch.clone();
    reversed.batch.rows.reverse();
    reversed.truth.reverse();
    let mut a = TrainerState::new(&cfg, &m);
    let mut b = a.clone();
    train_step(&mut a.params, &mut a.optimizer, &batch, 1e-3, &m, 0).unwrap();
    train_step(&mut b.params, &mut b.optimizer, &reversed, 1e-3, &m, 0).unwrap();
    let mut worst = 0.0f64;
    let mut flat_a = Vec::new();
    a.params.visit(|_, t| flat_a.push(t.clone()));
    let mut i = 0;
    b.params.visit(|_, t| {
        for (x, y) in t.data.iter().zip(&flat_a[i].data) {
            worst = worst.max((x - y).abs());
        }
        i += 1;
    });
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn curriculum_logs_every_step_and_extends_context() {
    let m = tiny_model();
    let cfg = tiny_train();
    let mut longest = [0usize; 2];
    for step in 0..cfg.total_steps() {
        let (stage, sc) = cfg.stage_at(step);
        let b = sample_training_batch(&pool(), &cfg, sc, 4, &mut step_rng(cfg.seed, step)).unwrap();
        let t = b.batch.rows.iter().map(|r| r.history.len()).max().unwrap();
        longest[stage - 1] = longest[stage - 1].max(t);
        assert!(b.horizon <= sc.max_output_patches * 4);
    }
    assert!(longest[0] <= cfg.stage1.context);
    assert!(longest[1] > cfg.stage1.context);

    let (state, log) = run_curriculum(&cfg, &m, &pool(), TrainerState::new(&cfg, &m), |_, _| Ok(())).unwrap();
    assert_eq!(log.len(), cfg.total_steps());
    assert_eq!(state.step, cfg.total_steps());
    assert_eq!(log.iter().map(|e| e.stage).collect::<Vec<_>>(), vec![1, 1, 1, 1, 2, 2, 2, 2]);
}

#[test]
fn resume_reproduces_the_remaining_trajectory() {
    let m = tiny_model();
    let cfg = tiny_train();
    let mut snapshot = None;
    let (_, full) = run_curriculum(&cfg, &m, &pool(), TrainerState::new(&cfg, &m), |e, s| {
        if e.step == 2 {
            snapshot = Some(s.clone());
        }
        Ok(())
    })
    .unwrap();
    let resumed_from = snapshot.unwrap();
    assert_eq!(resumed_from.step, 3);
    let (_, rest) = run_curriculum(&cfg, &m, &pool(), resumed_from, |_, _| Ok(())).unwrap();
    assert_eq!(rest.len(), full.len() - 3);
    for (a, b) in rest.iter().zip(&full[3..]) {
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert_eq!(a, b);
    }
}
