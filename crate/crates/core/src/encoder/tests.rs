use ndarray::{array, Array1, Array2};

use super::fixtures::{params, record, small_config, spread_params};
use super::*;
use crate::error::Error;
use crate::visual::{box_embed, FeatureGrid};

fn zero_grid(config: &ModelConfig) -> FeatureGrid {
    FeatureGrid {
        side: config.grid_side,
        cells: Array2::zeros((config.grid_side * config.grid_side, config.hidden)),
    }
}

#[test]
fn embedding_of_zero_tables_is_zero() {
    let cfg = small_config(12, 1, 2);
    let p = ModelParams::zeros(&cfg).unwrap();
    let (input, _) = record(&cfg, 5, 1);
    let x = embed_input(&input, &zero_grid(&cfg), &p).unwrap();
    assert!(x.iter().all(|&v| v == 0.0));
}

#[test]
fn zero_grid_leaves_box_embedding() {
    let cfg = small_config(12, 1, 2);
    let mut p = params(&cfg);
    p.emb.tok.fill(0.0);
    p.emb.tag.fill(0.0);
    p.emb.pos.fill(0.0);
    p.emb.seg.fill(0.0);
    let (input, _) = record(&cfg, 6, 2);
    let x = embed_input(&input, &zero_grid(&cfg), &p).unwrap();
    for (i, b) in input.boxes.iter().enumerate() {
        assert_eq!(x.row(i).to_vec(), box_embed(b, &p.emb.x, &p.emb.y).to_vec());
    }
}

#[test]
fn segment_shift_is_segment_row_difference() {
    let cfg = small_config(12, 1, 2);
    let p = params(&cfg);
    let (mut input, _) = record(&cfg, 2, 3);
    input.ids[1] = input.ids[0];
    input.tags[1] = input.tags[0];
    input.boxes[1] = input.boxes[0];
    input.segments = vec![0, 1];
    // same position too: compare two one-token inputs
    let one = |seg: u8| {
        let single = EncoderInput {
            ids: vec![input.ids[0]],
            tags: vec![input.tags[0]],
            segments: vec![seg],
            boxes: vec![input.boxes[0]],
            patch_stats: input.patch_stats.clone(),
        };
        let grid = FeatureGrid {
            side: cfg.grid_side,
            cells: single.patch_stats.dot(&p.emb.patch_w) + &p.emb.patch_b,
        };
        embed_input(&single, &grid, &p).unwrap().row(0).to_owned()
    };
    let diff = one(0) - one(1);
    let expected = &p.emb.seg.row(0) - &p.emb.seg.row(1);
    for (a, b) in diff.iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn embedding_length_mismatch() {
    let cfg = small_config(12, 1, 2);
    let p = params(&cfg);
    let (mut input, _) = record(&cfg, 4, 4);
    input.boxes.pop();
    assert!(matches!(
        embed_input(&input, &zero_grid(&cfg), &p),
        Err(Error::Alignment(_))
    ));
}

#[test]
fn zero_layers_is_identity() {
    let x = array![[0.5, -1.0, 2.0, 0.0, 1.5, 3.0]];
    assert_eq!(encode(&x, &[], 1).unwrap(), x);
}

#[test]
fn non_finite_input_is_rejected() {
    let x = array![[0.5, f64::NAN, 2.0, 0.0, 1.5, 3.0]];
    assert!(matches!(encode(&x, &[], 1), Err(Error::Numerics(_))));
}

/// Scalar re-derivation of one post-norm block on a single token.
fn hand_block(x: &[f64], p: &LayerParams) -> Vec<f64> {
    let c = x.len();
    let lin = |v: &[f64], w: &Array2<f64>, b: &Array2<f64>| -> Vec<f64> {
        (0..w.ncols())
            .map(|j| b[[0, j]] + (0..v.len()).map(|i| v[i] * w[[i, j]]).sum::<f64>())
            .collect()
    };
    let norm = |v: &[f64], g: &Array2<f64>, b: &Array2<f64>| -> Vec<f64> {
        let mean = v.iter().sum::<f64>() / c as f64;
        let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / c as f64;
        let sd = (var + LAYER_NORM_EPS).sqrt();
        (0..c).map(|i| (v[i] - mean) / sd * g[[0, i]] + b[[0, i]]).collect()
    };
    // one key: every head attends fully to the token itself
    let v = lin(x, &p.wv, &p.bv);
    let attn = lin(&v, &p.wo, &p.bo);
    let r1: Vec<f64> = (0..c).map(|i| x[i] + attn[i]).collect();
    let h1 = norm(&r1, &p.ln1_g, &p.ln1_b);
    let a = lin(&h1, &p.w1, &p.b1);
    let act: Vec<f64> = a
        .iter()
        .map(|&z| 0.5 * z * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (z + 0.044715 * z.powi(3))).tanh()))
        .collect();
    let f = lin(&act, &p.w2, &p.b2);
    let r2: Vec<f64> = (0..c).map(|i| h1[i] + f[i]).collect();
    norm(&r2, &p.ln2_g, &p.ln2_b)
}

#[test]
fn single_token_block_matches_hand_computation() {
    let cfg = small_config(6, 1, 2);
    let p = spread_params(&cfg, 5);
    let x = array![[0.3, -0.7, 1.1, 0.05, -0.4, 0.9]];
    let out = encode(&x, &p.layers, cfg.heads).unwrap();
    let expected = hand_block(x.row(0).as_slice().unwrap(), &p.layers[0]);
    for (a, b) in out.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn uniform_logits_mlm_is_ln_v() {
    let cfg = small_config(12, 0, 2);
    let mut p = params(&cfg);
    p.heads.mlm_w.fill(0.0);
    p.heads.mlm_b.fill(0.0);
    let (input, targets) = record(&cfg, 7, 6);
    let hidden = forward_hidden(&p, &cfg, &input).unwrap();
    let l = compute_losses(&hidden, &targets, &p.heads, &cfg);
    assert!((l.mlm - (cfg.vocab_size as f64).ln()).abs() < 1e-10);
}

#[test]
fn empty_task_contributes_zero() {
    let cfg = small_config(12, 1, 2);
    let p = params(&cfg);
    let (input, mut targets) = record(&cfg, 7, 7);
    targets.mlm.clear();
    let hidden = forward_hidden(&p, &cfg, &input).unwrap();
    let l = compute_losses(&hidden, &targets, &p.heads, &cfg);
    assert_eq!(l.mlm, 0.0);
    assert_eq!(l.total, l.tsp + l.vmd);
}

fn scalar_ce(logits: &[f64], label: usize) -> f64 {
    let z: f64 = logits.iter().map(|v| v.exp()).sum();
    -(logits[label].exp() / z).ln()
}

#[test]
fn losses_match_scalar_recomputation() {
    let cfg = small_config(12, 1, 3);
    let p = spread_params(&cfg, 8);
    let (input, targets) = record(&cfg, 8, 8);
    let h = forward_hidden(&p, &cfg, &input).unwrap();
    let lin = |x: Vec<f64>, w: &Array2<f64>, b: &Array2<f64>| -> Vec<f64> {
        (0..w.ncols())
            .map(|j| b[[0, j]] + x.iter().enumerate().map(|(i, v)| v * w[[i, j]]).sum::<f64>())
            .collect()
    };
    let row = |r: usize| h.row(r).to_vec();
    let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
    let mlm = mean(
        targets
            .mlm
            .iter()
            .map(|&(r, l)| scalar_ce(&lin(row(r), &p.heads.mlm_w, &p.heads.mlm_b), l as usize))
            .collect(),
    );
    let tsp = mean(
        targets
            .tsp
            .iter()
            .map(|&(s, c, l)| {
                let mut x = row(s);
                x.extend(row(c));
                scalar_ce(&lin(x, &p.heads.tsp_w, &p.heads.tsp_b), l)
            })
            .collect(),
    );
    let vmd = mean(
        targets
            .vmd
            .iter()
            .map(|&(r, l)| scalar_ce(&lin(row(r), &p.heads.vmd_w, &p.heads.vmd_b), l as usize))
            .collect(),
    );
    let got = compute_losses(&h, &targets, &p.heads, &cfg);
    assert!((got.mlm - mlm).abs() < 1e-10);
    assert!((got.tsp - tsp).abs() < 1e-10);
    assert!((got.vmd - vmd).abs() < 1e-10);
    assert!((got.total - (mlm + tsp + vmd)).abs() < 1e-10);
}

#[test]
fn tsp_pair_order_matters() {
    let cfg = small_config(12, 1, 2);
    let p = spread_params(&cfg, 9);
    let (input, mut targets) = record(&cfg, 8, 9);
    targets.mlm.clear();
    targets.vmd.clear();
    targets.tsp = vec![(1, 6, 0)];
    let h = forward_hidden(&p, &cfg, &input).unwrap();
    let a = compute_losses(&h, &targets, &p.heads, &cfg).tsp;
    targets.tsp = vec![(6, 1, 0)];
    let b = compute_losses(&h, &targets, &p.heads, &cfg).tsp;
    assert_ne!(a, b);
}

#[test]
fn full_model_gradients_match_differences() {
    let cfg = small_config(12, 1, 2);
    let p = spread_params(&cfg, 10);
    let (input, targets) = record(&cfg, 9, 10);
    let r = grad_check(&p, &cfg, &input, &targets, 2e-3, 240, 1).unwrap();
    assert!(r.checked >= 200);
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn linear_model_gradients_are_tight() {
    let cfg = small_config(12, 0, 2);
    let p = spread_params(&cfg, 11);
    let (input, targets) = record(&cfg, 9, 11);
    let r = grad_check(&p, &cfg, &input, &targets, 1e-2, 200, 2).unwrap();
    assert!(r.checked >= 200);
    assert!(r.max_rel_error < 1e-8, "{r:?}");
}

#[test]
fn zero_epsilon_is_rejected() {
    let cfg = small_config(12, 0, 2);
    let p = params(&cfg);
    let (input, targets) = record(&cfg, 3, 12);
    assert!(matches!(
        grad_check(&p, &cfg, &input, &targets, 0.0, 10, 0),
        Err(Error::InvalidEpsilon(_))
    ));
}

#[test]
fn deterministic_losses() {
    let cfg = small_config(12, 2, 2);
    let p = params(&cfg);
    let (input, targets) = record(&cfg, 10, 13);
    let a = loss_and_grad(&p, &cfg, &input, &targets, None).unwrap();
    let b = loss_and_grad(&p, &cfg, &input, &targets, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn adamw_first_step_closed_form() {
    let cfg = small_config(12, 0, 2);
    let mut p = ModelParams::zeros(&cfg).unwrap();
    p.heads.tsp_w[[0, 0]] = 0.4;
    let mut g = p.zeros_like();
    g.heads.tsp_w[[0, 0]] = -2.5e-3;
    let adam = AdamWConfig::default();
    let mut state = OptimizerState::new(&p);
    let lr = 1e-3;
    adamw_update(&mut p, &g, &mut state, &adam, lr);
    // m_hat = g, v_hat = g^2 after one step
    let gv: f64 = -2.5e-3;
    let w = 0.4 - lr * adam.weight_decay * 0.4;
    let expected = w - lr * gv / (gv.abs() + adam.eps);
    assert!((p.heads.tsp_w[[0, 0]] - expected).abs() < 1e-15);
    assert!((p.heads.tsp_w[[0, 0]] - (0.4 - lr * adam.weight_decay * 0.4 + lr)).abs() < 1e-6);
    // zero-gradient, non-decayed entries stay put
    assert_eq!(p.heads.tsp_b[[0, 0]], 0.0);
}

#[test]
fn bias_is_not_decayed() {
    let cfg = small_config(12, 0, 2);
    let mut p = ModelParams::zeros(&cfg).unwrap();
    p.heads.vmd_b[[0, 1]] = 1.0;
    p.heads.vmd_w[[0, 1]] = 1.0;
    let g = p.zeros_like();
    let mut state = OptimizerState::new(&p);
    adamw_update(&mut p, &g, &mut state, &AdamWConfig::default(), 0.1);
    assert_eq!(p.heads.vmd_b[[0, 1]], 1.0);
    assert!((p.heads.vmd_w[[0, 1]] - 0.999).abs() < 1e-15);
}

#[test]
fn zero_lr_leaves_parameters() {
    let cfg = small_config(12, 1, 2);
    let mut p = params(&cfg);
    let before = p.clone();
    let (input, targets) = record(&cfg, 6, 14);
    let mut state = OptimizerState::new(&p);
    let adam = AdamWConfig {
        lr: 0.0,
        ..AdamWConfig::default()
    };
    let sched = LinearSchedule::new(0.0, 0.1, 10);
    train_step(&mut p, &mut state, &[(&input, &targets)], &cfg, &adam, &sched).unwrap();
    assert_eq!(p, before);
    assert_eq!(state.step, 1);
}

#[test]
fn schedule_shape() {
    let s = LinearSchedule::new(1.0, 0.1, 100);
    assert_eq!(s.warmup_steps, 10);
    assert_eq!(s.lr_at(1), 0.1);
    assert_eq!(s.lr_at(10), 1.0);
    assert_eq!(s.lr_at(55), 0.5);
    assert_eq!(s.lr_at(100), 0.0);
    assert_eq!(s.lr_at(120), 0.0);
}

#[test]
fn training_reduces_loss_on_one_record() {
    let cfg = small_config(12, 1, 2);
    let mut p = params(&cfg);
    let (input, targets) = record(&cfg, 10, 15);
    let mut state = OptimizerState::new(&p);
    let adam = AdamWConfig {
        lr: 1e-2,
        ..AdamWConfig::default()
    };
    let sched = LinearSchedule::new(adam.lr, 0.1, 60);
    let first = train_step(&mut p, &mut state, &[(&input, &targets)], &cfg, &adam, &sched).unwrap();
    let mut last = first;
    for _ in 1..60 {
        last = train_step(&mut p, &mut state, &[(&input, &targets)], &cfg, &adam, &sched).unwrap();
    }
    assert!(last.losses.total < 0.5 * first.losses.total, "{first:?} {last:?}");
}

#[test]
fn dropout_changes_loss_but_is_seeded() {
    let cfg = ModelConfig {
        dropout: 0.2,
        ..small_config(12, 1, 2)
    };
    let p = params(&cfg);
    let (input, targets) = record(&cfg, 6, 16);
    let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let a = loss_and_grad(&p, &cfg, &input, &targets, Some(&mut r1)).unwrap();
    let b = loss_and_grad(&p, &cfg, &input, &targets, Some(&mut r2)).unwrap();
    let clean = loss_and_grad(&p, &cfg, &input, &targets, None).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.0, clean.0);
}

use rand::SeedableRng;

#[test]
fn checkpoint_round_trip_is_byte_exact() {
    let cfg = small_config(12, 1, 2);
    let p = params(&cfg);
    let mut opt = OptimizerState::new(&p);
    opt.step = 7;
    opt.m.heads.vmd_w[[1, 1]] = 0.25;
    let state = TrainingState {
        config: cfg.clone(),
        adam: AdamWConfig::default(),
        schedule: LinearSchedule::new(5e-5, 0.1, 50),
        params: p,
        opt,
        extra: serde_json::json!({"batch": 8}),
    };
    for dtype in [DType::F64, DType::F32] {
        let bytes = state.to_checkpoint(dtype).unwrap().to_bytes();
        let ck = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(ck.to_bytes(), bytes);
        let back = TrainingState::from_checkpoint(&ck).unwrap();
        if dtype == DType::F64 {
            assert_eq!(back, state);
        } else {
            assert_eq!(back.opt.step, 7);
        }
    }
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let ck = Checkpoint {
        meta: "{}".into(),
        tensors: vec![Tensor {
            name: "t".into(),
            dims: vec![2, 2],
            dtype: DType::F64,
            data: vec![1.0, 2.0, 3.0, 4.0],
        }],
    };
    let bytes = ck.to_bytes();
    assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(Checkpoint::from_bytes(&extra).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Checkpoint::from_bytes(&bad).is_err());
}

#[test]
fn parameter_names_are_unique() {
    let cfg = small_config(12, 2, 2);
    let p = ModelParams::zeros(&cfg).unwrap();
    let names = p.names();
    let set: std::collections::HashSet<_> = names.iter().collect();
    assert_eq!(set.len(), names.len());
    assert_eq!(names.len(), 8 + 2 * 16 + 6);
    let _ = Array1::<f64>::zeros(1);
}

#[test]
fn config_checks() {
    assert!(ModelConfig::default().validate().is_ok());
    let bad = ModelConfig {
        hidden: 50,
        ..ModelConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = ModelConfig {
        heads: 5,
        ..ModelConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = ModelConfig {
        vocab_size: 0,
        ..ModelConfig::default()
    };
    assert!(bad.validate().is_err());
    assert!(ModelConfig {
        layers: 0,
        ..ModelConfig::default()
    }
    .validate()
    .is_ok());
}
