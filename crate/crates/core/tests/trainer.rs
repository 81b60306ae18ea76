mod common;

use camo_core::backbone::{generator_arch, visual_arch};
use camo_core::checkpoint::Checkpoint;
use camo_core::discriminators::{sigmoid, Classifier, VisualDiscriminator};
use camo_core::generator::{loss_vc_from_heads, GeneratorModel, ParamGenerator, LOSS_VC_SIGNS};
use camo_core::landmarks::FaceRecord;
use camo_core::optimizer::{AnyOptimizer, OptimizerKind};
use camo_core::params::ParamRanges;
use camo_core::trainer::*;
use camo_core::CamoError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

const SIZE: usize = 32;

fn small_generator(seed: u64) -> GeneratorModel {
    GeneratorModel::new(generator_arch(SIZE), ParamRanges::default(), seed).unwrap()
}

fn sgd_config(lr: f64, lambda: f64) -> TrainConfig {
    TrainConfig {
        lr,
        lambda,
        optimizer: OptimizerKind::Sgd,
        mu_pull: 0.0,
        visual_enabled: false,
        ..Default::default()
    }
}

fn l_vc<G: ParamGenerator>(g: &G, rec: &FaceRecord) -> f64 {
    loss_vc_from_heads(&g.heads(&rec.image).unwrap(), 1e-6)
}

#[test]
fn loss_ds_closed_forms() {
    assert_eq!(loss_ds(1.0, 1e-6), 0.0);
    assert!((loss_ds(0.5, 1e-6) + 0.6931).abs() < 1e-4);
    assert_eq!(loss_ds(0.0, 1e-6), 1e-6f64.ln());
}

#[test]
fn penalty_closed_forms() {
    assert_eq!(penalty(0.0, 0.0, 1.0), 0.0);
    assert!((penalty(0.0, 0.0, 0.0) - 1.6487).abs() < 1e-4);
    assert!((penalty(-1e3, 1e3, 1.0) + 1.7183).abs() < 1e-4);
}

#[test]
fn loss_vc_closed_forms() {
    assert!((loss_vc_from_heads(&[0.5; 6], 1e-6) + 0.6931).abs() < 1e-4);
    let eps = 1e-6;
    let strong = [1.0, 0.5, 1.0, 1.0, eps, eps];
    assert!((loss_vc_from_heads(&strong, eps) + 2.0 * eps.ln()).abs() < 1e-9);
    assert!(loss_vc_from_heads(&strong, eps) > 20.0);
}

#[test]
fn update_step_is_exact_on_the_toy_generator() {
    let rec = &records(1, SIZE)[0];
    let logit = -0.7;
    let d = constant_detector(SIZE, logit);
    let (lr, lambda) = (0.05, 0.8);
    let cfg = sgd_config(lr, lambda);
    let mut g = ToyGenerator::new(0.4, -1.3);
    let before = g.theta.clone();

    // Hand computation.
    let p = sigmoid(logit);
    let pen = sigmoid(p.ln()).exp() - lambda * sigmoid(0.0).exp();
    let m = mean_pixel(&rec.image);
    let mut grad = [0.0; 2];
    for j in 0..6 {
        let z = before[0] * TOY_C[j] + before[1] * m * TOY_D[j];
        let h = sigmoid(z);
        grad[0] += LOSS_VC_SIGNS[j] * (1.0 - h) * TOY_C[j];
        grad[1] += LOSS_VC_SIGNS[j] * (1.0 - h) * m * TOY_D[j];
    }
    let expected = [before[0] - lr * pen * grad[0], before[1] - lr * pen * grad[1]];

    let mut opt = AnyOptimizer::new(OptimizerKind::Sgd, lr, 2);
    let out = generator_update_step(&mut g, &mut opt, &[rec], None, &d, &cfg, 0).unwrap();
    assert!((out.record.penalty - pen).abs() < 1e-12);
    for k in 0..2 {
        assert!((g.theta[k] - expected[k]).abs() < 1e-10, "θ{k}: {} vs {}", g.theta[k], expected[k]);
    }
}

#[test]
fn zero_penalty_leaves_theta_unchanged() {
    let rec = &records(1, SIZE)[0];
    let logit = 0.3;
    let d = constant_detector(SIZE, logit);
    let v = VisualDiscriminator::from_classifier(
        Classifier::from_network(constant_network(SIZE, logit)).unwrap(),
        1e-3,
        OptimizerKind::Sgd,
    )
    .unwrap();
    let cfg = TrainConfig {
        visual_enabled: true,
        ..sgd_config(0.1, 1.0)
    };
    let mut g = small_generator(1);
    let before = g.theta().to_vec();
    let mut opt = AnyOptimizer::new(OptimizerKind::Sgd, cfg.lr, before.len());
    let out = generator_update_step(&mut g, &mut opt, &[rec], Some(&v), &d, &cfg, 0).unwrap();
    assert_eq!(out.record.penalty, 0.0);
    assert_eq!(g.theta(), &before[..]);
}

#[test]
fn spoofed_detector_without_visual_term_decreases_loss_vc() {
    let rec = &records(1, SIZE)[0];
    let d = constant_detector(SIZE, -40.0);
    let cfg = sgd_config(1e-3, 0.0);
    let mut g = small_generator(2);
    let before = l_vc(&g, rec);
    let mut opt = AnyOptimizer::new(OptimizerKind::Sgd, cfg.lr, g.theta().len());
    let out = generator_update_step(&mut g, &mut opt, &[rec], None, &d, &cfg, 0).unwrap();
    assert!((out.record.penalty - 1.0).abs() < 1e-5);
    assert!(l_vc(&g, rec) < before);
}

#[test]
fn penalty_sign_sets_direction_of_loss_vc_change() {
    let rec = &records(1, SIZE)[0];
    for (logit, lambda, positive) in [(2.0, 0.5, true), (-2.0, 2.0, false), (1.0, 1.0, false), (1.0, 0.3, true)] {
        let d = constant_detector(SIZE, logit);
        let cfg = sgd_config(1e-4, lambda);
        let mut g = small_generator(3);
        let before = l_vc(&g, rec);
        let mut opt = AnyOptimizer::new(OptimizerKind::Sgd, cfg.lr, g.theta().len());
        let out = generator_update_step(&mut g, &mut opt, &[rec], None, &d, &cfg, 0).unwrap();
        assert_eq!(out.record.penalty > 0.0, positive);
        let after = l_vc(&g, rec);
        if positive {
            assert!(after < before, "penalty {}: {before} -> {after}", out.record.penalty);
        } else {
            assert!(after > before, "penalty {}: {before} -> {after}", out.record.penalty);
        }
    }
}

#[test]
fn loss_vc_gradient_matches_finite_differences() {
    let recs = records(3, SIZE);
    for (k, rec) in recs.iter().enumerate() {
        let mut g = small_generator(10 + k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        for t in g.theta_mut() {
            *t += rng.random_range(-0.05..0.05);
        }
        let share = gradient_agreement(&g, rec, 200, 1e-3, k as u64);
        assert!(share >= 0.95, "only {share} of coordinates agree");
    }
}

#[test]
fn generator_checkpoint_round_trip_reproduces_params() {
    let g = small_generator(4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    g.to_checkpoint("g", "test").save(&path).unwrap();
    let loaded = GeneratorModel::from_checkpoint(&Checkpoint::load(&path).unwrap(), Some(&generator_arch(SIZE)), None).unwrap();
    let rec = &records(1, SIZE)[0];
    assert_eq!(g.generate_params(&rec.image).unwrap(), loaded.generate_params(&rec.image).unwrap());
}

fn open_gate(cfg: TrainConfig) -> TrainConfig {
    TrainConfig {
        detector_gate: 0.0,
        validation_size: 4,
        ..cfg
    }
}

#[test]
fn zero_steps_returns_initial_generator_and_empty_log() {
    let recs = records(12, SIZE);
    let d = random_detector(SIZE, 1);
    let g = small_generator(5);
    let cfg = open_gate(TrainConfig {
        max_steps: 0,
        visual_enabled: false,
        ..Default::default()
    });
    let out = train_camgan(&recs[..8], &recs[8..], g.clone(), None, &d, &cfg).unwrap();
    assert!(out.log.is_empty());
    assert_eq!(out.generator.theta(), g.theta());
    assert_eq!(out.selected_step, 0);
    assert_eq!(out.validation.len(), 1);
}

#[test]
fn training_refuses_a_detector_below_the_gate() {
    let recs = records(12, SIZE);
    let d = constant_detector(SIZE, 3.0);
    let cfg = TrainConfig {
        visual_enabled: false,
        ..Default::default()
    };
    let err = train_camgan(&recs[..8], &recs[8..], small_generator(5), None, &d, &cfg).unwrap_err();
    assert!(matches!(err, CamoError::Gate(_)), "{err}");
}

fn short_run() -> TrainOutcome {
    let recs = records(16, SIZE);
    let d = random_detector(SIZE, 7);
    let v = VisualDiscriminator::new(visual_arch(SIZE), 9, 1e-3, OptimizerKind::RmsProp).unwrap();
    let cfg = open_gate(TrainConfig {
        lr: 1e-3,
        max_steps: 6,
        batch_size: 3,
        checkpoint_every: 2,
        ..Default::default()
    });
    train_camgan(&recs[..12], &recs[12..], small_generator(6), Some(v), &d, &cfg).unwrap()
}

#[test]
fn training_is_deterministic_and_logs_every_step() {
    let a = short_run();
    let b = short_run();
    assert_eq!(a.log.len(), 6);
    assert!(a.log.iter().enumerate().all(|(i, r)| r.step == i));
    assert!(a.log.iter().all(|r| r.visual_objective.is_some() && r.visual_p_real.is_some()));
    assert_eq!(a.log, b.log);
    assert_eq!(a.validation, b.validation);
    assert_eq!(a.generator.theta(), b.generator.theta());
    assert_eq!(a.validation.len(), 4);
}

#[test]
fn selection_prefers_score_then_ssim() {
    let p = |score: f64, ssim: f64| ValidationPoint {
        step: 0,
        success_rate: score,
        mean_ssim: ssim,
        score,
    };
    assert!(prefer(&p(0.9, 0.90), &p(0.8, 0.99)));
    assert!(prefer(&p(0.9, 0.97), &p(0.9, 0.96)));
    assert!(!prefer(&p(0.9, 0.96), &p(0.9, 0.96)));
    assert!(!prefer(&p(0.7, 0.99), &p(0.8, 0.90)));
}

#[test]
fn config_validation_and_json_defaults() {
    assert!(TrainConfig::default().validate().is_ok());
    let cfg: TrainConfig = serde_json::from_str(r#"{"lambda": 0.5}"#).unwrap();
    assert_eq!(cfg.lambda, 0.5);
    assert_eq!(cfg.max_steps, TrainConfig::default().max_steps);
    for bad in [
        TrainConfig { lr: 0.0, ..Default::default() },
        TrainConfig { lambda: -1.0, ..Default::default() },
        TrainConfig { eps_log: 0.0, ..Default::default() },
        TrainConfig { batch_size: 0, ..Default::default() },
    ] {
        assert!(matches!(bad.validate(), Err(CamoError::Config(_))));
    }
}
