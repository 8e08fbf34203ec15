use proptest::prelude::*;
use ssavd::data::{SynthConfig, SynthSource};
use ssavd::model::{write_checkpoint, Detector, ModelConfig, ParamStore};
use ssavd::objective::{LossConfig, Toggles};
use ssavd::tensor::{RngState, Tensor};
use ssavd::train::*;

fn single(theta: f32) -> ParamStore<f32> {
    let mut p = ParamStore::new();
    p.add("w", Tensor::from_vec(vec![theta]));
    p
}

#[test]
fn adamw_zero_gradient_is_pure_decay() {
    let mut p = single(2.0);
    let mut st = OptimState::new(&p, AdamWConfig::default());
    st.step(&mut p, &[Tensor::from_vec(vec![0.0])], 0.1).unwrap();
    let want = 2.0 * (1.0 - 0.1 * 0.01);
    assert!((p.tensors()[0].data()[0] as f64 - want).abs() < 1e-6);
    assert_eq!(st.step, 1);
}

#[test]
fn adamw_first_step_is_bias_corrected() {
    let mut p = single(1.0);
    let cfg = AdamWConfig {
        weight_decay: 0.0,
        ..AdamWConfig::default()
    };
    let mut st = OptimState::new(&p, cfg);
    st.step(&mut p, &[Tensor::from_vec(vec![1.0])], 0.1).unwrap();
    let want = 1.0 - 0.1 / (1.0 + 1e-8);
    assert!((p.tensors()[0].data()[0] as f64 - want).abs() < 1e-6);
}

#[test]
fn adamw_rejects_non_finite_gradient_untouched() {
    let mut p = single(1.0);
    let mut st = OptimState::new(&p, AdamWConfig::default());
    let err = st.step(&mut p, &[Tensor::from_vec(vec![f32::NAN])], 0.1).unwrap_err();
    assert!(matches!(err, ssavd::Error::NonFinite(_)));
    assert_eq!(p.tensors()[0].data()[0], 1.0);
    assert_eq!(st.step, 0);
}

proptest! {
    #[test]
    fn adamw_without_decay_or_gradient_is_identity(theta in -10.0f32..10.0, lr in 1e-5f64..1.0, steps in 1usize..5) {
        let mut p = single(theta);
        let mut st = OptimState::new(&p, AdamWConfig { weight_decay: 0.0, ..AdamWConfig::default() });
        for _ in 0..steps {
            st.step(&mut p, &[Tensor::from_vec(vec![0.0])], lr).unwrap();
        }
        prop_assert_eq!(p.tensors()[0].data()[0], theta);
        prop_assert!(st.v.iter().flatten().all(|&v| v >= 0.0));
    }

    #[test]
    fn lr_schedule_is_affine(e in 0usize..199) {
        let f = |e| lr_schedule(e, 200, 5e-4, 1e-4).unwrap();
        let slope = (1e-4 - 5e-4) / 199.0;
        prop_assert!((f(e + 1) - f(e) - slope).abs() < 1e-15);
    }

    #[test]
    fn auc_matches_brute_force(pairs in prop::collection::vec((0u8..6, any::<bool>()), 1..40)) {
        // coarse scores force plenty of ties
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 5.0).collect();
        let pos: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let (mut wins, mut n) = (0.0, 0.0);
        for i in 0..pairs.len() {
            for j in 0..pairs.len() {
                if pos[i] && !pos[j] {
                    n += 1.0;
                    wins += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        match auc(&scores, &pos) {
            None => prop_assert!(n == 0.0),
            Some(a) => {
                prop_assert!((a - wins / n).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&a));
            }
        }
    }

    #[test]
    fn constant_half_predictor_scores_majority_rate(real in prop::collection::vec(any::<bool>(), 1..50)) {
        let n_real = real.iter().filter(|&&r| r).count();
        let majority = n_real.max(real.len() - n_real) as f64 / real.len() as f64;
        prop_assert_eq!(accuracy(&vec![0.5; real.len()], &real), majority);
    }

    #[test]
    fn double_flip_is_identity(seed in any::<u64>()) {
        let mut rng = RngState::new(seed);
        let v = Tensor::<f32>::from_fn(&[2, 3, 5, 7], |_| rng.uniform(0.0, 1.0) as f32);
        prop_assert_eq!(hflip(&hflip(&v)), v);
    }
}

#[test]
fn lr_schedule_endpoints() {
    assert_eq!(lr_schedule(0, 200, 5e-4, 1e-4).unwrap(), 5e-4);
    assert_eq!(lr_schedule(199, 200, 5e-4, 1e-4).unwrap(), 1e-4);
    assert!((lr_schedule(100, 200, 5e-4, 1e-4).unwrap() - 2.99e-4).abs() < 1e-6);
    assert!(lr_schedule(200, 200, 5e-4, 1e-4).is_err());
}

#[test]
fn auc_examples() {
    let a = auc(&[0.9, 0.6, 0.65, 0.2], &[true, true, false, false]).unwrap();
    assert!((a - 0.75).abs() < 1e-12);
    assert_eq!(auc(&[0.9, 0.8, 0.1], &[true, true, false]), Some(1.0));
    assert_eq!(auc(&[0.3; 4], &[true, false, true, false]), Some(0.5));
    assert_eq!(auc(&[0.3, 0.4], &[true, true]), None);
}

#[test]
fn single_class_targets_report_absent_auc() {
    let m = TargetMetrics::compute(&[0.9, 0.8], &[true, true]);
    assert_eq!(m.auc, None);
    assert_eq!(m.acc, 1.0);
}

fn clip(seed: u64) -> (Tensor<f32>, Tensor<f32>) {
    let cfg = SynthConfig::for_model(&ModelConfig::tiny(), [1; 4], seed);
    cfg.clip(0)
}

#[test]
fn augment_off_is_identity() {
    let (v, a) = clip(3);
    let (v2, a2) = augment(&v, &a, &mut RngState::new(1), &AugmentConfig::off());
    assert_eq!((v2, a2), (v, a));
}

#[test]
fn augment_is_seed_deterministic() {
    let (v, a) = clip(4);
    let cfg = AugmentConfig {
        flip_p: 1.0,
        rotate_p: 1.0,
        pixel_noise_p: 1.0,
        jpeg_p: 1.0,
        audio_noise_p: 1.0,
        ..AugmentConfig::default()
    };
    let x = augment(&v, &a, &mut RngState::new(9), &cfg);
    let y = augment(&v, &a, &mut RngState::new(9), &cfg);
    assert_eq!(x, y);
    assert_ne!(x.0, v);
    assert_ne!(x.1, a);
    assert_eq!(x.0.dims(), v.dims());
}

#[test]
fn zero_rotation_is_identity_and_rotation_preserves_constants() {
    let (v, _) = clip(5);
    assert!(rotate(&v, 0.0).max_abs_diff(&v) < 1e-6);
    let c = Tensor::<f32>::full(&[1, 3, 9, 9], 0.25);
    assert!(rotate(&c, 10.0).max_abs_diff(&c) < 1e-6);
}

#[test]
fn jpeg_like_keeps_flat_blocks_and_degrades_detail() {
    let flat = Tensor::<f32>::full(&[1, 1, 16, 16], 128.0 / 255.0);
    assert!(jpeg_like(&flat, 50.0).max_abs_diff(&flat) < 1e-5);
    let mut rng = RngState::new(2);
    let noisy = Tensor::<f32>::from_fn(&[1, 1, 16, 16], |_| rng.uniform(0.0, 1.0) as f32);
    let lo = jpeg_like(&noisy, 10.0).max_abs_diff(&noisy);
    let hi = jpeg_like(&noisy, 95.0).max_abs_diff(&noisy);
    assert!(lo > hi, "low quality should lose more detail ({lo} vs {hi})");
}

#[test]
fn report_round_trips_through_text() {
    let m = TargetMetrics {
        acc: 0.75,
        auc: Some(0.5),
    };
    let r = MetricReport {
        samples: 4,
        visual: m,
        audio: TargetMetrics { acc: 1.0, auc: None },
        whole: m,
        params: 10,
        loss_curve: vec![],
    };
    let text = r.render().unwrap();
    assert!(text.contains("audio.auc = absent"));
    assert!(text.contains("visual.acc = 0.750000"));
    assert_eq!(MetricReport::parse(&text).unwrap(), r);
}

fn tiny_run(seed: u64, toggles: Toggles) -> (Vec<u8>, Vec<EpochLog>) {
    let cfg = ModelConfig::tiny();
    let src = SynthSource::new(SynthConfig::for_model(&cfg, [2; 4], 11)).unwrap();
    let idx: Vec<usize> = (0..8).collect();
    let plan = TrainPlan {
        epochs: 2,
        batch_size: 4,
        seed,
        loss: LossConfig::with_toggles(toggles),
        ..TrainPlan::default()
    };
    let out = train(Detector::new(cfg, seed).unwrap(), &src, &idx, &idx[..4], &plan, None).unwrap();
    assert_eq!(out.steps, 4);
    (write_checkpoint(&out.last).unwrap(), out.log)
}

#[test]
fn training_replays_bit_for_bit() {
    let a = tiny_run(5, Toggles::ALL);
    let b = tiny_run(5, Toggles::ALL);
    assert_eq!(a, b);
    assert_ne!(a.0, tiny_run(6, Toggles::ALL).0);
}

#[test]
fn every_ablation_row_trains() {
    let mut seen = Vec::new();
    for row in ['a', 'b', 'c', 'd', 'e', 'f'] {
        let t = Toggles::ablation(row).unwrap();
        assert!(!seen.contains(&t));
        seen.push(t);
        let (_, log) = tiny_run(1, t);
        assert!(log.iter().all(|e| e.loss.is_finite()));
        if !t.adversarial {
            assert!(log.iter().all(|e| e.adv == 0.0));
        }
        if !t.contrast {
            assert!(log.iter().all(|e| e.con == 0.0));
        }
    }
}

#[test]
fn plan_validation() {
    assert!(TrainPlan {
        batch_size: 1,
        ..TrainPlan::default()
    }
    .validate()
    .is_err());
    assert!(TrainPlan {
        epochs: 0,
        ..TrainPlan::default()
    }
    .validate()
    .is_err());
    assert!(TrainPlan::default().validate().is_ok());
}
