// Straight-line oracles index arrays the way the equations do.
#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use ssavd::model::saavm::{attention_weights, tokenize};
use ssavd::model::*;
use ssavd::tensor::*;

fn rand_tensor(dims: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = RngState::new(seed);
    Tensor::from_fn(dims, |_| rng.uniform(-1.0, 1.0))
}

fn set(store: &mut ParamStore<f64>, name: &str, dims: &[usize], vals: &[f64]) {
    store.set(name, Tensor::from_f64(dims, vals).unwrap()).unwrap();
}

// --- shapes -----------------------------------------------------------------

fn check_stage_shapes(cfg: &ModelConfig) {
    let model = Detector::<f32>::new(cfg.clone(), 3).unwrap();
    for (s, stage) in model.arch().stages.iter().enumerate() {
        let sh = stage.shape;
        let g = Graph::new();
        let p = model.params().bind_frozen(&g);
        let v = g.constant(rand_tensor(&[cfg.frames, sh.channels, sh.height, sh.width], s as u64).cast());
        let a = g.constant(rand_tensor(&[sh.channels, sh.audio_len], 10 + s as u64).cast());
        let block = &stage.blocks[0];
        let out = block.vpm.forward(&p, &v).unwrap();
        assert_eq!(out.dims(), v.dims(), "stage {} vpm", s + 1);
        let (ov, oa) = block.saavm.forward(&p, &out, &a).unwrap();
        assert_eq!(ov.dims(), v.dims(), "stage {} saavm visual", s + 1);
        assert_eq!(oa.dims(), a.dims(), "stage {} saavm audio", s + 1);
        assert!(ov.tensor().is_finite() && oa.tensor().is_finite());
    }
}

#[test]
fn blocks_preserve_shape_at_every_desk_stage() {
    check_stage_shapes(&ModelConfig::desk());
}

#[test]
fn blocks_preserve_shape_at_every_paper_stage() {
    check_stage_shapes(&ModelConfig::paper());
}

#[test]
fn paper_stage_one_token_geometry() {
    let g = Graph::<f32>::new();
    let v = g.constant(Tensor::zeros(&[10, 1, 56, 56]));
    let a = g.constant(Tensor::zeros(&[1, 4000]));
    let tk = tokenize(&v, &a, 10, 7).unwrap();
    assert_eq!(tk.visual.dims(), vec![640, 49]);
    assert_eq!(tk.audio.dims(), vec![10, 49]);
}

#[test]
fn tokenize_single_window_is_flattened_frame() {
    let g = Graph::<f64>::new();
    let frame = rand_tensor(&[1, 1, 3, 3], 1);
    let v = g.constant(frame.clone());
    let a = g.constant(rand_tensor(&[1, 9], 2));
    let tk = tokenize(&v, &a, 1, 3).unwrap();
    assert_eq!(tk.visual.tensor().data(), frame.data());
    // L' = T·t²·C_m: pooling is a pure reshape
    assert_eq!(tk.audio.tensor().data(), a.tensor().data());
}

#[test]
fn tokenize_rejects_indivisible_extents() {
    let g = Graph::<f64>::new();
    let v = g.constant(Tensor::zeros(&[2, 1, 5, 4]));
    let a = g.constant(Tensor::zeros(&[1, 8]));
    assert!(tokenize(&v, &a, 2, 2).is_err());
    let v = g.constant(Tensor::zeros(&[2, 1, 4, 4]));
    let a = g.constant(Tensor::zeros(&[1, 9]));
    assert!(tokenize(&v, &a, 2, 2).is_err());
}

#[test]
fn paper_backbone_extents() {
    let cfg = ModelConfig::paper();
    let model = Detector::<f32>::new(cfg.clone(), 0).unwrap();
    let g = Graph::new();
    let p = model.params().bind_frozen(&g);
    let v = g.constant(Tensor::zeros(&cfg.visual_input_dims()));
    let a = g.constant(Tensor::zeros(&cfg.audio_input_dims()));
    let (fv, fa) = model.backbone(&p, &v, &a).unwrap();
    assert_eq!(fv.dims(), vec![10, 64, 7, 7]);
    assert_eq!(fa.dims(), vec![64, 500]);
}

#[test]
fn desk_backbone_extents_and_zero_propagation() {
    let cfg = ModelConfig::desk();
    let model = Detector::<f32>::new(cfg.clone(), 0).unwrap();
    let g = Graph::new();
    let p = model.params().bind_frozen(&g);
    let v = g.constant(Tensor::zeros(&cfg.visual_input_dims()));
    let a = g.constant(Tensor::zeros(&cfg.audio_input_dims()));
    let (fv, fa) = model.backbone(&p, &v, &a).unwrap();
    assert_eq!(fv.dims(), vec![10, 64, 2, 2]);
    assert_eq!(fa.dims(), vec![64, 50]);
    assert!(fv.tensor().data().iter().all(|&x| x == 0.0));
    assert!(fa.tensor().data().iter().all(|&x| x == 0.0));
}

#[test]
fn backbone_rejects_wrong_extents() {
    let cfg = ModelConfig::desk();
    let model = Detector::<f32>::zeroed(cfg.clone()).unwrap();
    let g = Graph::new();
    let p = model.params().bind_frozen(&g);
    let v = g.constant(Tensor::zeros(&[10, 3, 32, 32]));
    let a = g.constant(Tensor::zeros(&cfg.audio_input_dims()));
    assert!(model.backbone(&p, &v, &a).is_err());
}

#[test]
fn zero_latents_give_even_odds() {
    let cfg = ModelConfig::desk();
    let model = Detector::<f32>::new(cfg.clone(), 5).unwrap();
    let pred = model
        .predict(
            &Tensor::zeros(&cfg.visual_input_dims()),
            &Tensor::zeros(&cfg.audio_input_dims()),
        )
        .unwrap();
    assert_eq!((pred.visual, pred.audio, pred.whole), (0.5, 0.5, 0.5));

    let g = Graph::new();
    let p = model.params().bind_frozen(&g);
    let fv = g.constant(Tensor::<f32>::zeros(&[1, 10, 64, 2, 2]));
    let fa = g.constant(Tensor::<f32>::zeros(&[1, 64, 50]));
    let out = model.classify(&p, &fv, &fa).unwrap();
    assert_eq!(out.z_v.dims(), vec![1, 64]);
    assert_eq!(out.z_a.dims(), vec![1, 64]);
    for l in [out.logits_v, out.logits_a, out.logits_w] {
        assert_eq!(l.dims(), vec![1, 2]);
    }
}

// --- VPM oracle ---------------------------------------------------------------

fn dconv_same(x: &[f64], n: usize, k: &[f64], ks: usize, bias: f64) -> Vec<f64> {
    let p = (ks / 2) as isize;
    let mut y = vec![bias; n * n];
    for i in 0..n as isize {
        for j in 0..n as isize {
            for u in 0..ks as isize {
                for v in 0..ks as isize {
                    let (r, c) = (i + u - p, j + v - p);
                    if r >= 0 && c >= 0 && r < n as isize && c < n as isize {
                        y[(i * n as isize + j) as usize] +=
                            k[(u * ks as isize + v) as usize] * x[(r * n as isize + c) as usize];
                    }
                }
            }
        }
    }
    y
}

#[test]
fn vpm_matches_straight_line_evaluation() {
    let mut store = ParamStore::<f64>::new();
    let vpm = {
        let mut b = ParamBuilder::new(&mut store, None);
        Vpm::new(&mut b, "v", 1, 1, 2)
    };
    let k5: Vec<f64> = (0..25).map(|i| ((i * 7) % 11) as f64 * 0.02 - 0.1).collect();
    let k7: Vec<f64> = (0..49).map(|i| ((i * 5) % 13) as f64 * 0.01 - 0.06).collect();
    let (ff_in, bf_in, p_in, b_in) = (0.9, 0.05, 1.2, -0.1);
    let (b5, b7, p_at, b_at, p_out, b_out) = (0.02, -0.03, 0.7, 0.2, -0.8, 0.1);
    let (up, bup, down, bdown) = ([0.6, -0.4], [0.1, 0.3], [0.5, 0.9], -0.05);
    let (ff_out, bf_out) = (1.1, 0.02);
    set(&mut store, "v.frame_fuse_in.weight", &[1, 1], &[ff_in]);
    set(&mut store, "v.frame_fuse_in.bias", &[1], &[bf_in]);
    set(&mut store, "v.proj_in.weight", &[1, 1], &[p_in]);
    set(&mut store, "v.proj_in.bias", &[1], &[b_in]);
    set(&mut store, "v.dconv5.weight", &[1, 1, 5, 5], &k5);
    set(&mut store, "v.dconv5.bias", &[1], &[b5]);
    set(&mut store, "v.dconv7.weight", &[1, 1, 7, 7], &k7);
    set(&mut store, "v.dconv7.bias", &[1], &[b7]);
    set(&mut store, "v.proj_attn.weight", &[1, 1], &[p_at]);
    set(&mut store, "v.proj_attn.bias", &[1], &[b_at]);
    set(&mut store, "v.proj_out.weight", &[1, 1], &[p_out]);
    set(&mut store, "v.proj_out.bias", &[1], &[b_out]);
    set(&mut store, "v.mlp_up.weight", &[2, 1], &up);
    set(&mut store, "v.mlp_up.bias", &[2], &bup);
    set(&mut store, "v.mlp_down.weight", &[1, 2], &down);
    set(&mut store, "v.mlp_down.bias", &[1], &[bdown]);
    set(&mut store, "v.frame_fuse_out.weight", &[1, 1], &[ff_out]);
    set(&mut store, "v.frame_fuse_out.bias", &[1], &[bf_out]);

    let x = rand_tensor(&[1, 1, 7, 7], 42);
    let g = Graph::new();
    let p = store.bind_frozen(&g);
    let got = vpm.forward(&p, &g.constant(x.clone())).unwrap().tensor();

    let xs = x.data();
    let pm: Vec<f64> = xs
        .iter()
        .map(|&v| (p_in * (ff_in * v + bf_in) + b_in).max(0.0))
        .collect();
    let d7 = dconv_same(&dconv_same(&pm, 7, &k5, 5, b5), 7, &k7, 7, b7);
    for i in 0..49 {
        let q = pm[i] * (p_at * d7[i] + b_at);
        let s = pm[i] + p_out * q + b_out;
        let h: Vec<f64> = (0..2).map(|k| (up[k] * s + bup[k]).max(0.0)).collect();
        let m = down[0] * h[0] + down[1] * h[1] + bdown;
        let want = xs[i] + ff_out * m + bf_out;
        assert!(
            (got.data()[i] - want).abs() < 1e-12,
            "pixel {i}: {} vs {want}",
            got.data()[i]
        );
    }
}

// --- SAAVM oracle -------------------------------------------------------------

fn pool_oracle(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len();
    (0..n_out)
        .map(|i| {
            let lo = i * n / n_out;
            let hi = ((i + 1) * n).div_ceil(n_out);
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn interp_oracle(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len();
    (0..n_out)
        .map(|o| {
            if n == 1 || n_out == 1 {
                return x[0];
            }
            let pos = o as f64 * (n - 1) as f64 / (n_out - 1) as f64;
            let i0 = (pos.floor() as usize).min(n - 2);
            let f = pos - i0 as f64;
            x[i0] * (1.0 - f) + x[i0 + 1] * f
        })
        .collect()
}

fn saavm_oracle_case(audio_len: usize) {
    let shape = StageShape {
        channels: 1,
        height: 2,
        width: 2,
        audio_len,
        windows: 1,
        token_dim: 4,
        depth: 1,
    };
    let mut store = ParamStore::<f64>::new();
    let m = {
        let mut b = ParamBuilder::new(&mut store, None);
        Saavm::new(&mut b, "s", 2, 2, 1, shape)
    };
    let (rv, brv, ra, bra, ev, bev, ea, bea) = (0.8, 0.1, -1.1, 0.05, 1.3, -0.2, 0.6, 0.15);
    let pe = rand_tensor(&[4, 4], 77).to_f64_vec();
    let wmat: Vec<f64> = (0..16).map(|i| ((i * 3) % 7) as f64 * 0.15 - 0.4).collect();
    let wb = [0.01, -0.02, 0.03, 0.0];
    set(&mut store, "s.reduce_v.weight", &[1, 1], &[rv]);
    set(&mut store, "s.reduce_v.bias", &[1], &[brv]);
    set(&mut store, "s.reduce_a.weight", &[1, 1], &[ra]);
    set(&mut store, "s.reduce_a.bias", &[1], &[bra]);
    set(&mut store, "s.pos_embed", &[4, 4], &pe);
    set(&mut store, "s.attn_out.weight", &[4, 4], &wmat);
    set(&mut store, "s.attn_out.bias", &[4], &wb);
    set(&mut store, "s.expand_v.weight", &[1, 1], &[ev]);
    set(&mut store, "s.expand_v.bias", &[1], &[bev]);
    set(&mut store, "s.expand_a.weight", &[1, 1], &[ea]);
    set(&mut store, "s.expand_a.bias", &[1], &[bea]);

    let v = rand_tensor(&[2, 1, 2, 2], 8);
    let a = rand_tensor(&[1, audio_len], 9);
    let g = Graph::new();
    let p = store.bind_frozen(&g);
    let (ov, oa) = m.forward(&p, &g.constant(v.clone()), &g.constant(a.clone())).unwrap();

    // four tokens: frame 0 window, frame 1 window, audio split 0, audio split 1
    let split = audio_len / 2;
    let mut k0 = [[0.0f64; 4]; 4];
    for f in 0..2 {
        for e in 0..4 {
            k0[f][e] = rv * v.data()[f * 4 + e] + brv;
        }
        let reduced: Vec<f64> = a.data()[f * split..(f + 1) * split]
            .iter()
            .map(|&x| ra * x + bra)
            .collect();
        let pooled = pool_oracle(&reduced, 4);
        k0[2 + f].copy_from_slice(&pooled);
    }
    for r in 0..4 {
        for e in 0..4 {
            k0[r][e] += pe[r * 4 + e];
        }
    }
    let mut k1 = [[0.0f64; 4]; 4];
    for r in 0..4 {
        let logits: Vec<f64> = (0..4)
            .map(|c| (0..4).map(|e| k0[r][e] * k0[c][e]).sum::<f64>() / 2.0)
            .collect();
        let mx = logits.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
        let att: Vec<f64> = logits.iter().map(|l| (l - mx).exp() / z).collect();
        let mixed: Vec<f64> = (0..4).map(|e| (0..4).map(|c| att[c] * k0[c][e]).sum()).collect();
        for o in 0..4 {
            k1[r][o] = wb[o] + (0..4).map(|i| wmat[o * 4 + i] * mixed[i]).sum::<f64>();
        }
    }
    for f in 0..2 {
        for e in 0..4 {
            let want = v.data()[f * 4 + e] + ev * k1[f][e] + bev;
            assert!((ov.tensor().data()[f * 4 + e] - want).abs() < 1e-12);
        }
        let back = interp_oracle(&k1[2 + f], split);
        for (j, b) in back.iter().enumerate() {
            let idx = f * split + j;
            let want = a.data()[idx] + ea * b + bea;
            assert!((oa.tensor().data()[idx] - want).abs() < 1e-12, "audio {idx}");
        }
    }
}

#[test]
fn saavm_matches_straight_line_evaluation() {
    saavm_oracle_case(8);
}

#[test]
fn saavm_matches_oracle_with_nontrivial_audio_pooling() {
    saavm_oracle_case(12);
}

// --- properties -----------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn attention_rows_are_stochastic(seed in 0u64..10_000, rows in 2usize..30, d in 1usize..10) {
        let g = Graph::<f64>::new();
        let k = g.constant(rand_tensor(&[rows, d], seed).reshape(&[rows, d]).unwrap());
        let a = attention_weights(&k.scale(3.0)).unwrap().tensor();
        for r in 0..rows {
            let row = &a.data()[r * rows..(r + 1) * rows];
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn vpm_is_frame_permutation_consistent(seed in 0u64..10_000) {
        let frames = 4;
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngState::new(seed);
        let vpm = {
            let mut b = ParamBuilder::new(&mut store, Some(&mut rng));
            Vpm::new(&mut b, "v", frames, 3, 2)
        };
        let perm = rng.permutation(frames);
        let x = rand_tensor(&[frames, 3, 6, 6], seed + 1);
        let frame = 3 * 36;
        let permute_frames = |t: &Tensor<f64>| {
            Tensor::from_fn(t.dims(), |i| t.data()[perm[i / frame] * frame + i % frame])
        };

        // spatial attention alone is frame-wise: it commutes with any frame permutation
        let g = Graph::new();
        let p = store.bind_frozen(&g);
        let sa = vpm.spatial_attention(&p, &g.constant(x.clone())).unwrap().tensor();
        let sa_p = vpm.spatial_attention(&p, &g.constant(permute_frames(&x))).unwrap().tensor();
        prop_assert!(sa_p.max_abs_diff(&permute_frames(&sa)) < 1e-12);

        // full module: conjugating the frame-fusion weights by the permutation
        let out = vpm.forward(&p, &g.constant(x.clone())).unwrap().tensor();
        let mut permuted = store.clone();
        for name in ["v.frame_fuse_in", "v.frame_fuse_out"] {
            let w = store.by_name(&format!("{name}.weight")).unwrap().clone();
            let b = store.by_name(&format!("{name}.bias")).unwrap().clone();
            let wp = Tensor::from_fn(&[frames, frames], |i| w.data()[perm[i / frames] * frames + perm[i % frames]]);
            let bp = Tensor::from_fn(&[frames], |i| b.data()[perm[i]]);
            permuted.set(&format!("{name}.weight"), wp).unwrap();
            permuted.set(&format!("{name}.bias"), bp).unwrap();
        }
        let g2 = Graph::new();
        let p2 = permuted.bind_frozen(&g2);
        let out_p = vpm.forward(&p2, &g2.constant(permute_frames(&x))).unwrap().tensor();
        prop_assert!(out_p.max_abs_diff(&permute_frames(&out)) < 1e-12);
    }
}

// --- parameter accounting ---------------------------------------------------------

/// Closed-form count derived from the layer list, independent of the model code.
fn closed_form_count(cfg: &ModelConfig) -> usize {
    let t = cfg.frames;
    let c = &cfg.stage_channels;
    let d = cfg.window * cfg.window * cfg.attn_channels;
    let cm = cfg.attn_channels;
    let r = cfg.mlp_ratio;
    let stems = (cfg.visual_channels * 49 + 1) * c[0] + (cfg.audio_channels * 25 + 1) * c[0];
    let mut total = stems;
    let shapes = cfg.stage_shapes().unwrap();
    for s in 0..4 {
        if s > 0 {
            total += (c[s - 1] * 9 + 1) * c[s] + (c[s - 1] * 5 + 1) * c[s];
        }
        let ch = c[s];
        let vpm = 2 * (t * t + t)
            + 3 * (ch * ch + ch)
            + (25 + 1) * ch
            + (49 + 1) * ch
            + (ch * r * ch + ch * r)
            + (ch * r * ch + ch);
        let tokens = t * shapes[s].windows + t;
        let saavm = 2 * (ch * cm + cm) + tokens * d + (d * d + d) + 2 * (cm * ch + ch);
        total += cfg.stage_depths[s] * (vpm + saavm);
    }
    let c4 = c[3];
    let head_v = 9 * c4 + c4 + c4 * c4 + c4;
    let head_a = 3 * c4 + c4 + c4 * c4 + c4;
    let preds = 2 * (2 * c4 + 2) + (4 * c4 + 2);
    let adv = 2 * (2 * c4 + 2);
    total + 2 * (head_v + head_a) + preds + adv
}

#[test]
fn paper_parameter_count_matches_closed_form() {
    let cfg = ModelConfig::paper();
    let count = count_params(&cfg).unwrap();
    assert_eq!(count.total, closed_form_count(&cfg));
    assert_eq!(count.total, 385_398);
    assert!((300_000..=650_000).contains(&count.total));
    assert_eq!(count.breakdown.iter().map(|(_, n)| n).sum::<usize>(), count.total);
}

#[test]
fn closed_form_agrees_on_other_presets() {
    for cfg in [ModelConfig::desk(), ModelConfig::tiny()] {
        let count = count_params(&cfg).unwrap();
        assert_eq!(count.total, closed_form_count(&cfg));
        assert_eq!(count.breakdown.iter().map(|(_, n)| n).sum::<usize>(), count.total);
    }
}

#[test]
fn single_attention_projection_and_stage_one_embedding() {
    let model = Detector::<f32>::zeroed(ModelConfig::paper()).unwrap();
    let w = model
        .params()
        .by_name("stage1.block0.saavm.attn_out.weight")
        .unwrap()
        .numel();
    let b = model
        .params()
        .by_name("stage1.block0.saavm.attn_out.bias")
        .unwrap()
        .numel();
    assert_eq!(w + b, 2450);
    let pe = model.params().by_name("stage1.block0.saavm.pos_embed").unwrap();
    assert_eq!(pe.dims(), &[650, 49]);
    assert_eq!(pe.numel(), 31_850);
}

// --- determinism and differentiability -----------------------------------------------

#[test]
fn seeded_init_and_forward_are_bit_identical() {
    let cfg = ModelConfig::desk();
    let a = Detector::<f32>::new(cfg.clone(), 11).unwrap();
    let b = Detector::<f32>::new(cfg.clone(), 11).unwrap();
    let c = Detector::<f32>::new(cfg.clone(), 12).unwrap();
    assert_eq!(a.params().tensors(), b.params().tensors());
    assert_ne!(a.params().tensors(), c.params().tensors());
    let v: Tensor<f32> = rand_tensor(&cfg.visual_input_dims(), 1).cast();
    let au: Tensor<f32> = rand_tensor(&cfg.audio_input_dims(), 2).cast();
    let pa = a.predict(&v, &au).unwrap();
    let pb = b.predict(&v, &au).unwrap();
    assert_eq!(pa, pb);
}

#[test]
fn tiny_end_to_end_gradient_check() {
    let cfg = ModelConfig::tiny();
    let model = Detector::<f64>::new(cfg.clone(), 4).unwrap();
    let n_params = model.params().len();
    let mut inputs: Vec<Tensor<f64>> = model.params().tensors().to_vec();
    // nonzero embeddings and biases so every path carries signal
    let mut rng = RngState::new(99);
    for t in inputs.iter_mut() {
        for x in t.data_mut() {
            *x += rng.uniform(-0.1, 0.1);
        }
    }
    inputs.push(rand_tensor(&cfg.visual_input_dims(), 5));
    inputs.push(rand_tensor(&cfg.audio_input_dims(), 6));
    let report = grad_check_subset(
        |g, xs| {
            let p = Bound::from_vars(xs[..n_params].to_vec());
            let (fv, fa) = model.backbone(&p, &xs[n_params], &xs[n_params + 1])?;
            let (fv, fa) = model.stack(g, &[(fv, fa)])?;
            let out = model.classify(&p, &fv, &fa)?;
            let lv = fv.square().mean().add(&fa.square().mean())?;
            let lz = out.z_v.sum().scale(0.7).add(&out.z_a.sum().scale(-0.4))?;
            let lw = prob_real(&out.logits_w)?.sum().scale(1.3);
            lv.add(&lz)?.add(&lw)
        },
        &inputs,
        1e-5,
        Some(3),
    )
    .unwrap();
    assert!(report.passes(1e-3), "{report:?}");
}
