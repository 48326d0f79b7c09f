use mdhr_core::config::{BackboneConfig, MfdConfig, RunConfig};
use mdhr_core::mfd::{temporal_average, temporal_difference, Mfd};
use mdhr_core::params::ParamStore;
use mdhr_tensor::{conv2d_reference, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_cfg(k: usize) -> RunConfig {
    RunConfig {
        backbone: BackboneConfig { in_channels: 3, input_size: 28, stage_channels: vec![2, 3, 4], stage_strides: vec![2, 2, 1] },
        mfd: MfdConfig { k, ..Default::default() },
        ..Default::default()
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

fn full(shape: &[usize], v: f64) -> Tensor<f64> {
    Tensor::full(shape.to_vec(), v)
}

#[test]
fn differences_of_static_and_ramp_windows() {
    let tape = Tape::<f64>::new();
    let same: Vec<Vec<Var>> = (0..5).map(|_| vec![tape.constant(full(&[1, 2, 3, 3], 4.0))]).collect();
    let d = temporal_difference(&same, 2).unwrap();
    assert_eq!(d[0].len(), 4);
    assert!(d[0].iter().all(|m| m.value().data().iter().all(|&v| v == 0.0)));

    let w: Vec<Vec<Var>> = [0.0, 1.0, 3.0].iter().map(|&v| vec![tape.constant(full(&[1, 1, 2, 2], v))]).collect();
    let d = temporal_difference(&w, 1).unwrap();
    assert_eq!(d[0][0].value().data(), &[1.0; 4]);
    assert_eq!(d[0][1].value().data(), &[2.0; 4]);
    assert!(temporal_difference(&w, 2).is_err());
}

#[test]
fn differences_match_subtraction_and_negate_under_reversal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tape = Tape::<f64>::new();
    let frames: Vec<Tensor<f64>> = (0..7).map(|_| random(&[1, 2, 4, 4], &mut rng)).collect();
    let fwd: Vec<Vec<Var>> = frames.iter().map(|f| vec![tape.constant(f.clone())]).collect();
    let rev: Vec<Vec<Var>> = fwd.iter().rev().cloned().collect();
    let d = temporal_difference(&fwd, 3).unwrap();
    let r = temporal_difference(&rev, 3).unwrap();
    for j in 0..6 {
        let want: Vec<f64> = frames[j + 1].data().iter().zip(frames[j].data()).map(|(a, b)| a - b).collect();
        assert_eq!(d[0][j].value().data(), want.as_slice());
        let neg: Vec<f64> = d[0][5 - j].value().data().iter().map(|v| -v).collect();
        assert_eq!(r[0][j].value().data(), neg.as_slice());
    }
}

#[test]
fn resize_examples() {
    let cfg = small_cfg(1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::<f64>::new();
    let mfd = Mfd::new(&cfg, &mut store, &mut rng);
    // 14 -> 7 with an all-ones kernel on one channel sums 2x2 blocks.
    let mut one = ParamStore::<f64>::new();
    for p in store.iter() {
        one.add(p.name.clone(), p.value.clone(), p.decay);
    }
    one.set("mfd.resize0.weight", Tensor::from_fn([4, 2, 2, 2], |i| if i < 4 { 1.0 } else { 0.0 })).unwrap();
    let tape = Tape::<f64>::new();
    let p = one.bind(&tape);
    let x = Tensor::from_fn([1, 2, 14, 14], |i| if i < 196 { i as f64 } else { 0.0 });
    let y = mfd.resize(&p, 0, tape.constant(x.clone())).unwrap().value();
    assert_eq!(y.shape(), &[1, 4, 7, 7]);
    for i in 0..7 {
        for j in 0..7 {
            let s: f64 = (0..2).flat_map(|a| (0..2).map(move |b| (a, b))).map(|(a, b)| x.at(&[0, 0, 2 * i + a, 2 * j + b])).sum();
            assert_eq!(y.at(&[0, 0, i, j]), s);
        }
    }
    // The 7x7 scale is a pure channel projection.
    let x = random(&[2, 3, 7, 7], &mut rng);
    let y = mfd.resize(&p, 1, tape.constant(x.clone())).unwrap().value();
    let k = one.by_name("mfd.resize1.weight").unwrap().value.clone();
    assert_eq!(k.shape(), &[4, 3, 1, 1]);
    let want = conv2d_reference(&x, &k, None, 1, 0).unwrap();
    assert!(y.max_abs_diff(&want) < 1e-12);
    // Wrong spatial size is a configuration error.
    assert!(matches!(mfd.resize(&p, 0, tape.constant(random(&[1, 2, 12, 12], &mut rng))), Err(mdhr_core::CoreError::Config(_))));
}

#[test]
fn resize_on_28_matches_loop_oracle() {
    let cfg = RunConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = ParamStore::<f64>::new();
    let mfd = Mfd::new(&cfg, &mut store, &mut rng);
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape);
    let x = random(&[1, 16, 28, 28], &mut rng);
    let y = mfd.resize(&p, 0, tape.constant(x.clone())).unwrap().value();
    assert_eq!(y.shape(), &[1, 64, 7, 7]);
    let k = store.by_name("mfd.resize0.weight").unwrap().value.clone();
    let mut worst: f64 = 0.0;
    for o in 0..64 {
        for i in 0..7 {
            for j in 0..7 {
                let mut s = 0.0;
                for c in 0..16 {
                    for a in 0..4 {
                        for b in 0..4 {
                            s += k.at(&[o, c, a, b]) * x.at(&[0, c, 4 * i + a, 4 * j + b]);
                        }
                    }
                }
                worst = worst.max((s - y.at(&[0, o, i, j])).abs());
            }
        }
    }
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn temporal_average_examples() {
    let tape = Tape::<f64>::new();
    let m = [tape.constant(full(&[1, 1, 2, 2], 1.0)), tape.constant(full(&[1, 1, 2, 2], 3.0))];
    assert_eq!(temporal_average(&m).unwrap().value().data(), &[2.0; 4]);
    let z = [tape.constant(full(&[1, 1, 2, 2], 0.0)); 3];
    assert_eq!(temporal_average(&z).unwrap().value().data(), &[0.0; 4]);
    assert!(temporal_average::<f64>(&[]).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let maps: Vec<Tensor<f64>> = (0..6).map(|_| random(&[1, 2, 3, 3], &mut rng)).collect();
    let vars: Vec<Var> = maps.iter().map(|m| tape.constant(m.clone())).collect();
    let got = temporal_average(&vars).unwrap().value();
    for i in 0..18 {
        let want = maps.iter().map(|m| m.data()[i]).sum::<f64>() / 6.0;
        assert!((got.data()[i] - want).abs() < 1e-12);
    }
}

fn zeroed_logits(store: &mut ParamStore<f64>) {
    let names: Vec<String> = store.iter().filter(|p| p.name.starts_with("mfd.scale_logit")).map(|p| p.name.clone()).collect();
    for n in names {
        let shape = store.by_name(&n).unwrap().value.shape().to_vec();
        store.set(&n, Tensor::zeros(shape)).unwrap();
    }
}

#[test]
fn zero_logit_convs_give_uniform_weights() {
    let cfg = small_cfg(1);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::<f64>::new();
    let mfd = Mfd::new(&cfg, &mut store, &mut rng);
    zeroed_logits(&mut store);
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape);
    let dbar: Vec<Var> = (0..3).map(|_| tape.constant(random(&[2, 4, 7, 7], &mut rng))).collect();
    let w = mfd.adaptive_weights(&p, &dbar).unwrap().value();
    assert!(w.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
}

#[test]
fn two_scale_logits_ln3_and_zero() {
    let cfg = RunConfig {
        backbone: BackboneConfig { in_channels: 3, input_size: 14, stage_channels: vec![2, 2], stage_strides: vec![2, 1] },
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::<f64>::new();
    let mfd = Mfd::new(&cfg, &mut store, &mut rng);
    zeroed_logits(&mut store);
    store.set("mfd.scale_logit0.bias", Tensor::full([1], 3f64.ln())).unwrap();
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape);
    let dbar: Vec<Var> = (0..2).map(|_| tape.constant(random(&[1, 2, 7, 7], &mut rng))).collect();
    let w = mfd.adaptive_weights(&p, &dbar).unwrap().value();
    for c in 0..49 {
        assert!((w.data()[c] - 0.75).abs() < 1e-15);
        assert!((w.data()[49 + c] - 0.25).abs() < 1e-15);
    }
}

#[test]
fn weights_match_per_cell_softmax_oracle() {
    let cfg = small_cfg(1);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut store = ParamStore::<f64>::new();
    let mfd = Mfd::new(&cfg, &mut store, &mut rng);
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape);
    let maps: Vec<Tensor<f64>> = (0..3).map(|_| random(&[2, 4, 7, 7], &mut rng)).collect();
    let dbar: Vec<Var> = maps.iter().map(|m| tape.constant(m.clone())).collect();
    let w = mfd.adaptive_weights(&p, &dbar).unwrap().value();
    for f in 0..2 {
        for cell in 0..49 {
            let (i, j) = (cell / 7, cell % 7);
            let logits: Vec<f64> = (0..3)
                .map(|l| {
                    let k = &store.by_name(&format!("mfd.scale_logit{l}.weight")).unwrap().value;
                    let b = store.by_name(&format!("mfd.scale_logit{l}.bias")).unwrap().value.data()[0];
                    b + (0..12).map(|ch| k.data()[ch] * maps[ch / 4].at(&[f, ch % 4, i, j])).sum::<f64>()
                })
                .collect();
            let z: f64 = logits.iter().map(|v| v.exp()).sum();
            for l in 0..3 {
                assert!((w.at(&[f, l, i, j]) - logits[l].exp() / z).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fuse_matches_direct_formula_and_single_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tape = Tape::<f64>::new();
    let d: Vec<Tensor<f64>> = (0..2).map(|_| random(&[1, 3, 7, 7], &mut rng)).collect();
    let w = random(&[1, 2, 7, 7], &mut rng);
    let x = random(&[1, 3, 7, 7], &mut rng);
    let dv: Vec<Var> = d.iter().map(|t| tape.constant(t.clone())).collect();
    let g = Mfd::fuse(&dv, tape.constant(w.clone()), tape.constant(x.clone())).unwrap().value();
    for c in 0..3 {
        for i in 0..7 {
            for j in 0..7 {
                let want = x.at(&[0, c, i, j]) + (0..2).map(|l| w.at(&[0, l, i, j]) * d[l].at(&[0, c, i, j])).sum::<f64>();
                assert!((g.at(&[0, c, i, j]) - want).abs() < 1e-12);
            }
        }
    }
    let one = Tensor::ones([1, 1, 7, 7]);
    let g = Mfd::fuse(&dv[..1], tape.constant(one), tape.constant(x.clone())).unwrap().value();
    let want: Vec<f64> = d[0].data().iter().zip(x.data()).map(|(a, b)| a + b).collect();
    assert_eq!(g.data(), want.as_slice());
}

#[test]
fn batched_forward_equals_literal_window_path() {
    let cfg = small_cfg(2);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut store = ParamStore::<f64>::new();
    let mfd = Mfd::new(&cfg, &mut store, &mut rng);
    let (b, t, k) = (2, 3, 2);
    let f = t + 2 * k;
    let sizes = cfg.backbone.spatial_sizes();
    let pyr: Vec<Tensor<f64>> = cfg
        .backbone
        .stage_channels
        .iter()
        .zip(&sizes)
        .map(|(&c, &s)| random(&[b * f, c, s, s], &mut rng))
        .collect();
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape);
    let vars: Vec<Var> = pyr.iter().map(|x| tape.constant(x.clone())).collect();
    let out = mfd.forward(&p, &vars, b, t).unwrap();
    let g = out.g.value();
    let w = out.weights.value();
    assert_eq!(g.shape(), &[b * t, 4, 7, 7]);
    let per_g = 4 * 49;
    for clip in 0..b {
        for s in 0..t {
            let window: Vec<Vec<Var>> = (0..2 * k + 1)
                .map(|j| {
                    let frame = clip * f + s + j;
                    pyr.iter().map(|x| tape.constant(x.slice_axis(0, frame, frame + 1).unwrap())).collect()
                })
                .collect();
            let lit = mfd.forward_window(&p, &window).unwrap();
            let row = clip * t + s;
            let gb = &g.data()[row * per_g..(row + 1) * per_g];
            let diff = gb.iter().zip(lit.g.value().data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "{diff}");
            let wb = &w.data()[row * 3 * 49..(row + 1) * 3 * 49];
            let diff = wb.iter().zip(lit.weights.value().data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "{diff}");
        }
    }
}
