use std::rc::Rc;

use mdhr_tensor::{gradcheck::GradCheck, io, Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

fn conv2d_loops(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize, pad: usize) -> Vec<f64> {
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, kk) = (k.shape()[0], k.shape()[2]);
    let oh = (h + 2 * pad - kk) / stride + 1;
    let ow = (w + 2 * pad - kk) / stride + 1;
    let mut out = Vec::new();
    for n in 0..b {
        for o in 0..co {
            for i in 0..oh {
                for j in 0..ow {
                    let mut s = 0.0;
                    for ci in 0..c {
                        for u in 0..kk {
                            for v in 0..kk {
                                let y = (i * stride + u) as i64 - pad as i64;
                                let z = (j * stride + v) as i64 - pad as i64;
                                if y >= 0 && z >= 0 && (y as usize) < h && (z as usize) < w {
                                    s += k.at(&[o, ci, u, v]) * x.at(&[n, ci, y as usize, z as usize]);
                                }
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
    }
    out
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softmax_sums_to_one(v in prop::collection::vec(-50.0f64..50.0, 1..24)) {
        let tape = Tape::<f64>::new();
        let n = v.len();
        let y = tape.constant(Tensor::from_f64([n], &v).unwrap()).softmax(0).unwrap().value();
        let s: f64 = y.data().iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        prop_assert!(y.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
        for i in 0..n {
            for j in 0..n {
                if v[i] < v[j] {
                    prop_assert!(y.data()[i] <= y.data()[j]);
                }
            }
        }
    }

    #[test]
    fn conv2d_matches_loops(
        b in 1usize..=4, c in 1usize..=8, co in 1usize..=4, h in 3usize..=16, w in 3usize..=16,
        k in 1usize..=3, stride in 1usize..=2, pad in 0usize..=1, seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[b, c, h, w], &mut rng);
        let kt = random(&[co, c, k, k], &mut rng);
        let tape = Tape::<f64>::new();
        let y = tape.constant(x.clone()).conv2d(tape.constant(kt.clone()), None, stride, pad).unwrap();
        prop_assert!(max_diff(y.value().data(), &conv2d_loops(&x, &kt, stride, pad)) < 1e-12);
    }

    #[test]
    fn conv1d_matches_loops(
        b in 1usize..=3, c in 1usize..=4, co in 1usize..=4, t in 1usize..=16, pad in 0usize..=2,
        seed in any::<u64>(),
    ) {
        let k = 5usize.min(t + 2 * pad);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[b, c, t], &mut rng);
        let kt = random(&[co, c, k], &mut rng);
        let bias = random(&[co], &mut rng);
        let tape = Tape::<f64>::new();
        let y = tape.constant(x.clone())
            .conv1d(tape.constant(kt.clone()), Some(tape.constant(bias.clone())), pad).unwrap();
        let ot = t + 2 * pad - k + 1;
        let mut want = Vec::new();
        for n in 0..b {
            for o in 0..co {
                for s in 0..ot {
                    let mut acc = bias.data()[o];
                    for i in 0..c {
                        for j in 0..k {
                            let u = (s + j) as i64 - pad as i64;
                            if u >= 0 && (u as usize) < t {
                                acc += kt.at(&[o, i, j]) * x.at(&[n, i, u as usize]);
                            }
                        }
                    }
                    want.push(acc);
                }
            }
        }
        prop_assert!(max_diff(y.value().data(), &want) < 1e-12);
    }

    #[test]
    fn graph_attention_matches_loops(g in 1usize..=3, n in 1usize..=6, b in 1usize..=5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wv = random(&[g, n, b], &mut rng);
        let r = random(&[2 * b], &mut rng);
        let adj: Vec<bool> = (0..g * n * n).map(|i| (i % (n * n)) % (n + 1) == 0 || rng.gen_bool(0.4)).collect();
        let tape = Tape::<f64>::new();
        let z = tape.constant(wv.clone())
            .graph_attention(tape.constant(r.clone()), Rc::new(adj.clone()), 0.2).unwrap();
        let mut want = Vec::new();
        for gi in 0..g {
            for i in 0..n {
                let nb: Vec<usize> = (0..n).filter(|&m| adj[(gi * n + i) * n + m]).collect();
                let e: Vec<f64> = nb.iter().map(|&m| {
                    let s: f64 = (0..b).map(|j| r.data()[j] * wv.at(&[gi, i, j]) + r.data()[b + j] * wv.at(&[gi, m, j])).sum();
                    if s > 0.0 { s } else { 0.2 * s }
                }).collect();
                let z: f64 = e.iter().map(|v| v.exp()).sum();
                prop_assert!((e.iter().map(|v| v.exp() / z).sum::<f64>() - 1.0).abs() < 1e-10);
                for j in 0..b {
                    want.push(nb.iter().zip(&e).map(|(&m, v)| v.exp() / z * wv.at(&[gi, m, j])).sum::<f64>());
                }
            }
        }
        prop_assert!(max_diff(z.value().data(), &want) < 1e-12);
    }

    #[test]
    fn linear_matches_loops(rows in 1usize..=6, din in 1usize..=8, dout in 1usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[rows, din], &mut rng);
        let w = random(&[dout, din], &mut rng);
        let bias = random(&[dout], &mut rng);
        let tape = Tape::<f64>::new();
        let y = tape.constant(x.clone())
            .linear(tape.constant(w.clone()), Some(tape.constant(bias.clone()))).unwrap();
        let want: Vec<f64> = (0..rows * dout).map(|i| {
            let (r, o) = (i / dout, i % dout);
            bias.data()[o] + (0..din).map(|j| w.at(&[o, j]) * x.at(&[r, j])).sum::<f64>()
        }).collect();
        prop_assert!(max_diff(y.value().data(), &want) < 1e-12);
    }

    #[test]
    fn conv_gradients_match_differences(
        c in 1usize..=3, co in 1usize..=3, h in 3usize..=6, k in 1usize..=3, stride in 1usize..=2,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[2, c, h, h], &mut rng);
        let kt = random(&[co, c, k, k], &mut rng);
        let r = GradCheck::default().run(&[x, kt], |_, v| {
            let y = v[0].conv2d(v[1], None, stride, k / 2)?;
            Ok(y.mul(y)?.mean_all())
        }).unwrap();
        prop_assert!(r.max_rel_err < 1e-6, "{:?}", r);
    }

    #[test]
    fn serialization_round_trips(shape in prop::collection::vec(1usize..=4, 1..=4), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random(&shape, &mut rng);
        let back: Tensor<f64> = io::decode(&io::encode(&t, io::Payload::F64)).unwrap();
        prop_assert_eq!(&back, &t);
        let t32 = t.cast::<f32>();
        let back: Tensor<f32> = io::decode(&io::encode(&t32, io::Payload::F32)).unwrap();
        prop_assert_eq!(back, t32);
    }
}

#[test]
fn twice_evaluated_backward_is_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&[4, 3, 9, 9], &mut rng);
    let k = random(&[5, 3, 3, 3], &mut rng);
    let run = || {
        let tape = Tape::<f64>::new();
        let xv = tape.param(x.clone());
        let kv = tape.param(k.clone());
        let y = xv.conv2d(kv, None, 2, 1).unwrap().relu().global_avg_pool().unwrap().softmax(1).unwrap();
        let loss = y.pick(&[0, 1, 2, 3]).unwrap().log().unwrap().mean_all();
        tape.backward(loss).unwrap();
        (xv.grad().unwrap(), kv.grad().unwrap())
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0.data(), b.0.data());
    assert_eq!(a.1.data(), b.1.data());
}
