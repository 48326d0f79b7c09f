//! One line per acceptance criterion; exits non-zero if any fails.
//!
//! Criteria 9 to 11 train on the default synthetic dataset in 32-bit mode
//! and take most of the runtime.

use std::rc::Rc;
use std::time::Instant;

use mdhr_core::combo::{decode_combination, encode_combination};
use mdhr_core::config::{RunConfig, TOP_SIZE};
use mdhr_core::data::synth::SynthSpec;
use mdhr_core::data::Dataset;
use mdhr_core::head::sc_predict;
use mdhr_core::hsr::{slice_regions, REGION_ROWS};
use mdhr_core::mfd::Mfd;
use mdhr_core::objective::au_loss;
use mdhr_core::params::ParamStore;
use mdhr_core::trainer::{Trainer, METRICS_FILE};
use mdhr_core::verify::{self, Module};
use mdhr_core::Mdhr;
use mdhr_tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_TOL: f64 = 1e-4;
const GRAD_SECONDS: f64 = 120.0;
const WEIGHT_SUM_TOL: f64 = 1e-10;
const ORACLE_TOL: f64 = 1e-12;
const SC_SCALE_TOL: f64 = 1e-12;
const LOSS_TOL: f64 = 1e-4;
const F1_TARGET: f64 = 0.90;
const E2E_EPOCHS: usize = 60;
const E2E_SECONDS: f64 = 30.0 * 60.0;
const SWEEP_SEEDS: u64 = 5;
const SWEEP_EPOCHS: usize = 8;
const REPLAY_EPOCHS: usize = 3;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let lines = match verify::run_checks(&Module::ALL, None) {
        Ok(l) => l,
        Err(e) => return verdict(false, format!("gradcheck errored: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let worst = lines.iter().map(|l| l.max_rel_err).fold(0.0, f64::max);
    let modules: std::collections::BTreeSet<_> = lines.iter().map(|l| l.module).collect();
    verdict(
        worst < GRAD_TOL && secs < GRAD_SECONDS && modules.len() == 4,
        format!("max rel err {worst:.2e} over {} ops in {modules:?}, {secs:.1} s (limits {GRAD_TOL:e}, {GRAD_SECONDS} s)", lines.len()),
    )
}

fn scale_weight_normalization() -> Verdict {
    let cfg = verify::small_config();
    let sizes = cfg.backbone.spatial_sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_sum, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    let mut cells = 0usize;
    let mut store = ParamStore::<f64>::new();
    let mut mfd = Mfd::new(&cfg, &mut store, &mut rng);
    for i in 0..1000 {
        if i % 50 == 0 {
            store = ParamStore::new();
            mfd = Mfd::new(&cfg, &mut store, &mut rng);
        }
        let (b, t, k) = (1, 1, cfg.mfd.k);
        let f = t + 2 * k;
        let scale = [0.1, 1.0, 10.0][i % 3];
        let tape = Tape::<f64>::new();
        let p = store.bind(&tape);
        let pyramid: Vec<_> = cfg
            .backbone
            .stage_channels
            .iter()
            .zip(&sizes)
            .map(|(&c, &s)| tape.constant(Tensor::from_fn([b * f, c, s, s], |_| scale * rng.gen_range(-1.0..1.0))))
            .collect();
        let w = mfd.forward(&p, &pyramid, b, t).unwrap().weights.value();
        let l = w.shape()[1];
        let plane = TOP_SIZE * TOP_SIZE;
        for n in 0..w.shape()[0] {
            for cell in 0..plane {
                let s: f64 = (0..l).map(|j| w.data()[(n * l + j) * plane + cell]).sum();
                worst_sum = worst_sum.max((s - 1.0).abs());
                cells += 1;
            }
        }
        for &v in w.data() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    verdict(
        worst_sum <= WEIGHT_SUM_TOL && lo >= 0.0 && hi <= 1.0,
        format!("{cells} cells over 1000 inputs: max |sum - 1| {worst_sum:.1e}, range [{lo:.3e}, {hi:.6}]"),
    )
}

fn zero_motion_identity() -> Verdict {
    let cfg = RunConfig::default();
    let (model, store) = Mdhr::new::<f64>(&cfg).unwrap();
    let mfd = model.mfd.as_ref().expect("dynamics enabled by default");
    let (t, k) = (cfg.train.t, cfg.mfd.k);
    let f = t + 2 * k;
    let h = cfg.backbone.input_size;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let frame = Tensor::from_fn([3 * h * h], |_| rng.gen_range(0.0..1.0));
    let clip = Tensor::from_fn([f, 3, h, h], |i| frame.data()[i % (3 * h * h)]);
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape);
    let pyramid = model.backbone.forward(&p, tape.constant(clip)).unwrap();
    let g = mfd.forward(&p, &pyramid, 1, t).unwrap().g.value();
    let top = pyramid.last().unwrap().value();
    let c = cfg.backbone.top_channels();
    let per = c * TOP_SIZE * TOP_SIZE;
    let centre = &top.data()[k * per..(k + t) * per];
    let same = g.data().iter().zip(centre).all(|(a, b)| a.to_bits() == b.to_bits());
    verdict(same, format!("G vs x_L over {} values of a {f}-frame static clip: {}", g.numel(), if same { "bitwise equal" } else { "differ" }))
}

fn conv2d_oracle(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Vec<f64> {
    let (n, ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, kk) = (k.shape()[0], k.shape()[2]);
    let oh = (h + 2 * pad - kk) / stride + 1;
    let ow = (w + 2 * pad - kk) / stride + 1;
    let mut out = Vec::new();
    for bn in 0..n {
        for o in 0..co {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut s = b.data()[o];
                    for c in 0..ci {
                        for dy in 0..kk {
                            for dx in 0..kk {
                                let iy = (y * stride + dy) as isize - pad as isize;
                                let ix = (xx * stride + dx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    s += k.at(&[o, c, dy, dx]) * x.at(&[bn, c, iy as usize, ix as usize]);
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

fn conv1d_oracle(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, pad: usize) -> Vec<f64> {
    let (n, ci, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, kk) = (k.shape()[0], k.shape()[2]);
    let ot = t + 2 * pad - kk + 1;
    let mut out = Vec::new();
    for bn in 0..n {
        for o in 0..co {
            for s in 0..ot {
                let mut acc = b.data()[o];
                for c in 0..ci {
                    for d in 0..kk {
                        let i = (s + d) as isize - pad as isize;
                        if i >= 0 && (i as usize) < t {
                            acc += k.at(&[o, c, d]) * x.at(&[bn, c, i as usize]);
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

fn softmax_oracle(x: &Tensor<f64>, axis: usize) -> Vec<f64> {
    let shape = x.shape();
    let inner: usize = shape[axis + 1..].iter().product();
    let len = shape[axis];
    let outer = x.numel() / (inner * len);
    let mut out = vec![0.0; x.numel()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * len + j) * inner + i;
            let m = (0..len).map(|j| x.data()[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..len).map(|j| (x.data()[idx(j)] - m).exp()).sum();
            for j in 0..len {
                out[idx(j)] = (x.data()[idx(j)] - m).exp() / z;
            }
        }
    }
    out
}

fn gat_oracle(wv: &Tensor<f64>, r: &Tensor<f64>, adj: &[bool], slope: f64) -> Vec<f64> {
    let (g, n, b) = (wv.shape()[0], wv.shape()[1], wv.shape()[2]);
    let row = |gi: usize, i: usize| &wv.data()[(gi * n + i) * b..(gi * n + i + 1) * b];
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
    let mut out = Vec::new();
    for gi in 0..g {
        for i in 0..n {
            let logits: Vec<Option<f64>> = (0..n)
                .map(|m| {
                    adj[(gi * n + i) * n + m].then(|| {
                        let e = dot(&r.data()[..b], row(gi, i)) + dot(&r.data()[b..], row(gi, m));
                        if e > 0.0 { e } else { slope * e }
                    })
                })
                .collect();
            let mx = logits.iter().flatten().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let z: f64 = logits.iter().flatten().map(|v| (v - mx).exp()).sum();
            for d in 0..b {
                let s: f64 = (0..n).filter_map(|m| logits[m].map(|e| (e - mx).exp() / z * row(gi, m)[d])).sum();
                out.push(s);
            }
        }
    }
    out
}

fn operator_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = [0.0f64; 5];
    for _ in 0..100 {
        let tape = Tape::<f64>::new();
        // conv2d
        let (n, ci, co) = (rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..4));
        let kk = [1, 3, 5][rng.gen_range(0..3)];
        let (stride, pad) = (rng.gen_range(1..3), rng.gen_range(0..3));
        let h = rng.gen_range(kk.max(3)..10);
        let w = rng.gen_range(kk.max(3)..10);
        let x = rand_tensor(&[n, ci, h, w], &mut rng);
        let k = rand_tensor(&[co, ci, kk, kk], &mut rng);
        let b = rand_tensor(&[co], &mut rng);
        let y = tape.constant(x.clone()).conv2d(tape.constant(k.clone()), Some(tape.constant(b.clone())), stride, pad).unwrap();
        worst[0] = worst[0].max(max_diff(y.value().data(), &conv2d_oracle(&x, &k, &b, stride, pad)));
        // conv1d
        let (t, kk) = (rng.gen_range(5..20), rng.gen_range(1..6));
        let pad = rng.gen_range(0..3);
        let x = rand_tensor(&[n, ci, t], &mut rng);
        let k = rand_tensor(&[co, ci, kk], &mut rng);
        let y = tape.constant(x.clone()).conv1d(tape.constant(k.clone()), Some(tape.constant(b.clone())), pad).unwrap();
        worst[1] = worst[1].max(max_diff(y.value().data(), &conv1d_oracle(&x, &k, &b, pad)));
        // linear
        let (rows, din, dout) = (rng.gen_range(1..7), rng.gen_range(1..9), rng.gen_range(1..9));
        let x = rand_tensor(&[rows, din], &mut rng);
        let wt = rand_tensor(&[dout, din], &mut rng);
        let bias = rand_tensor(&[dout], &mut rng);
        let y = tape.constant(x.clone()).linear(tape.constant(wt.clone()), Some(tape.constant(bias.clone()))).unwrap();
        let want: Vec<f64> = (0..rows)
            .flat_map(|r| {
                let (x, wt, bias) = (&x, &wt, &bias);
                (0..dout).map(move |o| bias.data()[o] + (0..din).map(|i| x.at(&[r, i]) * wt.at(&[o, i])).sum::<f64>())
            })
            .collect();
        worst[2] = worst[2].max(max_diff(y.value().data(), &want));
        // graph attention
        let (g, nodes, width) = (rng.gen_range(1..4), rng.gen_range(2..7), rng.gen_range(1..6));
        let wv = rand_tensor(&[g, nodes, width], &mut rng);
        let r = rand_tensor(&[2 * width], &mut rng);
        let adj: Vec<bool> = (0..g * nodes * nodes).map(|i| i / nodes % nodes == i % nodes || rng.gen_bool(0.5)).collect();
        let z = tape.constant(wv.clone()).graph_attention(tape.constant(r.clone()), Rc::new(adj.clone()), 0.2).unwrap();
        worst[3] = worst[3].max(max_diff(z.value().data(), &gat_oracle(&wv, &r, &adj, 0.2)));
        // softmax
        let rank = rng.gen_range(1..4);
        let shape: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..6)).collect();
        let axis = rng.gen_range(0..rank);
        let x = Tensor::from_fn(shape.clone(), |_| rng.gen_range(-5.0..5.0));
        let y = tape.constant(x.clone()).softmax(axis).unwrap();
        worst[4] = worst[4].max(max_diff(y.value().data(), &softmax_oracle(&x, axis)));
    }
    let names = ["conv2d", "conv1d", "linear", "gat", "softmax"];
    let detail: Vec<String> = names.iter().zip(&worst).map(|(n, w)| format!("{n} {w:.1e}")).collect();
    verdict(worst.iter().all(|&w| w <= ORACLE_TOL), format!("100 instances each, max abs diff: {}", detail.join(", ")))
}

fn slicing_and_locality() -> Verdict {
    let rows: Vec<Vec<usize>> = REGION_ROWS.iter().map(|&(a, b)| (a..b).collect()).collect();
    let rows_ok = rows == vec![vec![0, 1, 2], vec![2, 3, 4], vec![4, 5, 6]];
    let cfg = RunConfig::default();
    let (model, store) = Mdhr::new::<f64>(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = cfg.backbone.top_channels();
    let g = rand_tensor(&[4, c, 7, 7], &mut rng);
    let mut g2 = g.clone();
    // Rows 5 and 6 belong to the lower region only.
    for (i, v) in g2.data_mut().iter_mut().enumerate() {
        if (i / 7) % 7 >= 5 {
            *v += rng.gen_range(-3.0..3.0);
        }
    }
    let local = |x: &Tensor<f64>| {
        let tape = Tape::<f64>::new();
        let p = store.bind(&tape);
        let slices = slice_regions(tape.constant(x.clone())).unwrap();
        let (sl_shapes, out) = (slices.iter().map(|s| s.shape()).collect::<Vec<_>>(), model.hsr.forward(&p, tape.constant(x.clone())).unwrap());
        (sl_shapes, out.local.value().as_ref().clone())
    };
    let (shapes, a) = local(&g);
    let (_, b) = local(&g2);
    let n = cfg.n_aus();
    let width = cfg.hsr.au_dim;
    let mut upper_same = true;
    let mut lower_moved = false;
    for f in 0..4 {
        for (j, &home) in model.hsr.homes().iter().enumerate() {
            let seg = |t: &Tensor<f64>| t.data()[(f * n + j) * width..(f * n + j + 1) * width].to_vec();
            let same = seg(&a).iter().zip(&seg(&b)).all(|(x, y)| x.to_bits() == y.to_bits());
            if home == 0 {
                upper_same &= same;
            }
            if home == 2 && !same {
                lower_moved = true;
            }
        }
    }
    let shapes_ok = shapes.iter().all(|s| s[2] == 3 && s[3] == 7);
    verdict(
        rows_ok && shapes_ok && upper_same && lower_moved,
        format!("rows {rows:?}; upper-region node features after perturbing rows 5-6: {}", if upper_same { "bitwise unchanged" } else { "changed" }),
    )
}

fn combination_bijection() -> Verdict {
    let mut ok = true;
    let mut total = 0usize;
    for n in 1..=10usize {
        let mut seen = vec![false; 1 << n];
        for i in 0..1usize << n {
            let bits = decode_combination(i, n).unwrap();
            let back = encode_combination(&bits);
            ok &= bits.len() == n && back == i && !seen[back];
            seen[back] = true;
            let direct: usize = bits.iter().enumerate().map(|(j, &b)| (b as usize) << j).sum();
            ok &= direct == i;
            total += 1;
        }
        ok &= seen.iter().all(|&s| s) && decode_combination(1 << n, n).is_err();
    }
    verdict(ok, format!("{total} patterns over region sizes 1..=10 round-trip"))
}

fn sc_range_and_scale() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (b, count) = (16, 100_000);
    let tape = Tape::<f64>::new();
    let v = Tensor::from_fn([count, b], |_| rng.gen_range(-2.0..2.0));
    let anchor = Tensor::from_fn([b], |_| rng.gen_range(-0.2..1.0));
    let p = sc_predict(tape.constant(v.clone()), tape.constant(anchor.clone())).unwrap().value();
    let (lo, hi) = p.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let mut worst = 0.0f64;
    for s in [1e-3, 0.5, 7.0, 1e4] {
        let scaled = sc_predict(tape.constant(v.map(|x| x * s)), tape.constant(anchor.clone())).unwrap().value();
        worst = worst.max(max_diff(scaled.data(), p.data()));
    }
    verdict(
        lo >= 0.0 && hi <= 1.0 && worst <= SC_SCALE_TOL,
        format!("{count} vectors in [{lo:.3e}, {hi:.6}]; max change under positive rescaling {worst:.1e}"),
    )
}

fn loss_sanity() -> Verdict {
    let one = |p: f64, y: f64| {
        let tape = Tape::<f64>::new();
        let pv = tape.constant(Tensor::from_f64([1, 1, 1], &[p]).unwrap());
        au_loss(pv, &Tensor::from_f64([1, 1, 1], &[y]).unwrap(), &[1.0], None).unwrap().value().item()
    };
    let (pos, neg) = (one(0.5, 1.0), one(0.5, 0.0));
    let limit = one(1.0 - 1e-9, 1.0).max(one(1e-9, 0.0));
    verdict(
        (pos - 0.6931).abs() <= LOSS_TOL && (neg - 0.3466).abs() <= LOSS_TOL && limit < 1e-6,
        format!("y=1,p=0.5 -> {pos:.6}; y=0,p=0.5 -> {neg:.6}; matched predictions -> {limit:.1e}"),
    )
}

struct Experiment {
    train: Dataset,
    eval: Dataset,
    data_dir: std::path::PathBuf,
    out: tempfile::TempDir,
}

impl Experiment {
    fn new() -> Self {
        let out = tempfile::tempdir().unwrap();
        let data_dir = out.path().join("synth");
        SynthSpec::default().write(&data_dir).unwrap();
        let cfg = RunConfig::default();
        let train = Dataset::load(&data_dir.join("train"), Some(&cfg.au_ids)).unwrap();
        let eval = Dataset::load(&data_dir.join("eval"), Some(&cfg.au_ids)).unwrap();
        Experiment { train, eval, data_dir, out }
    }

    fn config(&self, name: &str) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.data.train_dir = Some(self.data_dir.join("train"));
        cfg.data.eval_dir = Some(self.data_dir.join("eval"));
        cfg.output_dir = self.out.path().join(name);
        cfg
    }

    /// Final-epoch held-out macro-F1 and wall time.
    fn run(&self, cfg: RunConfig) -> (f64, f64, std::path::PathBuf) {
        let start = Instant::now();
        let out = Trainer::new(cfg).run::<f32>(&self.train, &self.eval).unwrap();
        let f1 = out.history.last().and_then(|h| h.eval.as_ref()).map(|r| r.macro_f1).expect("final epoch is validated");
        (f1, start.elapsed().as_secs_f64(), out.metrics)
    }
}

fn end_to_end(x: &Experiment) -> Verdict {
    let mut cfg = x.config("full");
    cfg.train.epochs = E2E_EPOCHS;
    let mut ablation = cfg.clone();
    ablation.mfd.enabled = false;
    ablation.output_dir = x.out.path().join("ablation");
    let (full, t_full, _) = x.run(cfg);
    let (abl, t_abl, _) = x.run(ablation);
    let secs = t_full + t_abl;
    verdict(
        full >= F1_TARGET && full > abl && secs < E2E_SECONDS,
        format!(
            "{E2E_EPOCHS} epochs: macro-F1 full {full:.4} (target {F1_TARGET}), without dynamics {abl:.4}; {:.1} min for both",
            secs / 60.0
        ),
    )
}

fn lambda_sweep(x: &Experiment) -> Verdict {
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..SWEEP_SEEDS {
        let arm = |lambda: f64| {
            let mut cfg = x.config(&format!("sweep_{seed}_{lambda}"));
            cfg.train.epochs = SWEEP_EPOCHS;
            cfg.train.seed = seed;
            cfg.train.lambda = lambda;
            x.run(cfg).0
        };
        let (with, without) = (arm(0.01), arm(0.0));
        wins += (with >= without) as usize;
        pairs.push(format!("{with:.3}/{without:.3}"));
    }
    verdict(wins >= 3, format!("lambda 0.01 >= 0 on {wins} of {SWEEP_SEEDS} seeds ({SWEEP_EPOCHS} epochs; {})", pairs.join(" ")))
}

fn determinism(x: &Experiment) -> Verdict {
    let read = |name: &str| {
        let mut cfg = x.config(name);
        cfg.train.epochs = REPLAY_EPOCHS;
        cfg.train.validation_interval = 1;
        let (_, _, metrics) = x.run(cfg);
        std::fs::read(metrics).unwrap()
    };
    let (a, b) = (read("replay_a"), read("replay_b"));
    let rows = a.iter().filter(|&&c| c == b'\n').count();
    verdict(a == b && rows > 1, format!("two {REPLAY_EPOCHS}-epoch runs: {METRICS_FILE} {} ({rows} lines)", if a == b { "identical" } else { "differs" }))
}

/// `ACCEPTANCE_ONLY=1,4,9` restricts the run to the listed criteria.
fn selected() -> Option<Vec<usize>> {
    std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
}

fn main() {
    let only = selected();
    let want = |n: usize| only.as_ref().map_or(true, |o| o.contains(&n));
    let mut all = true;
    let mut report = |n: usize, name: &str, v: Verdict| {
        all &= v.pass;
        println!("criterion {n:>2} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    };
    let quick: [(usize, &str, fn() -> Verdict); 8] = [
        (1, "gradient correctness", gradients),
        (2, "scale weight normalization", scale_weight_normalization),
        (3, "zero-motion identity", zero_motion_identity),
        (4, "operator oracles", operator_oracles),
        (5, "region slicing and locality", slicing_and_locality),
        (6, "combination coding", combination_bijection),
        (7, "similarity range and scale invariance", sc_range_and_scale),
        (8, "loss sanity", loss_sanity),
    ];
    for (n, name, f) in quick {
        if want(n) {
            report(n, name, f());
        }
    }
    let trained: [(usize, &str, fn(&Experiment) -> Verdict); 3] = [
        (9, "end-to-end synthetic learning", end_to_end),
        (10, "lambda sweep direction", lambda_sweep),
        (11, "determinism", determinism),
    ];
    if trained.iter().any(|(n, ..)| want(*n)) {
        let x = Experiment::new();
        for (n, name, f) in trained {
            if want(n) {
                report(n, name, f(&x));
            }
        }
    }
    if !all {
        std::process::exit(1);
    }
}
