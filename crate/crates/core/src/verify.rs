//! Finite-difference verification of every differentiable module on a
//! small configuration.

use std::rc::Rc;

use mdhr_tensor::gradcheck::GradCheck;
use mdhr_tensor::{Fault, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{BackboneConfig, HsrConfig, MfdConfig, RunConfig, TOP_SIZE};
use crate::error::{CoreError, Result};
use crate::head::Head;
use crate::hsr::{build_edges, Hsr, LEAKY_SLOPE};
use crate::mfd::Mfd;
use crate::objective::{au_loss, sub_loss, total_loss};
use crate::params::{Bound, ParamStore};

pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Module {
    Mfd,
    Hsr,
    Head,
    Loss,
}

impl Module {
    pub const ALL: [Module; 4] = [Module::Mfd, Module::Hsr, Module::Head, Module::Loss];

    pub fn name(self) -> &'static str {
        match self {
            Module::Mfd => "mfd",
            Module::Hsr => "hsr",
            Module::Head => "head",
            Module::Loss => "loss",
        }
    }

    pub fn parse(s: &str) -> Option<Vec<Module>> {
        match s {
            "all" => Some(Self::ALL.to_vec()),
            _ => Self::ALL.iter().copied().find(|m| m.name() == s).map(|m| vec![m]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub module: &'static str,
    pub op: &'static str,
    pub max_rel_err: f64,
    pub checked: usize,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

/// Small geometry shared by the checks: three scales of 14, 7 and 7.
pub fn small_config() -> RunConfig {
    RunConfig {
        backbone: BackboneConfig {
            in_channels: 3,
            input_size: 28,
            stage_channels: vec![2, 3, 4],
            stage_strides: vec![2, 2, 1],
        },
        mfd: MfdConfig { k: 1, ..Default::default() },
        hsr: HsrConfig { au_dim: 3 },
        ..Default::default()
    }
}

fn randn(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-scale..scale))
}

/// Contracts `y` against a fixed random tensor so every output coordinate matters.
fn project<'t>(tape: &'t Tape<f64>, y: Var<'t, f64>, seed: u64) -> Result<Var<'t, f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = randn(&y.shape(), 1.0, &mut rng);
    Ok(y.mul(tape.constant(w))?.sum_all())
}

struct Harness {
    check: GradCheck,
}

impl Harness {
    fn run<F>(&self, module: &'static str, op: &'static str, points: &[Tensor<f64>], f: F) -> Result<CheckLine>
    where
        F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> mdhr_tensor::Result<Var<'t, f64>>,
    {
        let r = self.check.run(points, f)?;
        Ok(CheckLine { module, op, max_rel_err: r.max_rel_err, checked: r.checked })
    }
}

fn params(store: &ParamStore<f64>) -> Vec<Tensor<f64>> {
    store.iter().map(|p| p.value.clone()).collect()
}

fn tensor_err(e: CoreError) -> mdhr_tensor::TensorError {
    match e {
        CoreError::Tensor(t) => t,
        other => mdhr_tensor::TensorError::Usage(other.to_string()),
    }
}

/// Runs the selected checks. `fault` corrupts one operator's adjoint on
/// the analytic side, which the checks must detect.
pub fn run_checks(modules: &[Module], fault: Option<Fault>) -> Result<Vec<CheckLine>> {
    let h = Harness { check: GradCheck { eps: 1e-5, max_coords: Some(48), fault } };
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut lines = Vec::new();
    for &m in modules {
        match m {
            Module::Mfd => {
                let mut store = ParamStore::new();
                let mfd = Mfd::new(&cfg, &mut store, &mut rng);
                let (b, t, k) = (2, 2, cfg.mfd.k);
                let f = t + 2 * k;
                let sizes = cfg.backbone.spatial_sizes();
                let mut points = params(&store);
                let np = points.len();
                for (&c, &s) in cfg.backbone.stage_channels.iter().zip(&sizes) {
                    points.push(randn(&[b * f, c, s, s], 1.0, &mut rng));
                }
                lines.push(h.run("mfd", "forward", &points, |tape, v| {
                    let p = Bound::from_vars(v[..np].to_vec());
                    let out = mfd.forward(&p, &v[np..], b, t).map_err(tensor_err)?;
                    let g = project(tape, out.g, 1).map_err(tensor_err)?;
                    let w = project(tape, out.weights, 2).map_err(tensor_err)?;
                    g.add(w)
                })?);
            }
            Module::Hsr => {
                let mut store = ParamStore::new();
                let hsr = Hsr::new(&cfg, &mut store, &mut rng);
                let c = cfg.backbone.top_channels();
                let mut points = params(&store);
                let np = points.len();
                points.push(randn(&[2, c, TOP_SIZE, TOP_SIZE], 1.0, &mut rng));
                lines.push(h.run("hsr", "aux_predict", &points, |tape, v| {
                    let p = Bound::from_vars(v[..np].to_vec());
                    let slices = crate::hsr::slice_regions(v[np]).map_err(tensor_err)?;
                    let dists = hsr.aux_predict(&p, &slices).map_err(tensor_err)?;
                    let mut acc = project(tape, dists[0], 3).map_err(tensor_err)?;
                    for (i, d) in dists[1..].iter().enumerate() {
                        acc = acc.add(project(tape, *d, 4 + i as u64).map_err(tensor_err)?)?;
                    }
                    Ok(acc)
                })?);
                lines.push(h.run("hsr", "forward", &points, |tape, v| {
                    let p = Bound::from_vars(v[..np].to_vec());
                    let out = hsr.forward(&p, v[np]).map_err(tensor_err)?;
                    project(tape, out.nodes, 7).map_err(tensor_err)
                })?);
                let n = cfg.n_aus();
                let b = cfg.hsr.au_dim;
                let active: Vec<bool> = (0..2 * n).map(|i| i % 3 != 1).collect();
                let adj = Rc::new(build_edges(&active, &cfg.homes()));
                let gat = [randn(&[2, n, b], 1.0, &mut rng), randn(&[b, b], 1.0, &mut rng), randn(&[2 * b], 1.0, &mut rng)];
                lines.push(h.run("hsr", "graph_attention", &gat, |tape, v| {
                    let z = v[0].linear(v[1], None)?.graph_attention(v[2], Rc::clone(&adj), LEAKY_SLOPE)?.elu();
                    project(tape, z, 8).map_err(tensor_err)
                })?);
            }
            Module::Head => {
                let mut store = ParamStore::new();
                let head = Head::new(&cfg, &mut store, &mut rng);
                let (bsz, t) = (2, 6);
                let mut points = params(&store);
                let np = points.len();
                points.push(randn(&[bsz * t, cfg.n_aus(), cfg.hsr.au_dim], 1.0, &mut rng));
                lines.push(h.run("head", "tcn_sc", &points, |tape, v| {
                    let p = Bound::from_vars(v[..np].to_vec());
                    let probs = head.forward(&p, v[np], bsz, t).map_err(tensor_err)?;
                    project(tape, probs, 9).map_err(tensor_err)
                })?);
            }
            Module::Loss => {
                let (b, t, n) = (2, 3, cfg.n_aus());
                let probs = Tensor::from_fn([b, t, n], |_| rng.gen_range(0.05..0.95));
                let labels = Tensor::from_fn([b, t, n], |_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
                let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
                lines.push(h.run("loss", "au_loss", &[probs.clone()], |_, v| {
                    au_loss(v[0], &labels, &weights, None).map_err(tensor_err)
                })?);
                let sizes: Vec<usize> = cfg.regions.regions().iter().map(|r| 1 << r.len()).collect();
                let logits: Vec<Tensor<f64>> = sizes.iter().map(|&s| randn(&[b * t, s], 2.0, &mut rng)).collect();
                let targets: Vec<Vec<usize>> = sizes.iter().map(|&s| (0..b * t).map(|_| rng.gen_range(0..s)).collect()).collect();
                lines.push(h.run("loss", "sub_loss", &logits, |_, v| {
                    let d = v.iter().map(|x| x.softmax(1)).collect::<mdhr_tensor::Result<Vec<_>>>()?;
                    sub_loss(&d, &targets, None).map_err(tensor_err)
                })?);
                let mut all = logits.clone();
                all.push(probs);
                lines.push(h.run("loss", "total_loss", &all, |_, v| {
                    let d = v[..3].iter().map(|x| x.softmax(1)).collect::<mdhr_tensor::Result<Vec<_>>>()?;
                    let la = au_loss(v[3], &labels, &weights, None).map_err(tensor_err)?;
                    let ls = sub_loss(&d, &targets, None).map_err(tensor_err)?;
                    total_loss(la, ls, 0.01).map_err(tensor_err)
                })?);
            }
        }
    }
    Ok(lines)
}
