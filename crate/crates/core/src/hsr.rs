//! Hierarchical relationship modelling: region slicing, per-AU feature
//! extraction, per-region combination heads, and activation-gated
//! cross-region graph attention.

use std::rc::Rc;

use mdhr_tensor::{Scalar, Tensor, Var};
use rand::Rng;

use crate::combo::decode_combination;
use crate::config::{RunConfig, REGION_NAMES, TOP_SIZE};
use crate::error::{CoreError, Result};
use crate::params::{kaiming_uniform, Bound, ParamId, ParamStore};

/// Row ranges `[start, end)` of the upper, middle and lower bands.
pub const REGION_ROWS: [(usize, usize); 3] = [(0, 3), (2, 5), (4, 7)];

pub const LEAKY_SLOPE: f64 = 0.2;

/// Splits `[n, c, 7, w]` along the height axis.
pub fn slice_regions<'t, S: Scalar>(g: Var<'t, S>) -> Result<[Var<'t, S>; 3]> {
    let shape = g.shape();
    if shape.len() != 4 || shape[2] != TOP_SIZE {
        return Err(CoreError::Config(format!("region slicing needs height {TOP_SIZE}, got {shape:?}")));
    }
    let [a, b, c] = REGION_ROWS;
    Ok([g.slice_axis(2, a.0, a.1)?, g.slice_axis(2, b.0, b.1)?, g.slice_axis(2, c.0, c.1)?])
}

/// How cross-node edges are built. Only `Gated` is used by the model; the
/// others exist for comparison in tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EdgeStrategy {
    #[default]
    Gated,
    Full,
    Local,
}

#[derive(Clone, Debug)]
pub struct Hsr {
    n: usize,
    au_dim: usize,
    homes: Vec<usize>,
    /// For each node, its position inside its home region's list.
    home_bit: Vec<usize>,
    region_sizes: [usize; 3],
    afe: Vec<(ParamId, ParamId)>,
    aux: Vec<(ParamId, ParamId)>,
    w: ParamId,
    r: ParamId,
    pub edges: EdgeStrategy,
}

pub struct HsrOutput<'t, S: Scalar> {
    /// Region-local node features `[n, N, b]`.
    pub local: Var<'t, S>,
    /// Graph-attention output `[n, N, b]`.
    pub nodes: Var<'t, S>,
    /// Per region, combination probabilities `[n, 2^{N_sub}]`.
    pub combos: Vec<Var<'t, S>>,
    /// `[n * N]` activation flags from the combination argmax.
    pub active: Vec<bool>,
    /// `[n, N, N]`, entry `(f, i, j)` true when `j` feeds node `i`.
    pub adjacency: Rc<Vec<bool>>,
}

impl Hsr {
    pub fn new<S: Scalar>(cfg: &RunConfig, store: &mut ParamStore<S>, rng: &mut impl Rng) -> Self {
        let c = cfg.backbone.top_channels();
        let b = cfg.hsr.au_dim;
        let homes = cfg.homes();
        let regions = cfg.regions.regions();
        let home_bit = cfg
            .au_ids
            .iter()
            .zip(&homes)
            .map(|(a, &h)| regions[h].iter().position(|x| x == a).expect("home lists AU"))
            .collect();
        let afe = cfg
            .au_ids
            .iter()
            .map(|id| {
                let w = kaiming_uniform(&[b, c], c, rng);
                (
                    store.add(format!("hsr.afe.au{id}.weight"), w, true),
                    store.add(format!("hsr.afe.au{id}.bias"), Tensor::zeros([b]), false),
                )
            })
            .collect();
        let aux = REGION_NAMES
            .iter()
            .zip(regions)
            .map(|(name, r)| {
                let classes = 1usize << r.len();
                let w = kaiming_uniform(&[classes, c], c, rng);
                (
                    store.add(format!("hsr.aux.{name}.weight"), w, true),
                    store.add(format!("hsr.aux.{name}.bias"), Tensor::zeros([classes]), false),
                )
            })
            .collect();
        let w = store.add("hsr.gat.W", kaiming_uniform(&[b, b], b, rng), true);
        let r = store.add("hsr.gat.r", kaiming_uniform(&[2 * b], 2 * b, rng), true);
        Hsr {
            n: cfg.n_aus(),
            au_dim: b,
            homes,
            home_bit,
            region_sizes: [regions[0].len(), regions[1].len(), regions[2].len()],
            afe,
            aux,
            w,
            r,
            edges: EdgeStrategy::Gated,
        }
    }

    pub fn homes(&self) -> &[usize] {
        &self.homes
    }

    /// AFE: per-AU 1x1 projection of the home slice followed by GAP. The
    /// projection commutes with GAP, so it is applied to the pooled vector.
    pub fn extract<'t, S: Scalar>(&self, p: &Bound<'t, S>, slices: &[Var<'t, S>; 3]) -> Result<Var<'t, S>> {
        let pooled = slices.iter().map(|s| s.global_avg_pool()).collect::<Result<Vec<_>, _>>()?;
        let frames = pooled[0].shape()[0];
        let nodes = self
            .afe
            .iter()
            .zip(&self.homes)
            .map(|(&(w, b), &h)| pooled[h].linear(p.var(w), Some(p.var(b)))?.reshape([frames, 1, self.au_dim]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Var::concat(&nodes, 1)?)
    }

    pub fn aux_predict<'t, S: Scalar>(&self, p: &Bound<'t, S>, slices: &[Var<'t, S>; 3]) -> Result<Vec<Var<'t, S>>> {
        slices
            .iter()
            .zip(&self.aux)
            .map(|(s, &(w, b))| Ok(s.global_avg_pool()?.linear(p.var(w), Some(p.var(b)))?.softmax(1)?))
            .collect()
    }

    pub fn forward<'t, S: Scalar>(&self, p: &Bound<'t, S>, g: Var<'t, S>) -> Result<HsrOutput<'t, S>> {
        let slices = slice_regions(g)?;
        let local = self.extract(p, &slices)?;
        let combos = self.aux_predict(p, &slices)?;
        let dists: Vec<_> = combos.iter().map(|c| c.value()).collect();
        let active = decide_activation(&dists, &self.homes, &self.home_bit)?;
        let adjacency = Rc::new(match self.edges {
            EdgeStrategy::Gated => build_edges(&active, &self.homes),
            EdgeStrategy::Full => vec![true; active.len() * self.n],
            EdgeStrategy::Local => {
                let n = self.n;
                (0..active.len() * n).map(|i| self.homes[i % n] == self.homes[i / n % n]).collect()
            }
        });
        let wv = local.linear(p.var(self.w), None)?;
        let nodes = wv.graph_attention(p.var(self.r), Rc::clone(&adjacency), LEAKY_SLOPE)?.elu();
        Ok(HsrOutput { local, nodes, combos, active, adjacency })
    }

    pub fn region_sizes(&self) -> [usize; 3] {
        self.region_sizes
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Per frame and node, the home region's decoded argmax bit.
/// `dists[r]` is `[n, 2^{N_r}]`; the result is `[n * N]`.
pub fn decide_activation<S: Scalar>(dists: &[Rc<Tensor<S>>], homes: &[usize], home_bit: &[usize]) -> Result<Vec<bool>> {
    let frames = dists[0].shape()[0];
    let mut decoded = Vec::with_capacity(dists.len());
    for d in dists {
        let classes = d.shape()[1];
        let n_sub = classes.trailing_zeros() as usize;
        let rows = d
            .data()
            .chunks(classes)
            .map(|row| decode_combination(argmax(row), n_sub))
            .collect::<Result<Vec<_>>>()?;
        decoded.push(rows);
    }
    let mut active = Vec::with_capacity(frames * homes.len());
    for f in 0..frames {
        for (&h, &bit) in homes.iter().zip(home_bit) {
            active.push(decoded[h][f][bit]);
        }
    }
    Ok(active)
}

/// Node `m` feeds node `i` when it is active and homed in another region;
/// every node also feeds itself. `active` is `[n * N]`, the result `[n, N, N]`.
pub fn build_edges(active: &[bool], homes: &[usize]) -> Vec<bool> {
    let n = homes.len();
    let frames = active.len() / n;
    let mut adj = vec![false; frames * n * n];
    for f in 0..frames {
        for i in 0..n {
            for m in 0..n {
                adj[(f * n + i) * n + m] = m == i || (homes[m] != homes[i] && active[f * n + m]);
            }
        }
    }
    adj
}
