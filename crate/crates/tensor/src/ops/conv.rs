use rayon::prelude::*;

use super::{acc, val, Conv1dGeom, Conv2dGeom, Op};
use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tape::{Node, Var};
use crate::tensor::Tensor;

fn out_extent(n: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return dim_err("convolution stride must be positive");
    }
    if n + 2 * pad < k {
        return dim_err(format!("kernel {k} larger than padded input {}", n + 2 * pad));
    }
    Ok((n + 2 * pad - k) / stride + 1)
}

fn check_bias<S: Scalar>(b: Option<&Tensor<S>>, cout: usize) -> Result<()> {
    match b {
        Some(b) if b.shape() != [cout] => dim_err(format!("conv bias {:?}, expected [{cout}]", b.shape())),
        _ => Ok(()),
    }
}

fn conv2d_geom(xs: &[usize], ks: &[usize], stride: usize, pad: usize) -> Result<Conv2dGeom> {
    if xs.len() != 4 || ks.len() != 4 || ks[2] != ks[3] || ks[1] != xs[1] {
        return dim_err(format!("conv2d input {xs:?} and kernel {ks:?} do not fit"));
    }
    let k = ks[2];
    Ok(Conv2dGeom {
        batch: xs[0],
        cin: xs[1],
        h: xs[2],
        w: xs[3],
        cout: ks[0],
        k,
        stride,
        pad,
        oh: out_extent(xs[2], k, stride, pad)?,
        ow: out_extent(xs[3], k, stride, pad)?,
    })
}

impl Conv2dGeom {
    fn patch(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// A 1x1 unit-stride unpadded conv reads the input as its own column matrix.
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Input coordinate for output position `o` and kernel tap `t`, if inside.
    #[inline]
    fn src(&self, o: usize, t: usize, n: usize) -> Option<usize> {
        let i = (o * self.stride + t) as isize - self.pad as isize;
        (i >= 0 && (i as usize) < n).then_some(i as usize)
    }

    fn im2col<S: Scalar>(&self, x: &[S], cols: &mut [S]) {
        let p = self.positions();
        for c in 0..self.cin {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let iy = self.src(oy, ki, self.h);
                        for ox in 0..self.ow {
                            dst[oy * self.ow + ox] = match (iy, self.src(ox, kj, self.w)) {
                                (Some(iy), Some(ix)) => plane[iy * self.w + ix],
                                _ => S::zero(),
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im<S: Scalar>(&self, cols: &[S], x: &mut [S]) {
        let p = self.positions();
        for c in 0..self.cin {
            let plane = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let Some(iy) = self.src(oy, ki, self.h) else { continue };
                        for ox in 0..self.ow {
                            if let Some(ix) = self.src(ox, kj, self.w) {
                                plane[iy * self.w + ix] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    /// 2-D cross-correlation. `self [B, Cin, H, W]`, `k [Cout, Cin, K, K]`,
    /// optional `b [Cout]`; zero padding on every side.
    pub fn conv2d(self, k: Var<'t, S>, b: Option<Var<'t, S>>, stride: usize, pad: usize) -> Result<Var<'t, S>> {
        self.same_tape(&k)?;
        if let Some(b) = &b {
            self.same_tape(b)?;
        }
        let xv = self.value();
        let kv = k.value();
        let g = conv2d_geom(xv.shape(), kv.shape(), stride, pad)?;
        let bv = b.map(|b| b.value());
        check_bias(bv.as_deref(), g.cout)?;
        let (p, patch) = (g.positions(), g.patch());
        let in_len = g.cin * g.h * g.w;
        let mut out = vec![S::zero(); g.batch * g.cout * p];
        let (xd, kd) = (xv.data(), kv.data());
        let bd = bv.as_ref().map(|b| b.data());
        out.par_chunks_mut(g.cout * p).enumerate().for_each(|(i, dst)| {
            if let Some(bd) = bd {
                for (co, &bias) in bd.iter().enumerate() {
                    dst[co * p..(co + 1) * p].iter_mut().for_each(|v| *v = bias);
                }
            }
            let x = &xd[i * in_len..(i + 1) * in_len];
            let owned;
            let cols = if g.is_pointwise() {
                x
            } else {
                let mut c = vec![S::zero(); patch * p];
                g.im2col(x, &mut c);
                owned = c;
                &owned
            };
            S::gemm(g.cout, patch, p, kd, patch as isize, 1, cols, p as isize, 1, S::one(), dst, p as isize, 1);
        });
        let rg = self.requires_grad() || k.requires_grad() || b.is_some_and(|b| b.requires_grad());
        Ok(self.tape().push(
            Tensor::new([g.batch, g.cout, g.oh, g.ow], out)?,
            Op::Conv2d { x: self.id(), k: k.id(), b: b.map(|b| b.id()), g },
            rg,
        ))
    }

    /// 1-D cross-correlation with unit stride. `self [B, Cin, T]`,
    /// `k [Cout, Cin, K]`, optional `b [Cout]`.
    pub fn conv1d(self, k: Var<'t, S>, b: Option<Var<'t, S>>, pad: usize) -> Result<Var<'t, S>> {
        self.same_tape(&k)?;
        if let Some(b) = &b {
            self.same_tape(b)?;
        }
        let xv = self.value();
        let kv = k.value();
        let (xs, ks) = (xv.shape(), kv.shape());
        if xs.len() != 3 || ks.len() != 3 || ks[1] != xs[1] {
            return dim_err(format!("conv1d input {xs:?} and kernel {ks:?} do not fit"));
        }
        let g = Conv1dGeom {
            batch: xs[0],
            cin: xs[1],
            t: xs[2],
            cout: ks[0],
            k: ks[2],
            pad,
            ot: out_extent(xs[2], ks[2], 1, pad)?,
        };
        let bv = b.map(|b| b.value());
        check_bias(bv.as_deref(), g.cout)?;
        let out = conv1d_forward(&g, xv.data(), kv.data(), bv.as_ref().map(|b| b.data()));
        let rg = self.requires_grad() || k.requires_grad() || b.is_some_and(|b| b.requires_grad());
        Ok(self.tape().push(
            Tensor::new([g.batch, g.cout, g.ot], out)?,
            Op::Conv1d { x: self.id(), k: k.id(), b: b.map(|b| b.id()), g },
            rg,
        ))
    }
}

fn conv1d_forward<S: Scalar>(g: &Conv1dGeom, x: &[S], k: &[S], b: Option<&[S]>) -> Vec<S> {
    let mut out = vec![S::zero(); g.batch * g.cout * g.ot];
    for n in 0..g.batch {
        for co in 0..g.cout {
            let dst = &mut out[(n * g.cout + co) * g.ot..][..g.ot];
            if let Some(b) = b {
                dst.iter_mut().for_each(|v| *v = b[co]);
            }
            for ci in 0..g.cin {
                let src = &x[(n * g.cin + ci) * g.t..][..g.t];
                let taps = &k[(co * g.cin + ci) * g.k..][..g.k];
                for (j, &w) in taps.iter().enumerate() {
                    for (o, d) in dst.iter_mut().enumerate() {
                        let i = (o + j) as isize - g.pad as isize;
                        if i >= 0 && (i as usize) < g.t {
                            *d += w * src[i as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}

pub(super) fn conv2d_backward<S: Scalar>(
    x: usize,
    k: usize,
    b: Option<usize>,
    g: Conv2dGeom,
    nodes: &[Node<S>],
    grad: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let need_x = nodes[x].requires_grad;
    let need_k = nodes[k].requires_grad;
    let (p, patch) = (g.positions(), g.patch());
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * p;
    let (xd, kd) = (val(nodes, x).data(), val(nodes, k).data());
    if need_x || need_k {
        // Per-item partials, reduced in item order for run-to-run determinism.
        let parts: Vec<(Option<Vec<S>>, Option<Vec<S>>)> = (0..g.batch)
            .into_par_iter()
            .map(|i| {
                let gy = &grad[i * out_len..(i + 1) * out_len];
                let xi = &xd[i * in_len..(i + 1) * in_len];
                let gk = need_k.then(|| {
                    let owned;
                    let cols = if g.is_pointwise() {
                        xi
                    } else {
                        let mut c = vec![S::zero(); patch * p];
                        g.im2col(xi, &mut c);
                        owned = c;
                        &owned
                    };
                    let mut gk = vec![S::zero(); g.cout * patch];
                    S::gemm(g.cout, p, patch, gy, p as isize, 1, cols, 1, p as isize, S::zero(), &mut gk, patch as isize, 1);
                    gk
                });
                let gx = need_x.then(|| {
                    let mut gcols = vec![S::zero(); patch * p];
                    S::gemm(patch, g.cout, p, kd, 1, patch as isize, gy, p as isize, 1, S::zero(), &mut gcols, p as isize, 1);
                    if g.is_pointwise() {
                        gcols
                    } else {
                        let mut gx = vec![S::zero(); in_len];
                        g.col2im(&gcols, &mut gx);
                        gx
                    }
                });
                (gx, gk)
            })
            .collect();
        if let Some(gx) = acc(adj, nodes, x) {
            for (i, (part, _)) in parts.iter().enumerate() {
                add_into(&mut gx[i * in_len..(i + 1) * in_len], part.as_ref().unwrap());
            }
        }
        if let Some(gk) = acc(adj, nodes, k) {
            for (_, part) in &parts {
                add_into(gk, part.as_ref().unwrap());
            }
        }
    }
    if let Some(b) = b {
        if let Some(gb) = acc(adj, nodes, b) {
            for i in 0..g.batch {
                for (co, d) in gb.iter_mut().enumerate() {
                    *d += grad[i * out_len + co * p..][..p].iter().copied().sum::<S>();
                }
            }
        }
    }
}

pub(super) fn conv1d_backward<S: Scalar>(
    x: usize,
    k: usize,
    b: Option<usize>,
    g: Conv1dGeom,
    nodes: &[Node<S>],
    grad: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let (xd, kd) = (val(nodes, x).data(), val(nodes, k).data());
    let tap = |o: usize, j: usize| {
        let i = (o + j) as isize - g.pad as isize;
        (i >= 0 && (i as usize) < g.t).then_some(i as usize)
    };
    if let Some(gx) = acc(adj, nodes, x) {
        for n in 0..g.batch {
            for co in 0..g.cout {
                let gy = &grad[(n * g.cout + co) * g.ot..][..g.ot];
                for ci in 0..g.cin {
                    let taps = &kd[(co * g.cin + ci) * g.k..][..g.k];
                    let dst = &mut gx[(n * g.cin + ci) * g.t..][..g.t];
                    for (j, &w) in taps.iter().enumerate() {
                        for (o, &d) in gy.iter().enumerate() {
                            if let Some(i) = tap(o, j) {
                                dst[i] += w * d;
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(gk) = acc(adj, nodes, k) {
        for n in 0..g.batch {
            for co in 0..g.cout {
                let gy = &grad[(n * g.cout + co) * g.ot..][..g.ot];
                for ci in 0..g.cin {
                    let src = &xd[(n * g.cin + ci) * g.t..][..g.t];
                    for j in 0..g.k {
                        let mut s = S::zero();
                        for (o, &d) in gy.iter().enumerate() {
                            if let Some(i) = tap(o, j) {
                                s += d * src[i];
                            }
                        }
                        gk[(co * g.cin + ci) * g.k + j] += s;
                    }
                }
            }
        }
    }
    if let Some(b) = b {
        if let Some(gb) = acc(adj, nodes, b) {
            for n in 0..g.batch {
                for (co, d) in gb.iter_mut().enumerate() {
                    *d += grad[(n * g.cout + co) * g.ot..][..g.ot].iter().copied().sum::<S>();
                }
            }
        }
    }
}

/// Direct nested-loop 2-D convolution, kept as an independent oracle.
pub fn conv2d_reference<S: Scalar>(
    x: &Tensor<S>,
    k: &Tensor<S>,
    b: Option<&Tensor<S>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<S>> {
    let g = conv2d_geom(x.shape(), k.shape(), stride, pad)?;
    check_bias(b, g.cout)?;
    let mut out = Tensor::zeros([g.batch, g.cout, g.oh, g.ow]);
    let o = out.data_mut();
    for n in 0..g.batch {
        for co in 0..g.cout {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let mut s = b.map_or(S::zero(), |b| b.data()[co]);
                    for ci in 0..g.cin {
                        for ki in 0..g.k {
                            for kj in 0..g.k {
                                let iy = (oy * stride + ki) as isize - pad as isize;
                                let ix = (ox * stride + kj) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy as usize >= g.h || ix as usize >= g.w {
                                    continue;
                                }
                                s += k.at(&[co, ci, ki, kj]) * x.at(&[n, ci, iy as usize, ix as usize]);
                            }
                        }
                    }
                    o[((n * g.cout + co) * g.oh + oy) * g.ow + ox] = s;
                }
            }
        }
    }
    Ok(out)
}

/// Direct 1-D convolution with unit stride, the oracle for [`Var::conv1d`].
pub fn conv1d_reference<S: Scalar>(
    x: &Tensor<S>,
    k: &Tensor<S>,
    b: Option<&Tensor<S>>,
    pad: usize,
) -> Result<Tensor<S>> {
    let (xs, ks) = (x.shape(), k.shape());
    if xs.len() != 3 || ks.len() != 3 || ks[1] != xs[1] {
        return dim_err(format!("conv1d input {xs:?} and kernel {ks:?} do not fit"));
    }
    let (batch, cin, t, cout, kk) = (xs[0], xs[1], xs[2], ks[0], ks[2]);
    check_bias(b, cout)?;
    let ot = out_extent(t, kk, 1, pad)?;
    let mut out = Tensor::zeros([batch, cout, ot]);
    for n in 0..batch {
        for co in 0..cout {
            for o in 0..ot {
                let mut s = b.map_or(S::zero(), |b| b.data()[co]);
                for ci in 0..cin {
                    for j in 0..kk {
                        let i = (o + j) as isize - pad as isize;
                        if i >= 0 && (i as usize) < t {
                            s += k.at(&[co, ci, j]) * x.at(&[n, ci, i as usize]);
                        }
                    }
                }
                out.data_mut()[(n * cout + co) * ot + o] = s;
            }
        }
    }
    Ok(out)
}
