//! Central finite-difference verification of tape gradients.

use crate::error::{Result, TensorError};
use crate::tape::{Fault, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub eps: f64,
    /// Check at most this many coordinates per input, evenly spaced.
    pub max_coords: Option<usize>,
    /// Applied to the tape used for the analytic gradient only.
    pub fault: Option<Fault>,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck { eps: 1e-5, max_coords: None, fault: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    /// Max over checked coordinates of `|ad - fd| / max(1, |ad|, |fd|)`.
    pub max_rel_err: f64,
    /// `(input, coordinate)` where the max occurred.
    pub worst: (usize, usize),
    pub checked: usize,
}

fn coords(n: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m < n => (0..m).map(|i| i * n / m).collect(),
        _ => (0..n).collect(),
    }
}

impl GradCheck {
    /// Compares the tape gradient of scalar `f` at `points` with central
    /// differences, input by input.
    pub fn run<F>(&self, points: &[Tensor<f64>], f: F) -> Result<GradReport>
    where
        F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
    {
        let tape = Tape::new();
        tape.inject_fault(self.fault);
        let vars: Vec<_> = points.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&tape, &vars)?;
        if out.numel() != 1 {
            return Err(TensorError::Usage("gradcheck needs a scalar function".into()));
        }
        tape.backward(out)?;
        let analytic: Vec<Tensor<f64>> = vars
            .iter()
            .zip(points)
            .map(|(v, p)| v.grad().unwrap_or_else(|| Tensor::zeros(p.shape().to_vec())))
            .collect();

        let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
            let tape = Tape::new();
            let vars: Vec<_> = inputs.iter().map(|p| tape.constant(p.clone())).collect();
            Ok(f(&tape, &vars)?.value().item())
        };

        let mut report = GradReport { max_rel_err: 0.0, worst: (0, 0), checked: 0 };
        let mut work: Vec<Tensor<f64>> = points.to_vec();
        for (i, grad) in analytic.iter().enumerate() {
            for c in coords(points[i].numel(), self.max_coords) {
                let x0 = points[i].data()[c];
                work[i].data_mut()[c] = x0 + self.eps;
                let up = eval(&work)?;
                work[i].data_mut()[c] = x0 - self.eps;
                let down = eval(&work)?;
                work[i].data_mut()[c] = x0;
                let fd = (up - down) / (2.0 * self.eps);
                let ad = grad.data()[c];
                let err = (ad - fd).abs() / 1f64.max(ad.abs()).max(fd.abs());
                if !(err <= report.max_rel_err) {
                    report.max_rel_err = err;
                    report.worst = (i, c);
                }
                report.checked += 1;
            }
        }
        Ok(report)
    }
}

/// [`GradCheck::run`] with default settings.
pub fn gradcheck<F>(points: &[Tensor<f64>], f: F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    Ok(GradCheck::default().run(points, f)?.max_rel_err)
}
