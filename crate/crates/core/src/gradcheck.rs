//! Central finite-difference checks of tape gradients.
//!
//! The finite-difference side only evaluates forward values, so it stays
//! independent of the reverse sweep it checks.

use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::Result;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-4;

/// Magnitude below which gradient components are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone)]
pub struct Coordinate {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub coords: Vec<Coordinate>,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.coords.iter().map(|c| c.rel_err).fold(0.0, f64::max)
    }

    /// Fraction of coordinates with relative error below `tol`.
    pub fn pass_fraction(&self, tol: f64) -> f64 {
        if self.coords.is_empty() {
            return 1.0;
        }
        self.coords.iter().filter(|c| c.rel_err < tol).count() as f64 / self.coords.len() as f64
    }

    pub fn worst(&self) -> Option<&Coordinate> {
        self.coords.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// Compares reverse-mode gradients of the scalar built by `loss` against
/// central differences over every parameter coordinate of `store`.
///
/// `loss` must be a deterministic function of the store (freeze all noise).
pub fn check_store<F>(store: &ParamStore<f64>, step: f64, loss: F) -> Result<GradReport>
where
    F: Fn(&ParamStore<f64>) -> Result<(Tape<f64>, Var)>,
{
    let mut work = store.clone();
    work.zero_grads();
    let (tape, out) = loss(&work)?;
    tape.backward(out, 1.0, &mut work)?;
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let (t, v) = loss(s)?;
        Ok(t.value(v)[(0, 0)])
    };

    let names: Vec<String> = work.names().map(str::to_string).collect();
    let mut coords = Vec::new();
    let mut probe = store.clone();
    for name in names {
        let analytic = work.grad(&name)?.clone();
        for index in 0..analytic.len() {
            let orig = probe.value(&name)?.as_slice()[index];
            probe.value_mut(&name)?.as_mut_slice()[index] = orig + step;
            let up = eval(&probe)?;
            probe.value_mut(&name)?.as_mut_slice()[index] = orig - step;
            let down = eval(&probe)?;
            probe.value_mut(&name)?.as_mut_slice()[index] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.as_slice()[index];
            coords.push(Coordinate { param: name.clone(), index, analytic: a, numeric, rel_err: relative_error(a, numeric) });
        }
    }
    Ok(GradReport { coords })
}
