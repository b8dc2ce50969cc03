//! Evaluation metrics and probabilistic-shaping diagnostics.

use serde::{Deserialize, Serialize};

use crate::constellation::{Constellation, Scheme};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Floor applied to the reference PMF inside [`kl_divergence`].
pub const KL_FLOOR: f64 = 1e-12;
/// Search interval and tolerance of the Maxwell-Boltzmann fit.
pub const MB_NU_MAX: f64 = 50.0;
pub const MB_NU_TOL: f64 = 1e-6;

/// Relative usage frequency of each of the `order` symbols.
pub fn empirical_constellation_pmf(symbols: &[usize], order: usize) -> Result<Vec<f64>> {
    if symbols.is_empty() {
        return Err(Error::EmptyStream);
    }
    let mut counts = vec![0u64; order];
    for &s in symbols {
        *counts.get_mut(s).ok_or(Error::IndexOutOfRange { index: s, len: order })? += 1;
    }
    let n = symbols.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// `Σ p ln(p/q)` with `0 ln 0 = 0` and `q` floored at [`KL_FLOOR`].
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(KL_FLOOR)).ln())
        .sum::<f64>()
        .max(0.0)
}

/// PMF `∝ exp(-ν |c_m|²)` over the constellation points.
pub fn maxwell_boltzmann_pmf<S: Scalar>(c: &Constellation<S>, nu: f64) -> Vec<f64> {
    let energies: Vec<f64> = c.points().iter().map(|p| p.norm_sqr().as_f64()).collect();
    let min_e = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-nu * (e - min_e)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MbFit {
    pub nu: f64,
    pub pmf: Vec<f64>,
    pub kl: f64,
}

/// Golden-section search for the `ν ∈ [0, 50]` minimizing
/// `KL(empirical ‖ MB(ν))`. The objective is convex in `ν`.
pub fn maxwell_boltzmann_fit<S: Scalar>(c: &Constellation<S>, empirical: &[f64]) -> Result<MbFit> {
    if c.scheme() != Scheme::RectQam {
        return Err(Error::NotQam);
    }
    if empirical.len() != c.order() {
        return Err(Error::Shape(format!("{} probabilities for {} points", empirical.len(), c.order())));
    }
    let objective = |nu: f64| kl_divergence(empirical, &maxwell_boltzmann_pmf(c, nu));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, MB_NU_MAX);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    while b - a > MB_NU_TOL {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = objective(x2);
        }
    }
    let mut nu = 0.5 * (a + b);
    // the bracket never contains its endpoints exactly; compare against ν = 0
    if objective(0.0) <= objective(nu) {
        nu = 0.0;
    }
    let pmf = maxwell_boltzmann_pmf(c, nu);
    let kl = kl_divergence(empirical, &pmf);
    Ok(MbFit { nu, pmf, kl })
}

/// Symbol-usage summary for one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapingReport {
    pub snr_db: f64,
    pub pmf: Vec<f64>,
    pub kl_uniform: f64,
    pub nu: f64,
    pub kl_mb: f64,
}

impl ShapingReport {
    pub fn from_symbols<S: Scalar>(c: &Constellation<S>, symbols: &[usize], snr_db: f64) -> Result<Self> {
        let pmf = empirical_constellation_pmf(symbols, c.order())?;
        Self::from_pmf(c, pmf, snr_db)
    }

    pub fn from_pmf<S: Scalar>(c: &Constellation<S>, pmf: Vec<f64>, snr_db: f64) -> Result<Self> {
        let uniform = vec![1.0 / c.order() as f64; c.order()];
        let kl_uniform = kl_divergence(&pmf, &uniform);
        let fit = maxwell_boltzmann_fit(c, &pmf)?;
        Ok(Self { snr_db, pmf, kl_uniform, nu: fit.nu, kl_mb: fit.kl })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy<S: Scalar>(posteriors: &crate::tensor::Matrix<S>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(r, &l)| argmax(posteriors.row(r)) == l)
        .count();
    hits as f64 / labels.len() as f64
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
