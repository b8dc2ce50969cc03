//! Reparameterized symbol generation: Gumbel-Max hard samples on the forward
//! pass, Gumbel-Softmax relaxation as the differentiable surrogate. Both
//! consume the same noise realization.

use num_complex::Complex;
use rand::Rng as _;

use crate::constellation::{ComplexSequence, Constellation};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::scalar::Scalar;
use crate::tensor::Matrix;
use crate::transition::TransitionPmf;

/// Default relaxation temperature.
pub const DEFAULT_TEMPERATURE: f64 = 1.5;

/// Uniform draws are clamped to `(δ, 1-δ)` before the inverse CDF.
pub const UNIFORM_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GumbelNoise<S> {
    pub values: Matrix<S>,
    /// Seed the noise was drawn from, if it came from [`sample_gumbel`].
    pub seed: Option<u64>,
}

/// One standard Gumbel draw, `-ln(-ln u)`.
pub fn gumbel_draw<S: Scalar>(rng: &mut Rng) -> S {
    let u: f64 = rng.random::<f64>().clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
    S::lit(-(-u.ln()).ln())
}

/// Fills an `rows x categories` matrix with i.i.d. Gumbel(0, 1) draws from `rng`.
pub fn gumbel_matrix<S: Scalar>(rng: &mut Rng, rows: usize, categories: usize) -> Matrix<S> {
    let data = (0..rows * categories).map(|_| gumbel_draw(rng)).collect();
    Matrix::from_vec(rows, categories, data).expect("sized buffer")
}

/// Deterministic `rows x categories` Gumbel noise for `seed`.
pub fn sample_gumbel<S: Scalar>(rows: usize, categories: usize, seed: u64) -> GumbelNoise<S> {
    let mut r = rng::stream(seed, 0);
    GumbelNoise { values: gumbel_matrix(&mut r, rows, categories), seed: Some(seed) }
}

/// `argmax_m [τ_m + ln q_m]`, lowest index on ties.
pub fn gumbel_max_sample<S: Scalar>(q: &[S], tau: &[S]) -> usize {
    let mut best = 0;
    let mut best_v = S::neg_infinity();
    for (m, (&p, &t)) in q.iter().zip(tau).enumerate() {
        let v = p.ln() + t;
        if v > best_v {
            best = m;
            best_v = v;
        }
    }
    best
}

/// `v_m ∝ exp((ln q_m + τ_m) / ρ)`.
pub fn gumbel_softmax_relax<S: Scalar>(q: &[S], tau: &[S], temperature: S) -> Vec<S> {
    let scores: Vec<S> = q.iter().zip(tau).map(|(&p, &t)| (p.ln() + t) / temperature).collect();
    let max = scores.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Hard samples paired with their relaxations. Rows are group-major: row
/// `g * n + i` is group `g` (BPSK, or I then Q for QAM) at position `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSymbols<S> {
    pub hard: Vec<usize>,
    pub soft: Matrix<S>,
    pub temperature: S,
    pub groups: usize,
}

impl<S: Scalar> RelaxedSymbols<S> {
    pub fn positions(&self) -> usize {
        self.hard.len() / self.groups
    }

    /// Sampled constellation point index per position.
    pub fn symbols(&self, c: &Constellation<S>) -> Vec<usize> {
        let n = self.positions();
        (0..n)
            .map(|i| {
                let idx: Vec<usize> = (0..self.groups).map(|g| self.hard[g * n + i]).collect();
                c.symbol_index(&idx)
            })
            .collect()
    }
}

/// Result of [`st_modulate`].
#[derive(Debug, Clone)]
pub struct Modulated<S> {
    /// Forward symbols `c^T one-hot(hard)`.
    pub forward: ComplexSequence<S>,
    /// Relaxed surrogate `c^T v`.
    pub surrogate: ComplexSequence<S>,
    pub relaxed: RelaxedSymbols<S>,
}

/// Samples and relaxes every position of `pmf` with one shared noise
/// realization. `noise` has `groups * n` rows laid out like
/// [`RelaxedSymbols`].
pub fn st_modulate<S: Scalar>(
    pmf: &TransitionPmf<S>,
    noise: &GumbelNoise<S>,
    temperature: S,
    c: &Constellation<S>,
) -> Result<Modulated<S>> {
    let n = pmf.len();
    let g = pmf.groups().len();
    let k = pmf.categories();
    if pmf.scheme() != c.scheme() || k != c.categories() {
        return Err(Error::Shape("pmf does not match constellation".into()));
    }
    if noise.values.shape() != (g * n, k) {
        return Err(Error::Shape(format!(
            "noise {:?} for pmf needing ({}, {k})",
            noise.values.shape(),
            g * n
        )));
    }
    let levels = c.axis_levels();
    let mut hard = Vec::with_capacity(g * n);
    let mut soft = Matrix::zeros(g * n, k);
    let mut fwd = vec![[S::zero(); 2]; n];
    let mut sur = vec![[S::zero(); 2]; n];
    for gi in 0..g {
        for i in 0..n {
            let q = pmf.row(gi, i);
            let tau = noise.values.row(gi * n + i);
            let h = gumbel_max_sample(q, tau);
            let v = gumbel_softmax_relax(q, tau, temperature);
            fwd[i][gi] = levels[h];
            sur[i][gi] = v.iter().zip(&levels).map(|(&a, &b)| a * b).sum();
            soft.row_mut(gi * n + i).copy_from_slice(&v);
            hard.push(h);
        }
    }
    let to_seq = |v: Vec<[S; 2]>| ComplexSequence::new(v.into_iter().map(|[a, b]| Complex::new(a, b)).collect());
    Ok(Modulated {
        forward: to_seq(fwd)?,
        surrogate: to_seq(sur)?,
        relaxed: RelaxedSymbols { hard, soft, temperature, groups: g },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{make_bpsk, make_rect_qam, Scheme};
    use crate::transition::PROB_FLOOR;
    use rand::SeedableRng;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn noise_is_deterministic() {
        let a = sample_gumbel::<f64>(4, 3, 11);
        let b = sample_gumbel::<f64>(4, 3, 11);
        let c = sample_gumbel::<f64>(4, 3, 12);
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn noise_moments() {
        let g = sample_gumbel::<f64>(1000, 1000, 5);
        let (mean, var) = moments(g.values.as_slice());
        assert!((mean - 0.577_215_664_9).abs() < 0.01, "mean {mean}");
        assert!((var - std::f64::consts::PI.powi(2) / 6.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn one_hot_pmf_always_wins() {
        let mut r = Rng::seed_from_u64(3);
        for _ in 0..100 {
            let tau: Vec<f64> = (0..4).map(|_| gumbel_draw(&mut r)).collect();
            let mut q = vec![PROB_FLOOR; 4];
            q[2] = 1.0 - 3.0 * PROB_FLOOR;
            assert_eq!(gumbel_max_sample(&q, &tau), 2);
        }
    }

    fn frequencies(q: &[f64], draws: usize, seed: u64) -> Vec<f64> {
        let mut r = Rng::seed_from_u64(seed);
        let mut counts = vec![0usize; q.len()];
        let mut tau = vec![0.0; q.len()];
        for _ in 0..draws {
            tau.iter_mut().for_each(|t| *t = gumbel_draw(&mut r));
            counts[gumbel_max_sample(q, &tau)] += 1;
        }
        counts.into_iter().map(|c| c as f64 / draws as f64).collect()
    }

    #[test]
    fn gumbel_max_frequencies() {
        let f = frequencies(&[0.5, 0.5], 100_000, 1);
        assert!((f[0] - 0.5).abs() < 0.01 && (f[1] - 0.5).abs() < 0.01);
        let f = frequencies(&[0.75, 0.25], 100_000, 2);
        let tv = 0.5 * ((f[0] - 0.75).abs() + (f[1] - 0.25).abs());
        assert!(tv < 0.01, "tv {tv}");
    }

    #[test]
    fn relaxation_limits() {
        let mut r = Rng::seed_from_u64(9);
        let q = [0.1, 0.2, 0.3, 0.4];
        let tau: Vec<f64> = (0..4).map(|_| gumbel_draw(&mut r)).collect();
        let v = gumbel_softmax_relax(&q, &tau, 1e6);
        assert!(v.iter().all(|x| (x - 0.25).abs() < 1e-4));
        assert_eq!(gumbel_softmax_relax(&[0.5, 0.5], &[0.0, 0.0], 0.3), vec![0.5, 0.5]);
        assert_eq!(gumbel_softmax_relax(&[0.5, 0.5], &[0.0, 0.0], 7.0), vec![0.5, 0.5]);
        for _ in 0..100 {
            let raw: Vec<f64> = (0..5).map(|_| r.random::<f64>() + 0.01).collect();
            let s: f64 = raw.iter().sum();
            let q: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let tau: Vec<f64> = (0..5).map(|_| gumbel_draw(&mut r)).collect();
            let v = gumbel_softmax_relax(&q, &tau, 0.01);
            let h = gumbel_max_sample(&q, &tau);
            let arg = (0..5).max_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap()).unwrap();
            // near-ties can leave the max below 0.999; skip those draws
            let mut scores: Vec<f64> = q.iter().zip(&tau).map(|(p, t)| p.ln() + t).collect();
            scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert_eq!(arg, h);
            if scores[0] - scores[1] > 0.07 {
                assert!(v[h] > 0.999);
            }
        }
    }

    #[test]
    fn lower_temperature_is_closer_to_hard() {
        let mut r = Rng::seed_from_u64(21);
        let cases: Vec<(Vec<f64>, Vec<f64>)> = (0..200)
            .map(|_| {
                let raw: Vec<f64> = (0..4).map(|_| r.random::<f64>() + 0.05).collect();
                let s: f64 = raw.iter().sum();
                (raw.iter().map(|x| x / s).collect(), (0..4).map(|_| gumbel_draw(&mut r)).collect())
            })
            .collect();
        let mut last = f64::INFINITY;
        for rho in [2.0, 1.0, 0.5, 0.1] {
            let mean: f64 = cases
                .iter()
                .map(|(q, tau)| {
                    let v = gumbel_softmax_relax(q, tau, rho);
                    let h = gumbel_max_sample(q, tau);
                    v.iter().enumerate().map(|(m, x)| if m == h { (1.0 - x).abs() } else { x.abs() }).sum::<f64>()
                })
                .sum::<f64>()
                / cases.len() as f64;
            assert!(mean <= last, "rho {rho}: {mean} > {last}");
            last = mean;
        }
    }

    #[test]
    fn st_modulate_degenerate_pmfs() {
        let b = make_bpsk::<f64>();
        let pmf = TransitionPmf::bpsk(&[1.0; 5]).unwrap();
        let noise = sample_gumbel(5, 2, 4);
        let out = st_modulate(&pmf, &noise, 1.5, &b).unwrap();
        assert!(out.forward.values().iter().all(|z| z.re == 1.0 && z.im == 0.0));

        // floored one-hot rows: forward and surrogate agree
        let c = make_rect_qam::<f64>(16).unwrap();
        let mut logits = Matrix::zeros(3, 8);
        for i in 0..3 {
            logits[(i, i)] = 60.0;
            logits[(i, 4 + 3 - i)] = 60.0;
        }
        let pmf = crate::transition::pmf_from_logits(&logits, &c).unwrap();
        let out = st_modulate(&pmf, &sample_gumbel(6, 4, 8), 1.5, &c).unwrap();
        for (a, b) in out.forward.values().iter().zip(out.surrogate.values()) {
            assert!((a - b).norm() < 1e-6);
        }
        assert_eq!(out.relaxed.symbols(&c), vec![3, 6, 9]);
    }

    #[test]
    fn st_modulate_reproducible_and_checked() {
        let c = make_rect_qam::<f64>(4).unwrap();
        let pmf = TransitionPmf::from_groups(
            Scheme::RectQam,
            vec![Matrix::filled(6, 2, 0.5), Matrix::filled(6, 2, 0.5)],
        )
        .unwrap();
        let a = st_modulate(&pmf, &sample_gumbel(12, 2, 77), 1.5, &c).unwrap();
        let b = st_modulate(&pmf, &sample_gumbel(12, 2, 77), 1.5, &c).unwrap();
        assert_eq!(a.relaxed.hard, b.relaxed.hard);
        assert!(st_modulate(&pmf, &sample_gumbel(6, 2, 77), 1.5, &c).is_err());
    }
}
