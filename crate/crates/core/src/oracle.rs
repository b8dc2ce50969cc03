//! Brute-force ground truth for tiny systems: exact Bayes posteriors, Monte
//! Carlo mutual information, the variational bound, and score-function
//! gradients by full enumeration.

use num_complex::Complex;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rayon::prelude::*;

use crate::autodiff::{ParamStore, Tape};
use crate::channel::complex_noise;
use crate::constellation::{Constellation, Scheme};
use crate::error::{Error, Result};
use crate::gumbel::gumbel_matrix;
use crate::rng;
use crate::tensor::Matrix;
use crate::transition::TransitionPmf;

pub const MAX_SUPPORT: usize = 16;
pub const MAX_POSITIONS: usize = 3;
pub const MAX_SEQUENCES: usize = 4096;
const LOG_FLOOR: f64 = 1e-300;

/// One atom of the finite source: vector `x`, label `s`, prior mass.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePoint {
    pub x: Vec<f64>,
    pub label: usize,
    pub prior: f64,
}

/// Fully enumerable miniature pipeline with an explicit transition PMF per
/// source atom.
#[derive(Debug, Clone)]
pub struct ToySystem {
    pub support: Vec<SourcePoint>,
    pub constellation: Constellation<f64>,
    pub encoder: Vec<TransitionPmf<f64>>,
    /// Complex noise variance (half per real component).
    pub sigma2: f64,
    pub lambda: f64,
    pub classes: usize,
    sequences: Vec<Vec<usize>>,
    /// Per atom: `(sequence index, ln p_en)` over sequences with `p_en > 0`.
    table: Vec<Vec<(usize, f64)>>,
}

/// Posterior over labels and over source atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub label: Vec<f64>,
    pub source: Vec<f64>,
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub draws: usize,
}

impl Estimate {
    pub fn from_samples(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { mean, se: (var / n).sqrt(), draws: v.len() }
    }

    /// `|a - b|` in units of the combined standard error of independent estimates.
    pub fn z_distance(&self, other: &Estimate) -> f64 {
        let se = (self.se.powi(2) + other.se.powi(2)).sqrt();
        (self.mean - other.mean).abs() / se.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub label: Estimate,
    pub source: Estimate,
    /// `I(S;Ẑ) + λ I(X;Ẑ)` from the same draws.
    pub objective: Estimate,
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>()
}

impl ToySystem {
    pub fn new(
        support: Vec<SourcePoint>,
        constellation: Constellation<f64>,
        encoder: Vec<TransitionPmf<f64>>,
        sigma2: f64,
        lambda: f64,
    ) -> Result<Self> {
        let bad = |reason: String| Err(Error::Config { field: "toy_system".into(), reason });
        if support.is_empty() || support.len() > MAX_SUPPORT {
            return bad(format!("support size {} outside 1..={MAX_SUPPORT}", support.len()));
        }
        if encoder.len() != support.len() {
            return bad("one transition PMF per source atom required".into());
        }
        let n = encoder[0].len();
        if n == 0 || n > MAX_POSITIONS || encoder.iter().any(|e| e.len() != n) {
            return bad(format!("positions must be equal and within 1..={MAX_POSITIONS}"));
        }
        let m = constellation.order();
        let total = m.checked_pow(n as u32).filter(|&t| t <= MAX_SEQUENCES);
        let Some(total) = total else {
            return bad(format!("{m}^{n} sequences exceed {MAX_SEQUENCES}"));
        };
        if (support.iter().map(|p| p.prior).sum::<f64>() - 1.0).abs() > 1e-9 || support.iter().any(|p| p.prior < 0.0) {
            return bad("priors must be non-negative and sum to 1".into());
        }
        if !(sigma2 > 0.0) {
            return bad("noise variance must be positive".into());
        }
        let classes = support.iter().map(|p| p.label).max().unwrap_or(0) + 1;
        let sequences: Vec<Vec<usize>> = (0..total)
            .map(|mut t| {
                let mut z = vec![0; n];
                for slot in z.iter_mut().rev() {
                    *slot = t % m;
                    t /= m;
                }
                z
            })
            .collect();
        let mut table = Vec::with_capacity(support.len());
        for e in &encoder {
            if e.scheme() != constellation.scheme() || e.order() != m {
                return bad("transition PMF does not match the constellation".into());
            }
            let mut row = Vec::new();
            for (i, z) in sequences.iter().enumerate() {
                let p = e.sequence_probability(z)?;
                if p > 0.0 {
                    row.push((i, p.ln()));
                }
            }
            table.push(row);
        }
        Ok(Self { support, constellation, encoder, sigma2, lambda, classes, sequences, table })
    }

    /// Random system: atoms with random priors and labels, random per-atom
    /// PMFs of the given sharpness (logit scale).
    pub fn random(atoms: usize, classes: usize, scheme: Scheme, order: usize, positions: usize, sigma2: f64, lambda: f64, sharpness: f64, seed: u64) -> Result<Self> {
        let c = Constellation::new(scheme, order)?;
        let mut r = rng::stream(seed, 0);
        let raw: Vec<f64> = (0..atoms).map(|_| r.random_range(0.2..1.0)).collect();
        let z: f64 = raw.iter().sum();
        let support = (0..atoms)
            .map(|j| SourcePoint { x: vec![j as f64 / atoms as f64], label: j % classes, prior: raw[j] / z })
            .collect();
        let width = c.groups() * c.categories();
        let encoder = (0..atoms)
            .map(|_| {
                let logits = Matrix::from_vec(positions, width, (0..positions * width).map(|_| sharpness * r.random_range(-1.0..1.0)).collect())?;
                crate::transition::pmf_from_logits(&logits, &c)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(support, c, encoder, sigma2, lambda)
    }

    pub fn positions(&self) -> usize {
        self.encoder[0].len()
    }

    pub fn label_prior(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.classes];
        for a in &self.support {
            p[a.label] += a.prior;
        }
        p
    }

    /// `H(S) + λ H(X)`.
    pub fn bound_constant(&self) -> f64 {
        let px: Vec<f64> = self.support.iter().map(|a| a.prior).collect();
        entropy(&self.label_prior()) + self.lambda * entropy(&px)
    }

    fn sequence_points(&self, idx: usize) -> Vec<Complex<f64>> {
        self.sequences[idx].iter().map(|&m| self.constellation.point(m)).collect()
    }

    /// `p(s|ẑ)` and `p(x|ẑ)` by Bayes over all atoms and sequences.
    pub fn exact_posterior(&self, zhat: &[Complex<f64>]) -> Posterior {
        let ll: Vec<f64> = (0..self.sequences.len())
            .map(|i| -self.sequence_points(i).iter().zip(zhat).map(|(z, y)| (y - z).norm_sqr()).sum::<f64>() / self.sigma2)
            .collect();
        let log_joint: Vec<f64> = self
            .support
            .iter()
            .zip(&self.table)
            .map(|(a, row)| {
                if a.prior == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    a.prior.ln() + log_sum_exp(row.iter().map(|&(i, lp)| lp + ll[i]))
                }
            })
            .collect();
        let norm = log_sum_exp(log_joint.iter().copied());
        let source: Vec<f64> = log_joint.iter().map(|l| (l - norm).exp()).collect();
        let mut label = vec![0.0; self.classes];
        for (a, p) in self.support.iter().zip(&source) {
            label[a.label] += p;
        }
        Posterior { label, source }
    }

    /// Draws `(atom, ẑ)` for draw `d` of stream `seed`.
    pub fn sample(&self, seed: u64, d: u64) -> (usize, Vec<Complex<f64>>) {
        let mut r = rng::stream(seed, d);
        let atoms = WeightedIndex::new(self.support.iter().map(|a| a.prior)).expect("valid priors");
        let j = atoms.sample(&mut r);
        let row = &self.table[j];
        let seqs = WeightedIndex::new(row.iter().map(|&(_, lp)| lp.exp())).expect("non-empty encoder support");
        let z = self.sequence_points(row[seqs.sample(&mut r)].0);
        let std = (self.sigma2 / 2.0).sqrt();
        (j, z.into_iter().map(|v| v + complex_noise::<f64>(&mut r, std)).collect())
    }

    /// Monte Carlo `I(S;Ẑ)`, `I(X;Ẑ)` and the weighted objective using
    /// exact inner posteriors.
    pub fn mc_mutual_information(&self, draws: usize, seed: u64) -> MiEstimate {
        let ps = self.label_prior();
        let terms: Vec<(f64, f64)> = (0..draws as u64)
            .into_par_iter()
            .map(|d| {
                let (j, zhat) = self.sample(seed, d);
                let post = self.exact_posterior(&zhat);
                let a = &self.support[j];
                let is = post.label[a.label].max(LOG_FLOOR).ln() - ps[a.label].ln();
                let ix = post.source[j].max(LOG_FLOOR).ln() - a.prior.ln();
                (is, ix)
            })
            .collect();
        let is: Vec<f64> = terms.iter().map(|t| t.0).collect();
        let ix: Vec<f64> = terms.iter().map(|t| t.1).collect();
        let obj: Vec<f64> = terms.iter().map(|t| t.0 + self.lambda * t.1).collect();
        MiEstimate { label: Estimate::from_samples(&is), source: Estimate::from_samples(&ix), objective: Estimate::from_samples(&obj) }
    }

    fn vilb_terms<D>(&self, decoder: &D, draws: usize, seed: u64) -> Vec<(f64, f64)>
    where
        D: Fn(&[Complex<f64>]) -> Posterior + Sync,
    {
        let k = self.bound_constant();
        (0..draws as u64)
            .into_par_iter()
            .map(|d| {
                let (j, zhat) = self.sample(seed, d);
                let a = &self.support[j];
                let term = |q: &Posterior| q.label[a.label].max(LOG_FLOOR).ln() + self.lambda * q.source[j].max(LOG_FLOOR).ln() + k;
                (term(&decoder(&zhat)), term(&self.exact_posterior(&zhat)))
            })
            .collect()
    }

    /// Monte Carlo `E[ln q(s|ẑ)] + λ E[ln q(x|ẑ)] + H(S) + λ H(X)` for an
    /// arbitrary decoder.
    pub fn vilb_exact<D>(&self, decoder: &D, draws: usize, seed: u64) -> Estimate
    where
        D: Fn(&[Complex<f64>]) -> Posterior + Sync,
    {
        let t = self.vilb_terms(decoder, draws, seed);
        Estimate::from_samples(&t.iter().map(|v| v.0).collect::<Vec<_>>())
    }

    /// Paired estimate of `VILB(exact posteriors) − VILB(decoder)` on common
    /// draws; non-negative in expectation.
    pub fn vilb_gap<D>(&self, decoder: &D, draws: usize, seed: u64) -> Estimate
    where
        D: Fn(&[Complex<f64>]) -> Posterior + Sync,
    {
        let t = self.vilb_terms(decoder, draws, seed);
        Estimate::from_samples(&t.iter().map(|v| v.1 - v.0).collect::<Vec<_>>())
    }
}

/// `I(X;Y)` in nats for equiprobable ±1 inputs in real Gaussian noise of
/// variance `s2`, by composite Simpson integration of the LLR form.
pub fn binary_awgn_mi(s2: f64) -> f64 {
    let s = s2.sqrt();
    let (lo, hi) = (1.0 - 14.0 * s, 1.0 + 14.0 * s);
    let steps = 20_000;
    let h = (hi - lo) / steps as f64;
    let f = |y: f64| {
        let pdf = (-(y - 1.0).powi(2) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt();
        let t = -2.0 * y / s2;
        // ln(1 + e^t) without overflow
        let softplus = if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
        pdf * softplus
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..steps {
        acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    2f64.ln() - acc * h / 3.0
}

/// Independent per-position categorical distributions `softmax(θ_i)` over
/// `M` symbols; the object of the score-function oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalModel {
    pub logits: Matrix<f64>,
}

impl CategoricalModel {
    pub fn probs(&self) -> Matrix<f64> {
        let mut p = self.logits.clone();
        for r in 0..p.rows() {
            let row = p.row_mut(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|v| *v = (*v - m).exp());
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        p
    }

    fn sequences(&self) -> Vec<Vec<usize>> {
        let (n, m) = self.logits.shape();
        (0..m.pow(n as u32))
            .map(|mut t| {
                let mut z = vec![0; n];
                for slot in z.iter_mut().rev() {
                    *slot = t % m;
                    t /= m;
                }
                z
            })
            .collect()
    }

    fn seq_prob(p: &Matrix<f64>, z: &[usize]) -> f64 {
        z.iter().enumerate().map(|(i, &m)| p[(i, m)]).product()
    }

    /// `Σ_z p(z) h(z)` over all `M^n` sequences.
    pub fn expected_loss_exact(&self, h: impl Fn(&[usize]) -> f64) -> f64 {
        let p = self.probs();
        self.sequences().iter().map(|z| Self::seq_prob(&p, z) * h(z)).sum()
    }

    /// `Σ_z p(z) h(z) ∇_θ ln p(z)` with `∂ ln p / ∂θ_{i,m} = 1[z_i = m] − p_i(m)`.
    pub fn score_function_grad_exact(&self, h: impl Fn(&[usize]) -> f64) -> Matrix<f64> {
        let p = self.probs();
        let mut g = Matrix::zeros(p.rows(), p.cols());
        for z in self.sequences() {
            let w = Self::seq_prob(&p, &z) * h(&z);
            accumulate_score(&mut g, &p, &z, w);
        }
        g
    }

    /// Monte Carlo score-function estimate and its per-coordinate standard error.
    pub fn score_function_grad_mc(&self, h: impl Fn(&[usize]) -> f64 + Sync, draws: usize, seed: u64) -> (Matrix<f64>, Matrix<f64>) {
        let p = self.probs();
        let (n, m) = p.shape();
        let samples: Vec<Matrix<f64>> = (0..draws as u64)
            .into_par_iter()
            .map(|d| {
                let mut r = rng::stream(seed, d);
                let z: Vec<usize> = (0..n).map(|i| WeightedIndex::new(p.row(i)).expect("valid pmf").sample(&mut r)).collect();
                let mut g = Matrix::zeros(n, m);
                accumulate_score(&mut g, &p, &z, h(&z));
                g
            })
            .collect();
        let mut mean = Matrix::zeros(n, m);
        let mut se = Matrix::zeros(n, m);
        for k in 0..n * m {
            let v: Vec<f64> = samples.iter().map(|g| g.as_slice()[k]).collect();
            let e = Estimate::from_samples(&v);
            mean.as_mut_slice()[k] = e.mean;
            se.as_mut_slice()[k] = e.se;
        }
        (mean, se)
    }

    /// Monte Carlo Gumbel-Softmax pathwise gradient of `f(Σ_m v_{i,m} a_m)`
    /// where `f(u) = Σ_i (u_i − target_i)²` and `a` are real amplitudes.
    pub fn pathwise_grad(&self, amplitudes: &[f64], target: &[f64], temperature: f64, draws: usize, seed: u64) -> Result<Matrix<f64>> {
        let (n, m) = self.logits.shape();
        let mut store = ParamStore::new();
        store.insert("theta", Matrix::from_vec(1, n * m, self.logits.as_slice().to_vec())?);
        let gumbel: Matrix<f64> = gumbel_matrix(&mut rng::stream(seed, 0), draws, n * m);
        let mut tape = Tape::new();
        let theta = tape.param(&store, "theta")?;
        let ones = tape.constant(Matrix::filled(draws, 1, 1.0));
        let logits = tape.matmul(ones, theta)?;
        let logp = tape.log_softmax_groups(logits, m)?;
        let perturbed = tape.add_const(logp, &gumbel)?;
        let scaled = tape.scale(perturbed, 1.0 / temperature);
        let relaxed = tape.softmax_groups(scaled, m)?;
        let u = tape.group_dot(relaxed, amplitudes, n, 1)?;
        let t = Matrix::from_vec(draws, n, (0..draws).flat_map(|_| target.iter().copied()).collect())?;
        let diff = tape.add_const(u, &t.map(|v| -v))?;
        let sq = tape.mul(diff, diff)?;
        let total = tape.sum_all(sq);
        let mean = tape.scale(total, 1.0 / draws as f64);
        tape.backward(mean, 1.0, &mut store)?;
        Matrix::from_vec(n, m, store.grad("theta")?.as_slice().to_vec())
    }
}

fn accumulate_score(g: &mut Matrix<f64>, p: &Matrix<f64>, z: &[usize], w: f64) {
    for (i, &zi) in z.iter().enumerate() {
        for m in 0..p.cols() {
            let ind = if m == zi { 1.0 } else { 0.0 };
            g[(i, m)] += w * (ind - p[(i, m)]);
        }
    }
}

/// Fraction of coordinates where the two gradients share a sign.
pub fn sign_agreement(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    let hits = a.as_slice().iter().zip(b.as_slice()).filter(|(x, y)| x.signum() == y.signum()).count();
    hits as f64 / a.len() as f64
}

/// Standard perturbations of a posterior used to probe the bound.
pub fn perturbed_decoders() -> Vec<(&'static str, fn(&Posterior) -> Posterior)> {
    fn map(p: &Posterior, f: impl Fn(&[f64]) -> Vec<f64>) -> Posterior {
        Posterior { label: f(&p.label), source: f(&p.source) }
    }
    fn normalize(v: Vec<f64>) -> Vec<f64> {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }
    vec![
        ("uniform_mix", |p| map(p, |v| v.iter().map(|x| 0.5 * x + 0.5 / v.len() as f64).collect())),
        ("flattened", |p| map(p, |v| normalize(v.iter().map(|x| x.sqrt()).collect()))),
        ("sharpened", |p| map(p, |v| normalize(v.iter().map(|x| x * x + 1e-3).collect()))),
        ("rotated", |p| map(p, |v| {
            let n = v.len();
            (0..n).map(|i| 0.7 * v[i] + 0.3 * v[(i + 1) % n]).collect()
        })),
        ("uniform", |p| map(p, |v| vec![1.0 / v.len() as f64; v.len()])),
    ]
}
