//! Property suites behind the `gradcheck`, `oraclecheck`, `sample-dist` and
//! `shaping` subcommands. Every check carries its measured value and bound.

use std::fmt;
use std::path::Path;

use num_complex::Complex;
use rand::Rng as _;

use crate::constellation::Scheme;
use crate::datagen::gen_gaussian_mixture;
use crate::error::Result;
use crate::experiment::{run_experiment, ExperimentConfig, MethodKind};
use crate::gradcheck::{check_store, FD_STEP};
use crate::gumbel::{gumbel_draw, gumbel_max_sample};
use crate::metrics::ShapingReport;
use crate::oracle::{binary_awgn_mi, perturbed_decoders, sign_agreement, CategoricalModel, ToySystem};
use crate::pipeline::{JcmModel, Method, ModelConfig, PowerNorm, Relaxation};
use crate::rng;
use crate::tensor::Matrix;

pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_PASS_FRACTION: f64 = 0.99;
pub const TV_TOL: f64 = 0.01;
pub const SCORE_TOL: f64 = 1e-6;
pub const SIGMA_BOUND: f64 = 3.0;
pub const SIGN_AGREEMENT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Below,
    Above,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: Bound,
    pub tolerance: f64,
}

impl Check {
    pub fn below(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self { name: name.into(), measured, bound: Bound::Below, tolerance }
    }

    pub fn above(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self { name: name.into(), measured, bound: Bound::Above, tolerance }
    }

    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::Below => self.measured < self.tolerance,
            Bound::Above => self.measured > self.tolerance,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.bound {
            Bound::Below => "<",
            Bound::Above => ">",
        };
        let tag = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {:.6e} {op} {:.6e}", self.name, self.measured, self.tolerance)
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(Check::passed)
}

/// Frozen-noise finite-difference checks of the whole chain for small nets.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<Check>> {
    let data = gen_gaussian_mixture(6, 3, 2, 0.05, rng::derive(seed, 1))?;
    let (x, labels) = data.all::<f64>();
    let cases = [
        ("jcm bpsk", Method::Jcm, Scheme::Bpsk, 2, PowerNorm::PerSequence),
        ("jcm 4qam", Method::Jcm, Scheme::RectQam, 4, PowerNorm::PerSequence),
        ("jcm 16qam", Method::Jcm, Scheme::RectQam, 16, PowerNorm::PerSequence),
        ("jcm 16qam per-batch", Method::Jcm, Scheme::RectQam, 16, PowerNorm::PerBatch),
        ("deepjscc_q 16qam", Method::HardSoft { temperature: 1.0 }, Scheme::RectQam, 16, PowerNorm::PerSequence),
        ("analog", Method::Analog, Scheme::RectQam, 4, PowerNorm::PerSequence),
    ];
    let mut checks = Vec::new();
    for (name, method, scheme, order, norm) in cases {
        let mut cfg = ModelConfig::jcm(scheme, order, 4, 6, 3);
        cfg.method = method;
        cfg.encoder_hidden = vec![8];
        cfg.semantic_hidden = vec![6];
        cfg.source_hidden = vec![6];
        cfg.lambda = 3.0;
        cfg.snr_db = 6.0;
        cfg.power_norm = norm;
        let model = JcmModel::<f64>::new(&cfg, rng::derive(seed, 2))?;
        let streams: Vec<u64> = (0..x.rows() as u64).collect();
        let noise = model.sample_noise(rng::derive(seed, 3), &streams);
        let report = check_store(&model.store, FD_STEP, |s| {
            model.loss_on_tape(s, &x, &labels, &noise, Relaxation::Soft).map(|(t, l, _)| (t, l))
        })?;
        checks.push(Check::above(
            format!("{name}: fraction of {} coordinates within {GRAD_TOL:e}", report.coords.len()),
            report.pass_fraction(GRAD_TOL),
            GRAD_PASS_FRACTION,
        ));
        checks.push(Check::below(format!("{name}: max relative error"), report.max_rel_err(), GRAD_TOL));
    }
    Ok(checks)
}

/// Total-variation distance between `draws` Gumbel-Max samples and each of
/// `pmfs` random PMFs over `order` categories.
pub fn sample_dist_suite(order: usize, draws: usize, pmfs: usize, seed: u64) -> Vec<Check> {
    (0..pmfs as u64)
        .map(|t| {
            let mut r = rng::stream(seed, t);
            let raw: Vec<f64> = (0..order).map(|_| -r.random::<f64>().max(1e-300).ln()).collect();
            let total: f64 = raw.iter().sum();
            let q: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let mut counts = vec![0usize; order];
            let mut tau = vec![0.0f64; order];
            for _ in 0..draws {
                tau.iter_mut().for_each(|v| *v = gumbel_draw(&mut r));
                counts[gumbel_max_sample(&q, &tau)] += 1;
            }
            let tv = 0.5 * counts.iter().zip(&q).map(|(&c, p)| (c as f64 / draws as f64 - p).abs()).sum::<f64>();
            Check::below(format!("pmf {t}: total variation over {draws} draws (M={order})"), tv, TV_TOL)
        })
        .collect()
}

/// Score-function gradient of a fixed loss against finite differences of the
/// enumerated expectation (n = 2, M = 2); returns the worst relative error.
pub fn score_function_fd_error(seed: u64) -> f64 {
    let mut r = rng::stream(seed, 0);
    let logits: Vec<f64> = (0..4).map(|_| r.random_range(-1.5..1.5)).collect();
    let costs: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
    let model = CategoricalModel { logits: Matrix::from_vec(2, 2, logits).expect("2x2") };
    let h = |z: &[usize]| costs[2 * z[0] + z[1]];
    let g = model.score_function_grad_exact(h);
    let step = 1e-5;
    (0..4)
        .map(|k| {
            let mut plus = model.clone();
            plus.logits.as_mut_slice()[k] += step;
            let mut minus = model.clone();
            minus.logits.as_mut_slice()[k] -= step;
            let fd = (plus.expected_loss_exact(h) - minus.expected_loss_exact(h)) / (2.0 * step);
            crate::gradcheck::relative_error(g.as_slice()[k], fd)
        })
        .fold(0.0, f64::max)
}

/// The three enumerable systems used for bound verification.
pub fn oracle_systems(seed: u64) -> Result<Vec<(&'static str, ToySystem)>> {
    Ok(vec![
        ("bpsk n=2, 4 atoms", ToySystem::random(4, 2, Scheme::Bpsk, 2, 2, 1.0, 1.0, 2.0, rng::derive(seed, 1))?),
        ("4qam n=1, 6 atoms", ToySystem::random(6, 3, Scheme::RectQam, 4, 1, 0.5, 2.0, 2.5, rng::derive(seed, 2))?),
        ("4qam n=2, 8 atoms", ToySystem::random(8, 4, Scheme::RectQam, 4, 2, 0.8, 0.5, 2.0, rng::derive(seed, 3))?),
    ])
}

/// Bound equality with exact posteriors, strict gaps for perturbed decoders,
/// score-function exactness and the pathwise sign screen.
pub fn oracle_suite(seed: u64, draws: usize) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (name, sys) in oracle_systems(seed)? {
        let vilb = sys.vilb_exact(&|z: &[Complex<f64>]| sys.exact_posterior(z), draws, rng::derive(seed, 10));
        let mi = sys.mc_mutual_information(draws, rng::derive(seed, 11));
        checks.push(Check::below(format!("{name}: |VILB(exact) - MI-OBJ| in combined SEs"), vilb.z_distance(&mi.objective), SIGMA_BOUND));
        for (pname, f) in perturbed_decoders() {
            let gap = sys.vilb_gap(&|z: &[Complex<f64>]| f(&sys.exact_posterior(z)), draws, rng::derive(seed, 12));
            checks.push(Check::above(format!("{name}: {pname} decoder gap below exact VILB in SEs"), gap.mean / gap.se.max(f64::MIN_POSITIVE), SIGMA_BOUND));
        }
    }

    checks.push(Check::below("score-function exact vs finite differences (relative)", score_function_fd_error(seed), SCORE_TOL));
    let model = CategoricalModel { logits: Matrix::from_rows(&[vec![0.4, -0.2], vec![-0.9, 0.3]])? };
    let zero = model.score_function_grad_exact(|_| 2.5);
    checks.push(Check::below("score-function gradient of a constant loss", zero.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())), 1e-10));

    let h = |z: &[usize]| (z[0] as f64 - 0.3).powi(2) + 0.5 * z[1] as f64;
    let exact = model.score_function_grad_exact(h);
    let (mc, se) = model.score_function_grad_mc(h, 100_000, rng::derive(seed, 13));
    let worst = (0..exact.len())
        .map(|k| (mc.as_slice()[k] - exact.as_slice()[k]).abs() / se.as_slice()[k].max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    checks.push(Check::below("score-function MC (1e5 draws) vs exact in SEs", worst, SIGMA_BOUND));

    let mut r = rng::stream(seed, 14);
    let (mut hits, mut total) = (0.0, 0.0);
    let amps = [1.0, -1.0];
    for t in 0..20 {
        let logits: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..2).map(|_| r.random_range(-1.0..1.0)).collect();
        let m = CategoricalModel { logits: Matrix::from_vec(2, 2, logits)? };
        let h = |z: &[usize]| z.iter().zip(&target).map(|(&s, t)| (amps[s] - t).powi(2)).sum::<f64>();
        let exact = m.score_function_grad_exact(h);
        let path = m.pathwise_grad(&amps, &target, 0.5, 20_000, rng::derive(seed, 100 + t))?;
        hits += sign_agreement(&exact, &path) * exact.len() as f64;
        total += exact.len() as f64;
    }
    checks.push(Check::above("pathwise vs score-function sign agreement (rho = 0.5)", hits / total, SIGN_AGREEMENT - 1e-12));

    let bpsk = ToySystem::new(
        vec![
            crate::oracle::SourcePoint { x: vec![0.0], label: 0, prior: 0.5 },
            crate::oracle::SourcePoint { x: vec![1.0], label: 1, prior: 0.5 },
        ],
        crate::constellation::make_bpsk(),
        vec![crate::transition::TransitionPmf::bpsk(&[1.0])?, crate::transition::TransitionPmf::bpsk(&[0.0])?],
        1.0,
        1.0,
    )?;
    let mi = bpsk.mc_mutual_information(4 * draws, rng::derive(seed, 15));
    let quad = binary_awgn_mi(0.5);
    checks.push(Check::below("BPSK I(S;Z) vs quadrature in SEs", (mi.label.mean - quad).abs() / mi.label.se, SIGMA_BOUND));
    Ok(checks)
}

/// Trains JCM for every SNR of `cfg`, writes shaping reports under `out` and
/// checks that the Maxwell-Boltzmann fit never loses to the uniform PMF.
pub fn shaping_suite(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(Vec<ShapingReport>, Vec<Check>)> {
    let mut cfg = cfg.clone();
    cfg.methods = vec![MethodKind::Jcm];
    let summary = run_experiment(&cfg, out)?;
    let mut checks = Vec::new();
    for rep in &summary.shaping {
        let mass: f64 = rep.pmf.iter().sum();
        checks.push(Check::below(format!("snr {} dB: |sum(pmf) - 1|", rep.snr_db), (mass - 1.0).abs(), 1e-9));
        checks.push(Check::below(format!("snr {} dB: KL(MB fit) - KL(uniform)", rep.snr_db), rep.kl_mb - rep.kl_uniform, 1e-12));
    }
    Ok((summary.shaping, checks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_display_and_bounds() {
        let c = Check::below("x", 0.5, 1.0);
        assert!(c.passed());
        assert!(c.to_string().starts_with("PASS x: "));
        assert!(!Check::above("y", 0.5, 1.0).passed());
        assert!(!all_passed(&[c, Check::above("y", 0.5, 1.0)]));
    }

    #[test]
    fn sample_dist_small() {
        let checks = sample_dist_suite(16, 100_000, 2, 5);
        assert!(all_passed(&checks), "{checks:?}");
    }

    #[test]
    fn score_oracle_exact() {
        assert!(score_function_fd_error(3) < SCORE_TOL);
    }
}
