//! Complex AWGN channel.

use num_complex::Complex;
use rand_distr::{Distribution, StandardNormal};

use crate::constellation::ComplexSequence;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

/// Relative tolerance on the input power check in [`awgn_transmit`].
pub const POWER_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub snr_db: f64,
    pub power: f64,
}

/// `σ² = P / 10^(snr_db / 10)`.
pub fn snr_to_sigma2(snr_db: f64, power: f64) -> f64 {
    power / 10f64.powf(snr_db / 10.0)
}

impl ChannelConfig {
    pub fn new(snr_db: f64, power: f64) -> Result<Self> {
        if !(power > 0.0) || !snr_db.is_finite() {
            return Err(Error::Config {
                field: "power".into(),
                reason: format!("need finite SNR and positive power, got P={power}, snr={snr_db}"),
            });
        }
        Ok(Self { snr_db, power })
    }

    /// Total complex noise variance `σ²`.
    pub fn sigma2(&self) -> f64 {
        snr_to_sigma2(self.snr_db, self.power)
    }

    /// Standard deviation of each real noise component, `√(σ²/2)`.
    pub fn component_std(&self) -> f64 {
        (self.sigma2() / 2.0).sqrt()
    }
}

/// One complex noise sample with `σ²/2` variance per component.
pub fn complex_noise<S: Scalar>(rng: &mut Rng, component_std: f64) -> Complex<S> {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(S::lit(re * component_std), S::lit(im * component_std))
}

/// Fills `out` with real noise components of standard deviation `component_std`.
pub fn fill_real_noise<S: Scalar>(rng: &mut Rng, component_std: f64, out: &mut [S]) {
    for v in out {
        let g: f64 = StandardNormal.sample(rng);
        *v = S::lit(g * component_std);
    }
}

/// `ẑ = z + ε`, `ε ~ CN(0, σ² I)`, deterministic given `seed`.
pub fn awgn_transmit<S: Scalar>(z: &ComplexSequence<S>, cfg: &ChannelConfig, seed: u64) -> Result<ComplexSequence<S>> {
    let actual = z.power().as_f64();
    if ((actual - cfg.power) / cfg.power).abs() > POWER_TOLERANCE {
        return Err(Error::PowerMismatch { expected: cfg.power, actual });
    }
    let mut r = rng::stream(seed, 0);
    awgn_with(z, cfg, &mut r)
}

/// [`awgn_transmit`] without the power check, drawing from `rng`.
pub fn awgn_with<S: Scalar>(z: &ComplexSequence<S>, cfg: &ChannelConfig, rng: &mut Rng) -> Result<ComplexSequence<S>> {
    let std = cfg.component_std();
    ComplexSequence::new(z.values().iter().map(|&v| v + complex_noise::<S>(rng, std)).collect())
}
