//! Comparison transmitters: analog, uniform and learned quantizers on a
//! frozen analog encoder, and nearest-symbol projection with a
//! distance-softmax surrogate. All share the JCM power constraint and channel.

use num_complex::Complex;
use rand::seq::SliceRandom;

use crate::autodiff::{distance_weights, AdamConfig, ParamStore, Tape};
use crate::channel::{awgn_with, ChannelConfig};
use crate::constellation::{normalize_power, ComplexSequence, Constellation, Scheme};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Clipping range of both quantizers.
pub const QUANT_LO: f64 = -1.0;
pub const QUANT_HI: f64 = 1.0;
/// Default distance-softmax temperature of the projection baseline.
pub const HARD_SOFT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Analog,
    UniformQuant,
    LearnedQuant,
    HardSoftQuant,
}

impl BaselineKind {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "analog" => Self::Analog,
            "uniform" => Self::UniformQuant,
            "nn" | "learned" => Self::LearnedQuant,
            "deepjscc_q" | "hardsoft" => Self::HardSoftQuant,
            _ => return None,
        })
    }
}

/// Consecutive real pairs become I/Q; the sequence is power-normalized and,
/// when `channel` is given, passed through AWGN.
pub fn analog_transmit<S: Scalar>(
    encoder_out: &[S],
    power: S,
    channel: Option<&ChannelConfig>,
    seed: u64,
) -> Result<ComplexSequence<S>> {
    if encoder_out.is_empty() || encoder_out.len() % 2 != 0 {
        return Err(Error::Shape(format!("analog output needs an even, non-zero length, got {}", encoder_out.len())));
    }
    let pairs = encoder_out.chunks(2).map(|p| Complex::new(p[0], p[1])).collect();
    let z = normalize_power(&ComplexSequence::new(pairs)?, power)?;
    match channel {
        Some(cfg) => awgn_with(&z, cfg, &mut rng::stream(seed, 0)),
        None => Ok(z),
    }
}

/// Bin of `v` among `levels` equal bins of `[lo, hi]`, clipping outside values.
pub fn uniform_quantize(v: f64, levels: usize, lo: f64, hi: f64) -> usize {
    let delta = (hi - lo) / levels as f64;
    let idx = ((v - lo) / delta).floor();
    if idx.is_nan() || idx < 0.0 {
        0
    } else {
        (idx as usize).min(levels - 1)
    }
}

/// Midpoint of bin `index`.
pub fn dequantize(index: usize, levels: usize, lo: f64, hi: f64) -> f64 {
    let delta = (hi - lo) / levels as f64;
    lo + (index as f64 + 0.5) * delta
}

/// Learned scalar quantizer: nearest of the ascending `levels` at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedQuantizer {
    pub levels: Vec<f64>,
    /// Temperature of the training-time soft assignment.
    pub temperature: f64,
}

impl LearnedQuantizer {
    pub fn quantize(&self, v: f64) -> usize {
        let mut best = 0;
        for (i, &l) in self.levels.iter().enumerate() {
            if (v - l).abs() < (v - self.levels[best]).abs() {
                best = i;
            }
        }
        best
    }

    pub fn dequantize(&self, index: usize) -> f64 {
        self.levels[index]
    }

    /// Mean squared error of quantize-then-dequantize over `values`.
    pub fn distortion(&self, values: &[f64]) -> f64 {
        values.iter().map(|&v| (v - self.dequantize(self.quantize(v))).powi(2)).sum::<f64>() / values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedQuantOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub temperature: f64,
}

impl Default for LearnedQuantOptions {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 256, lr: 1e-2, temperature: 0.05 }
    }
}

/// Fits a `levels`-point quantizer/dequantizer pair to `corpus` (clipped to
/// the quantizer range) by minimizing reconstruction MSE.
///
/// The quantizer layer has logits `a_m v + b_m` with `a_m = 2l_m/T`,
/// `b_m = -l_m²/T`, so its argmax is the nearest level `l_m`; the dequantizer
/// outputs `l_m`. The forward pass uses the hard assignment, the backward
/// pass its softmax. Levels start at the uniform bin midpoints.
pub fn learned_quantizer_train(corpus: &[f64], levels: usize, opts: &LearnedQuantOptions, seed: u64) -> Result<LearnedQuantizer> {
    if levels < 2 {
        return Err(Error::Config { field: "levels".into(), reason: "need at least 2".into() });
    }
    let values: Vec<f64> = corpus.iter().map(|v| v.clamp(QUANT_LO, QUANT_HI)).collect();
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if values.is_empty() || !(max - min > 1e-12) {
        return Err(Error::DegenerateCorpus);
    }
    let t = opts.temperature;
    let mids: Vec<f64> = (0..levels).map(|i| dequantize(i, levels, QUANT_LO, QUANT_HI)).collect();
    let mut store = ParamStore::<f64>::new();
    store.insert("q.l", Matrix::from_vec(1, levels, mids)?);
    let adam = AdamConfig::default();
    let mut order: Vec<usize> = (0..values.len()).collect();
    let mut r = rng::stream(seed, 0);
    for _ in 0..opts.epochs {
        order.shuffle(&mut r);
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let b = chunk.len();
            let v = Matrix::from_vec(b, 1, chunk.iter().map(|&i| values[i]).collect())?;
            let mut tape = Tape::new();
            let x = tape.constant(v);
            let l = tape.param(&store, "q.l")?;
            let slope = tape.scale(l, 2.0 / t);
            let l2 = tape.mul(l, l)?;
            let offset = tape.scale(l2, -1.0 / t);
            let s = tape.matmul(x, slope)?;
            let s = tape.add_bias(s, offset)?;
            let w = tape.softmax_groups(s, levels)?;
            let mut hard = Matrix::zeros(b, levels);
            for row in 0..b {
                hard[(row, crate::metrics::argmax(tape.value(s).row(row)))] = 1.0;
            }
            let w = tape.straight_through(hard, w)?;
            let ones = tape.constant(Matrix::filled(b, 1, 1.0));
            let spread = tape.matmul(ones, l)?;
            let picked = tape.mul(w, spread)?;
            let sum = tape.constant(Matrix::filled(levels, 1, 1.0));
            let y = tape.matmul(picked, sum)?;
            let d = tape.sub(y, x)?;
            let sq = tape.mul(d, d)?;
            let loss = tape.mean_all(sq);
            tape.backward(loss, 1.0, &mut store)?;
            store.adam_step(opts.lr, &adam)?;
        }
    }
    let mut lv = store.value("q.l")?.as_slice().to_vec();
    lv.sort_by(f64::total_cmp);
    Ok(LearnedQuantizer { levels: lv, temperature: t })
}

/// Per-axis quantizer applied to a frozen analog encoder's output.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantizerKind {
    Uniform { lo: f64, hi: f64 },
    Learned(LearnedQuantizer),
}

impl QuantizerKind {
    pub fn uniform() -> Self {
        Self::Uniform { lo: QUANT_LO, hi: QUANT_HI }
    }

    fn index(&self, v: f64, levels: usize) -> usize {
        match self {
            Self::Uniform { lo, hi } => uniform_quantize(v, levels, *lo, *hi),
            Self::Learned(q) => q.quantize(v),
        }
    }

    /// Maps each of the `n` encoder outputs to one of `M` bins and sends the
    /// matching symbol: bin `k` is point `k` for QAM and the `k`-th point by
    /// ascending amplitude for BPSK. Returns `[I.., Q..]` reals and indices.
    pub fn quantize_row<S: Scalar>(&self, row: &[S], c: &Constellation<S>) -> (Vec<S>, Vec<usize>) {
        let n = row.len();
        let m = c.order();
        let mut out = vec![S::zero(); 2 * n];
        let mut symbols = Vec::with_capacity(n);
        for (i, v) in row.iter().enumerate() {
            let bin = self.index(v.as_f64(), m);
            let sym = match c.scheme() {
                Scheme::Bpsk => m - 1 - bin,
                Scheme::RectQam => bin,
            };
            let p = c.point(sym);
            out[i] = p.re;
            out[n + i] = p.im;
            symbols.push(sym);
        }
        (out, symbols)
    }
}

/// Nearest-symbol projection of a `[I.., Q..]` row.
pub fn hard_soft_project<S: Scalar>(row: &[S], c: &Constellation<S>) -> (Vec<S>, Vec<usize>) {
    let n = row.len() / 2;
    let mut out = vec![S::zero(); 2 * n];
    let mut idx = Vec::with_capacity(n);
    for i in 0..n {
        let m = c.nearest_symbol(Complex::new(row[i], row[n + i]));
        let p = c.point(m);
        out[i] = p.re;
        out[n + i] = p.im;
        idx.push(m);
    }
    (out, idx)
}

/// Forward values, backward surrogate and chosen indices of the
/// projection quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct HardSoft<S> {
    pub hard: Vec<Complex<S>>,
    pub soft: Vec<Complex<S>>,
    pub indices: Vec<usize>,
}

/// Nearest-symbol forward and `Σ c_m softmax(-|v - c_m|²/T)` surrogate.
pub fn hard_soft_quantize<S: Scalar>(v: &[Complex<S>], c: &Constellation<S>, temperature: S) -> HardSoft<S> {
    let mut out = HardSoft { hard: Vec::with_capacity(v.len()), soft: Vec::with_capacity(v.len()), indices: Vec::with_capacity(v.len()) };
    for &z in v {
        let m = c.nearest_symbol(z);
        let w = distance_weights(z, c.points(), temperature);
        let soft = w.iter().zip(c.points()).fold(Complex::new(S::zero(), S::zero()), |acc, (&wi, &p)| acc + p * wi);
        out.hard.push(c.point(m));
        out.soft.push(soft);
        out.indices.push(m);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{make_bpsk, make_rect_qam};
    use rand::Rng as _;

    #[test]
    fn uniform_quantizer_examples() {
        assert_eq!(uniform_quantize(-1.0, 4, -1.0, 1.0), 0);
        assert_eq!(dequantize(0, 4, -1.0, 1.0), -0.75);
        assert_eq!(uniform_quantize(0.3, 4, -1.0, 1.0), 2);
        assert_eq!(dequantize(2, 4, -1.0, 1.0), 0.25);
        assert_eq!(uniform_quantize(1.7, 4, -1.0, 1.0), 3);
        assert_eq!(uniform_quantize(1.0, 4, -1.0, 1.0), 3);
        assert_eq!(uniform_quantize(-5.0, 4, -1.0, 1.0), 0);
    }

    #[test]
    fn analog_noiseless_is_normalized_output() {
        let out = [3.0f64, 4.0, 0.0, 0.0];
        let z = analog_transmit(&out, 1.0, None, 0).unwrap();
        assert!((z.power() - 1.0).abs() < 1e-12);
        let s = (2.0f64 / 25.0).sqrt();
        assert!((z.values()[0] - Complex::new(3.0 * s, 4.0 * s)).norm() < 1e-12);
        let noisy = analog_transmit(&out, 1.0, Some(&ChannelConfig::new(0.0, 1.0).unwrap()), 1).unwrap();
        assert_ne!(noisy, z);
    }

    #[test]
    fn uniform_row_lands_on_points() {
        let c = make_rect_qam::<f64>(16).unwrap();
        let mut r = rng::stream(2, 0);
        let row: Vec<f64> = (0..8).map(|_| r.random_range(-2.0..2.0)).collect();
        let (vals, sym) = QuantizerKind::uniform().quantize_row(&row, &c);
        for i in 0..8 {
            assert_eq!(c.point(sym[i]), Complex::new(vals[i], vals[8 + i]));
            assert_eq!(sym[i], uniform_quantize(row[i], 16, QUANT_LO, QUANT_HI));
        }
        let b = make_bpsk::<f64>();
        let (vals, sym) = QuantizerKind::uniform().quantize_row(&[-0.3, 0.2], &b);
        assert_eq!(vals, vec![-1.0, 1.0, 0.0, 0.0]);
        assert_eq!(sym, vec![1, 0]);
    }

    #[test]
    fn learned_quantizer_matches_uniform_on_uniform_corpus() {
        let mut r = rng::stream(3, 0);
        let corpus: Vec<f64> = (0..20_000).map(|_| r.random_range(-1.0..1.0)).collect();
        let q = learned_quantizer_train(&corpus, 4, &LearnedQuantOptions::default(), 5).unwrap();
        let bound = 0.5f64.powi(2) / 12.0;
        let d = q.distortion(&corpus);
        assert!(d <= bound + 1e-3, "distortion {d} vs {bound}");
        assert!(q.levels.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn learned_two_levels_symmetric() {
        let mut r = rng::stream(6, 0);
        let corpus: Vec<f64> = (0..10_000)
            .map(|_| {
                let v: f64 = r.random_range(0.2..0.9);
                if r.random::<bool>() { v } else { -v }
            })
            .collect();
        let q = learned_quantizer_train(&corpus, 2, &LearnedQuantOptions::default(), 1).unwrap();
        assert!((q.levels[0] + q.levels[1]).abs() < 0.05, "{:?}", q.levels);
    }

    #[test]
    fn learned_rejects_constant_corpus() {
        assert!(matches!(
            learned_quantizer_train(&[0.3; 100], 4, &LearnedQuantOptions::default(), 0),
            Err(Error::DegenerateCorpus)
        ));
        assert!(matches!(learned_quantizer_train(&[], 4, &LearnedQuantOptions::default(), 0), Err(Error::DegenerateCorpus)));
    }

    #[test]
    fn hard_soft_examples() {
        let c = make_rect_qam::<f64>(4).unwrap();
        let on = [c.point(2)];
        let hs = hard_soft_quantize(&on, &c, 0.01);
        assert!((hs.hard[0] - hs.soft[0]).norm() < 1e-6);
        // equidistant from points 0 and 1 → lowest index
        let mid = (c.point(0) + c.point(1)) * 0.5;
        assert_eq!(hard_soft_quantize(&[mid], &c, 1.0).indices[0], 0);
        let hot = hard_soft_quantize(&[Complex::new(0.3, -0.9)], &c, 1e9);
        assert!(hot.soft[0].norm() < 1e-6);
    }
}
