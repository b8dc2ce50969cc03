//! Constellation geometries, symbol indexing and per-sequence power control.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    Bpsk,
    RectQam,
}

/// Ordered symbol set. For rectangular QAM, point `r * √M + s` is
/// `iq_levels[r] + j·iq_levels[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation<S> {
    scheme: Scheme,
    order: usize,
    points: Vec<Complex<S>>,
    iq_levels: Vec<S>,
}

/// BPSK with points `[+1, -1]`.
pub fn make_bpsk<S: Scalar>() -> Constellation<S> {
    Constellation {
        scheme: Scheme::Bpsk,
        order: 2,
        points: vec![Complex::new(S::one(), S::zero()), Complex::new(-S::one(), S::zero())],
        iq_levels: Vec::new(),
    }
}

/// Rectangular M-QAM with per-axis amplitudes `(2r+1)/(√M-1)`,
/// `r = -√M/2 .. √M/2 - 1`.
pub fn make_rect_qam<S: Scalar>(order: usize) -> Result<Constellation<S>> {
    let side = qam_side(order).ok_or(Error::InvalidOrder(order))?;
    let denom = S::lit((side - 1) as f64);
    let half = (side / 2) as i64;
    let iq_levels: Vec<S> =
        (-half..half).map(|r| S::lit((2 * r + 1) as f64) / denom).collect();
    let mut points = Vec::with_capacity(order);
    for &re in &iq_levels {
        for &im in &iq_levels {
            points.push(Complex::new(re, im));
        }
    }
    Ok(Constellation { scheme: Scheme::RectQam, order, points, iq_levels })
}

/// `√M` when `M = 4^a`, `a ≥ 1`.
fn qam_side(order: usize) -> Option<usize> {
    if order < 4 || !order.is_power_of_two() || order.trailing_zeros() % 2 != 0 {
        return None;
    }
    Some(1 << (order.trailing_zeros() / 2))
}

impl<S: Scalar> Constellation<S> {
    /// Builds the constellation for `scheme` with `order` points.
    pub fn new(scheme: Scheme, order: usize) -> Result<Self> {
        match scheme {
            Scheme::Bpsk if order == 2 => Ok(make_bpsk()),
            Scheme::Bpsk => Err(Error::InvalidOrder(order)),
            Scheme::RectQam => make_rect_qam(order),
        }
    }

    #[inline]
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn points(&self) -> &[Complex<S>] {
        &self.points
    }

    #[inline]
    pub fn point(&self, m: usize) -> Complex<S> {
        self.points[m]
    }

    /// Shared I/Q amplitudes (rectangular QAM only; empty for BPSK).
    #[inline]
    pub fn iq_levels(&self) -> &[S] {
        &self.iq_levels
    }

    /// Independent categorical groups per channel use: 1 for BPSK, 2 (I and Q) for QAM.
    #[inline]
    pub fn groups(&self) -> usize {
        match self.scheme {
            Scheme::Bpsk => 1,
            Scheme::RectQam => 2,
        }
    }

    /// Categories per group: 2 for BPSK, `√M` for QAM.
    #[inline]
    pub fn categories(&self) -> usize {
        match self.scheme {
            Scheme::Bpsk => 2,
            Scheme::RectQam => self.iq_levels.len(),
        }
    }

    /// Real amplitudes indexed by per-group category.
    pub fn axis_levels(&self) -> Vec<S> {
        match self.scheme {
            Scheme::Bpsk => self.points.iter().map(|p| p.re).collect(),
            Scheme::RectQam => self.iq_levels.clone(),
        }
    }

    /// Point index from per-group category indices (`[m]` or `[r, s]`).
    pub fn symbol_index(&self, group_idx: &[usize]) -> usize {
        match self.scheme {
            Scheme::Bpsk => group_idx[0],
            Scheme::RectQam => group_idx[0] * self.iq_levels.len() + group_idx[1],
        }
    }

    /// Mean energy of the points under uniform usage.
    pub fn mean_energy(&self) -> S {
        self.points.iter().map(|p| p.norm_sqr()).sum::<S>() / S::lit(self.order as f64)
    }

    /// Index minimizing `|point - c_m|`, ties to the lowest index.
    pub fn nearest_symbol(&self, point: Complex<S>) -> usize {
        let mut best = 0;
        let mut best_d = (point - self.points[0]).norm_sqr();
        for (m, c) in self.points.iter().enumerate().skip(1) {
            let d = (point - *c).norm_sqr();
            if d < best_d {
                best = m;
                best_d = d;
            }
        }
        best
    }
}

/// Length-`n` channel input or output.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSequence<S> {
    values: Vec<Complex<S>>,
}

impl<S: Scalar> ComplexSequence<S> {
    pub fn new(values: Vec<Complex<S>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("sequence needs at least one channel use".into()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("complex sequence"));
        }
        Ok(Self { values })
    }

    /// Sequence of constellation points.
    pub fn from_symbols(c: &Constellation<S>, symbols: &[usize]) -> Result<Self> {
        let values = symbols
            .iter()
            .map(|&m| {
                c.points()
                    .get(m)
                    .copied()
                    .ok_or(Error::IndexOutOfRange { index: m, len: c.order() })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }

    /// Builds from `2n` reals laid out as `[I_1..I_n, Q_1..Q_n]`.
    pub fn from_iq_reals(reals: &[S]) -> Result<Self> {
        if reals.len() % 2 != 0 {
            return Err(Error::Shape(format!("{} reals do not split into I/Q", reals.len())));
        }
        let n = reals.len() / 2;
        Self::new((0..n).map(|i| Complex::new(reals[i], reals[n + i])).collect())
    }

    /// `[I_1..I_n, Q_1..Q_n]`.
    pub fn to_iq_reals(&self) -> Vec<S> {
        self.values.iter().map(|v| v.re).chain(self.values.iter().map(|v| v.im)).collect()
    }

    #[inline]
    pub fn values(&self) -> &[Complex<S>] {
        &self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `‖z‖² / n`.
    pub fn power(&self) -> S {
        self.values.iter().map(|v| v.norm_sqr()).sum::<S>() / S::lit(self.values.len() as f64)
    }
}

/// Rescales `seq` by `√(nP/‖z‖²)` so that `‖z'‖²/n = P`.
pub fn normalize_power<S: Scalar>(seq: &ComplexSequence<S>, power: S) -> Result<ComplexSequence<S>> {
    if !(power > S::zero()) {
        return Err(Error::Shape("power must be positive".into()));
    }
    let current = seq.power();
    if current == S::zero() {
        return Err(Error::ZeroSequence);
    }
    let scale = (power / current).sqrt();
    Ok(ComplexSequence { values: seq.values.iter().map(|v| v * scale).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn bpsk_points() {
        let b = make_bpsk::<f64>();
        assert_eq!(b.points(), &[c(1.0, 0.0), c(-1.0, 0.0)]);
        assert_eq!(b.order(), 2);
        assert!(b.points().iter().all(|p| p.im == 0.0));
    }

    #[test]
    fn qam_levels() {
        let q4 = make_rect_qam::<f64>(4).unwrap();
        assert_eq!(q4.iq_levels(), &[-1.0, 1.0]);
        for p in q4.points() {
            assert_eq!(p.re.abs(), 1.0);
            assert_eq!(p.im.abs(), 1.0);
        }
        let q16 = make_rect_qam::<f64>(16).unwrap();
        let expect = [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0];
        for (a, b) in q16.iq_levels().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        // (r, s) lexicographic ordering
        assert_eq!(q16.point(1), c(-1.0, -1.0 / 3.0));
        assert_eq!(q16.point(4), c(-1.0 / 3.0, -1.0));
    }

    #[test]
    fn qam_rejects_non_square() {
        for m in [0, 1, 2, 8, 12, 32, 128] {
            assert!(matches!(make_rect_qam::<f64>(m), Err(Error::InvalidOrder(_))), "M={m}");
        }
        assert!(make_rect_qam::<f32>(64).is_ok());
        assert!(make_rect_qam::<f32>(256).is_ok());
    }

    #[test]
    fn qam_is_cartesian_product() {
        for m in [4usize, 16, 64] {
            let q = make_rect_qam::<f64>(m).unwrap();
            let lv = q.iq_levels();
            assert!(lv.windows(2).all(|w| w[0] < w[1]));
            for (a, b) in lv.iter().zip(lv.iter().rev()) {
                assert!((a + b).abs() < 1e-15);
            }
            let mut expect: Vec<_> =
                lv.iter().flat_map(|&i| lv.iter().map(move |&q| c(i, q))).collect();
            let mut got = q.points().to_vec();
            let key = |p: &Complex<f64>| (p.re, p.im);
            expect.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn normalize_examples() {
        let z = ComplexSequence::new(vec![c(1.0, 1.0), c(1.0, 1.0)]).unwrap();
        let out = normalize_power(&z, 1.0).unwrap();
        let r = 1.0 / 2f64.sqrt();
        for v in out.values() {
            assert!((v.re - r).abs() < 1e-15 && (v.im - r).abs() < 1e-15);
        }
        assert!((out.power() - 1.0).abs() < 1e-12);

        let unit = ComplexSequence::new(vec![c(1.0, 0.0), c(0.0, -1.0)]).unwrap();
        assert_eq!(normalize_power(&unit, 1.0).unwrap(), unit);

        let zero = ComplexSequence::new(vec![c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(matches!(normalize_power(&zero, 1.0), Err(Error::ZeroSequence)));
    }

    #[test]
    fn nearest_examples() {
        let b = make_bpsk::<f64>();
        assert_eq!(b.nearest_symbol(c(0.9, 0.0)), 0);
        assert_eq!(b.nearest_symbol(c(0.0, 0.0)), 0);
        let q16 = make_rect_qam::<f64>(16).unwrap();
        let m = q16.nearest_symbol(c(0.4, 0.4));
        let p = q16.point(m);
        assert!((p.re - 1.0 / 3.0).abs() < 1e-15 && (p.im - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iq_reals_layout() {
        let z = ComplexSequence::new(vec![c(1.0, 2.0), c(3.0, 4.0)]).unwrap();
        assert_eq!(z.to_iq_reals(), vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(ComplexSequence::from_iq_reals(&z.to_iq_reals()).unwrap(), z);
    }

    proptest! {
        #[test]
        fn normalize_is_exact_and_idempotent(
            vals in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..32),
            p in 0.1f64..10.0,
        ) {
            let seq = ComplexSequence::new(vals.iter().map(|&(a, b)| c(a, b)).collect()).unwrap();
            prop_assume!(seq.power() > 1e-9);
            let once = normalize_power(&seq, p).unwrap();
            prop_assert!(((once.power() - p) / p).abs() < 1e-9);
            let twice = normalize_power(&once, p).unwrap();
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
            }
        }

        #[test]
        fn nearest_matches_brute_force(re in -2.0f64..2.0, im in -2.0f64..2.0, pick in 0usize..3) {
            let cons = [make_bpsk(), make_rect_qam(4).unwrap(), make_rect_qam(16).unwrap()];
            let k = &cons[pick];
            let z = c(re, im);
            let got = k.nearest_symbol(z);
            let best = k.points().iter().map(|p| (z - p).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(((z - k.point(got)).norm() - best).abs() < 1e-12);
        }
    }
}
