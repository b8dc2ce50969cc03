//! Per-position categorical transition probabilities of the encoder-modulator.
//!
//! Positions are conditionally independent, and for rectangular QAM the I and
//! Q amplitudes of a position are independent as well, so a length-`n`
//! sequence is described by `n` (BPSK) or `2n` (QAM) small categorical rows
//! instead of one distribution over `M^n` sequences.

use crate::constellation::{Constellation, Scheme};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Smallest probability any category may carry.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPmf<S> {
    scheme: Scheme,
    /// One `n x categories` row-stochastic matrix per group: `[probs]` for
    /// BPSK (column 0 is `+1`), `[probs_i, probs_q]` for QAM.
    groups: Vec<Matrix<S>>,
}

/// Row-wise stable softmax followed by the floor map `q -> ε + (1 - Cε) q`,
/// which keeps rows on the simplex with every entry at least `ε`.
pub fn softmax_floored<S: Scalar>(row: &[S], out: &mut [S]) {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        total += *o;
    }
    let eps = S::lit(PROB_FLOOR);
    let keep = S::one() - eps * S::lit(row.len() as f64);
    for o in out.iter_mut() {
        *o = eps + keep * (*o / total);
    }
}

/// Converts encoder logits into a transition PMF.
///
/// `logits` has one row per position: 2 columns for BPSK, `2√M` for QAM with
/// the I logits first and the Q logits second.
pub fn pmf_from_logits<S: Scalar>(logits: &Matrix<S>, c: &Constellation<S>) -> Result<TransitionPmf<S>> {
    if !logits.is_finite() {
        return Err(Error::NonFinite("logits"));
    }
    let g = c.groups();
    let k = c.categories();
    if logits.cols() != g * k {
        return Err(Error::Shape(format!("expected {} logits per position, got {}", g * k, logits.cols())));
    }
    let n = logits.rows();
    let mut groups = vec![Matrix::zeros(n, k); g];
    for i in 0..n {
        let row = logits.row(i);
        for (gi, m) in groups.iter_mut().enumerate() {
            softmax_floored(&row[gi * k..(gi + 1) * k], m.row_mut(i));
        }
    }
    Ok(TransitionPmf { scheme: c.scheme(), groups })
}

impl<S: Scalar> TransitionPmf<S> {
    /// Builds a PMF from explicit rows, checking they are stochastic.
    pub fn from_groups(scheme: Scheme, groups: Vec<Matrix<S>>) -> Result<Self> {
        let expect = match scheme {
            Scheme::Bpsk => 1,
            Scheme::RectQam => 2,
        };
        if groups.len() != expect {
            return Err(Error::Shape(format!("{scheme:?} needs {expect} probability groups")));
        }
        let shape = groups[0].shape();
        if scheme == Scheme::Bpsk && shape.1 != 2 {
            return Err(Error::Shape("BPSK rows need 2 entries".into()));
        }
        for m in &groups {
            if m.shape() != shape {
                return Err(Error::Shape("I and Q probability tables differ in shape".into()));
            }
            for r in 0..m.rows() {
                let row = m.row(r);
                let s: S = row.iter().copied().sum();
                if row.iter().any(|&p| p < S::zero() || !p.is_finite())
                    || (s - S::one()).abs() > S::lit(1e-6)
                {
                    return Err(Error::Shape(format!("row {r} is not a probability vector")));
                }
            }
        }
        Ok(Self { scheme, groups })
    }

    /// BPSK PMF from the per-position probability of `+1`.
    pub fn bpsk(prob_plus: &[S]) -> Result<Self> {
        let rows: Vec<Vec<S>> = prob_plus.iter().map(|&q| vec![q, S::one() - q]).collect();
        Self::from_groups(Scheme::Bpsk, vec![Matrix::from_rows(&rows)?])
    }

    #[inline]
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Number of positions `n`.
    #[inline]
    pub fn len(&self) -> usize {
        self.groups[0].rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn categories(&self) -> usize {
        self.groups[0].cols()
    }

    #[inline]
    pub fn groups(&self) -> &[Matrix<S>] {
        &self.groups
    }

    /// Probability row of `group` at `position`.
    #[inline]
    pub fn row(&self, group: usize, position: usize) -> &[S] {
        self.groups[group].row(position)
    }

    /// Number of constellation points the PMF ranges over.
    pub fn order(&self) -> usize {
        match self.scheme {
            Scheme::Bpsk => 2,
            Scheme::RectQam => self.categories() * self.categories(),
        }
    }

    /// Splits a point index into per-group category indices.
    fn split_symbol(&self, m: usize) -> Result<[usize; 2]> {
        if m >= self.order() {
            return Err(Error::IndexOutOfRange { index: m, len: self.order() });
        }
        let k = self.categories();
        Ok(match self.scheme {
            Scheme::Bpsk => [m, 0],
            Scheme::RectQam => [m / k, m % k],
        })
    }

    /// Joint probability of the symbol sequence `z` (point indices).
    pub fn sequence_probability(&self, z: &[usize]) -> Result<S> {
        if z.len() != self.len() {
            return Err(Error::Shape(format!("sequence of length {} for {} positions", z.len(), self.len())));
        }
        let mut p = S::one();
        for (i, &m) in z.iter().enumerate() {
            let idx = self.split_symbol(m)?;
            for (g, table) in self.groups.iter().enumerate() {
                p *= table[(i, idx[g])];
            }
        }
        Ok(p)
    }

    /// Log of [`Self::sequence_probability`].
    pub fn sequence_log_probability(&self, z: &[usize]) -> Result<S> {
        if z.len() != self.len() {
            return Err(Error::Shape(format!("sequence of length {} for {} positions", z.len(), self.len())));
        }
        let mut lp = S::zero();
        for (i, &m) in z.iter().enumerate() {
            let idx = self.split_symbol(m)?;
            for (g, table) in self.groups.iter().enumerate() {
                lp += table[(i, idx[g])].ln();
            }
        }
        Ok(lp)
    }

    /// Distribution over the `M` points at `position` (QAM only): the outer
    /// product of the I and Q rows in constellation point order.
    pub fn joint_symbol_pmf(&self, position: usize) -> Result<Vec<S>> {
        if self.scheme != Scheme::RectQam {
            return Err(Error::NotQam);
        }
        if position >= self.len() {
            return Err(Error::IndexOutOfRange { index: position, len: self.len() });
        }
        let pi = self.groups[0].row(position);
        let pq = self.groups[1].row(position);
        Ok(pi.iter().flat_map(|&a| pq.iter().map(move |&b| a * b)).collect())
    }

    /// Per-point distribution at `position` for either scheme.
    pub fn symbol_pmf(&self, position: usize) -> Vec<S> {
        match self.scheme {
            Scheme::Bpsk => self.groups[0].row(position).to_vec(),
            Scheme::RectQam => self.joint_symbol_pmf(position).expect("qam scheme"),
        }
    }
}
