//! Training objective: batch-mean cross-entropy of the semantic head plus
//! λ times the batch-mean squared reconstruction error. This is the negated
//! empirical lower bound with its additive constant dropped.

use crate::autodiff::{Tape, Var};
use crate::constellation::Scheme;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Posterior entries are floored here before taking logs.
pub const POSTERIOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub num_classes: usize,
}

impl LossConfig {
    pub fn new(lambda: f64, num_classes: usize) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Config { field: "lambda".into(), reason: format!("must be finite and >= 0, got {lambda}") });
        }
        if num_classes < 2 {
            return Err(Error::Config { field: "classes".into(), reason: format!("need at least 2, got {num_classes}") });
        }
        Ok(Self { lambda, num_classes })
    }
}

/// SNRs (dB) with a tabulated λ, for 128 channel uses.
pub const LAMBDA_SNRS: [i32; 7] = [18, 12, 6, 0, -6, -12, -18];
pub const LAMBDA_BPSK: [f64; 7] = [70.0, 70.0, 70.0, 30.0, 20.0, 2.0, 0.5];
pub const LAMBDA_QAM: [f64; 7] = [270.0, 250.0, 250.0, 30.0, 20.0, 2.0, 0.5];

/// Tabulated λ for `(scheme, snr_db)`, `None` for SNRs outside the table.
pub fn default_lambda(scheme: Scheme, snr_db: f64) -> Option<f64> {
    let row = match scheme {
        Scheme::Bpsk => &LAMBDA_BPSK,
        Scheme::RectQam => &LAMBDA_QAM,
    };
    LAMBDA_SNRS.iter().position(|&s| f64::from(s) == snr_db).map(|i| row[i])
}

fn check_label(label: usize, classes: usize) -> Result<()> {
    if label >= classes {
        return Err(Error::InvalidLabel { label, classes });
    }
    Ok(())
}

/// Mean of `-ln posterior[label]` over the batch (0-based labels).
pub fn cross_entropy<S: Scalar>(posteriors: &Matrix<S>, labels: &[usize]) -> Result<S> {
    if posteriors.rows() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!("{} posteriors for {} labels", posteriors.rows(), labels.len())));
    }
    let floor = S::lit(POSTERIOR_FLOOR);
    let mut total = S::zero();
    for (r, &l) in labels.iter().enumerate() {
        check_label(l, posteriors.cols())?;
        total -= posteriors[(r, l)].max(floor).ln();
    }
    Ok(total / S::lit(labels.len() as f64))
}

/// Mean over the batch of the per-sample squared error `‖x - x̂‖²`.
pub fn mse<S: Scalar>(x: &Matrix<S>, x_hat: &Matrix<S>) -> Result<S> {
    if x.shape() != x_hat.shape() || x.rows() == 0 {
        return Err(Error::Shape(format!("source {:?} vs reconstruction {:?}", x.shape(), x_hat.shape())));
    }
    let sq: S = x.as_slice().iter().zip(x_hat.as_slice()).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(sq / S::lit(x.rows() as f64))
}

/// `cross_entropy + λ · mse`.
pub fn vilb_batch_loss<S: Scalar>(
    posteriors: &Matrix<S>,
    labels: &[usize],
    x: &Matrix<S>,
    x_hat: &Matrix<S>,
    cfg: &LossConfig,
) -> Result<S> {
    if posteriors.rows() != x.rows() {
        return Err(Error::Shape("posterior and source batches differ".into()));
    }
    Ok(cross_entropy(posteriors, labels)? + S::lit(cfg.lambda) * mse(x, x_hat)?)
}

/// Loss terms recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub cross_entropy: Var,
    pub mse: Var,
}

/// Records the training loss from semantic-head logits and reconstructions.
/// Cross-entropy uses a log-softmax of the logits, which equals the floored
/// posterior form wherever the posterior exceeds the floor.
pub fn vilb_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    class_logits: Var,
    labels: &[usize],
    x: &Matrix<S>,
    x_hat: Var,
    cfg: &LossConfig,
) -> Result<LossVars> {
    let classes = tape.value(class_logits).cols();
    for &l in labels {
        check_label(l, classes)?;
    }
    let batch = S::lit(labels.len() as f64);
    let log_post = tape.log_softmax_groups(class_logits, classes)?;
    let picked = tape.pick_cols(log_post, labels)?;
    let sum_lp = tape.sum_all(picked);
    let ce = tape.scale(sum_lp, -S::one() / batch);

    let target = tape.constant(x.clone());
    let diff = tape.sub(x_hat, target)?;
    let sq = tape.mul(diff, diff)?;
    let sum_sq = tape.sum_all(sq);
    let mse = tape.scale(sum_sq, S::one() / batch);
    let weighted = tape.scale(mse, S::lit(cfg.lambda));
    let total = tape.add(ce, weighted)?;
    Ok(LossVars { total, cross_entropy: ce, mse })
}

/// `10 log10(1 / mse)` with peak 1, where `mse` is per-element.
pub fn psnr_db(per_element_mse: f64) -> f64 {
    10.0 * (1.0 / per_element_mse).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = Matrix::filled(3, 10, 0.1);
        assert!((cross_entropy(&uniform, &[0, 4, 9]).unwrap() - 10f64.ln()).abs() < 1e-12);
        let onehot = m(&[&[0.0, 1.0, 0.0]]);
        assert!(cross_entropy(&onehot, &[1]).unwrap() <= 1e-11);
        let p = m(&[&[0.9, 0.1]]);
        assert!((cross_entropy(&p, &[1]).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert!(matches!(cross_entropy(&p, &[2]), Err(Error::InvalidLabel { .. })));
        // floored zero stays finite
        assert!((cross_entropy(&m(&[&[1.0, 0.0]]), &[1]).unwrap() - 1e12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&m(&[&[0.2, 0.4]]), &m(&[&[0.2, 0.4]])).unwrap(), 0.0);
        assert_eq!(mse(&m(&[&[1.0, 0.0]]), &m(&[&[0.0, 0.0]])).unwrap(), 1.0);
        assert_eq!(mse(&m(&[&[0.5; 4]]), &m(&[&[0.25; 4]])).unwrap(), 0.25);
        assert!(mse(&m(&[&[0.5; 4]]), &m(&[&[0.25; 3]])).is_err());
    }

    #[test]
    fn total_loss_and_lambda() {
        let post = m(&[&[0.7, 0.3], &[0.2, 0.8]]);
        let x = m(&[&[0.1, 0.9], &[0.5, 0.5]]);
        let xh = m(&[&[0.2, 0.7], &[0.5, 0.4]]);
        let ce = cross_entropy(&post, &[0, 1]).unwrap();
        let zero = vilb_batch_loss(&post, &[0, 1], &x, &xh, &LossConfig::new(0.0, 2).unwrap()).unwrap();
        assert_eq!(zero, ce);
        let mut last = zero;
        for lam in [0.5, 1.0, 30.0, 250.0] {
            let l = vilb_batch_loss(&post, &[0, 1], &x, &xh, &LossConfig::new(lam, 2).unwrap()).unwrap();
            assert!(l > last);
            last = l;
        }
        let perfect = vilb_batch_loss(&m(&[&[1.0, 0.0]]), &[0], &x.gather_rows(&[0]), &x.gather_rows(&[0]), &LossConfig::new(30.0, 2).unwrap()).unwrap();
        assert!(perfect.abs() < 1e-11);
        assert!(LossConfig::new(-1.0, 2).is_err());
        assert!(LossConfig::new(1.0, 1).is_err());
    }

    #[test]
    fn tape_loss_matches_value_loss() {
        let logits = m(&[&[0.3, -1.0, 2.0], &[0.0, 0.5, 0.1]]);
        let x = m(&[&[0.1, 0.9], &[0.5, 0.5]]);
        let xh = m(&[&[0.2, 0.7], &[0.5, 0.4]]);
        let cfg = LossConfig::new(3.0, 3).unwrap();
        let mut t = Tape::new();
        let lv = t.constant(logits.clone());
        let xv = t.constant(xh.clone());
        let vars = vilb_on_tape(&mut t, lv, &[2, 0], &x, xv, &cfg).unwrap();
        let mut post = Matrix::zeros(2, 3);
        for r in 0..2 {
            let mx = logits.row(r).iter().copied().fold(f64::MIN, f64::max);
            let e: Vec<f64> = logits.row(r).iter().map(|v| (v - mx).exp()).collect();
            let s: f64 = e.iter().sum();
            for c in 0..3 {
                post[(r, c)] = e[c] / s;
            }
        }
        let expect = vilb_batch_loss(&post, &[2, 0], &x, &xh, &cfg).unwrap();
        assert!((t.value(vars.total)[(0, 0)] - expect).abs() < 1e-12);
    }

    #[test]
    fn lambda_table() {
        assert_eq!(default_lambda(Scheme::RectQam, 0.0), Some(30.0));
        assert_eq!(default_lambda(Scheme::RectQam, 18.0), Some(270.0));
        assert_eq!(default_lambda(Scheme::Bpsk, -18.0), Some(0.5));
        assert_eq!(default_lambda(Scheme::Bpsk, 3.0), None);
    }

    #[test]
    fn psnr_formula() {
        assert!((psnr_db(0.01) - 20.0).abs() < 1e-12);
    }
}
