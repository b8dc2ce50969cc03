use std::path::Path;

use indexmap::IndexMap;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Checkpoint file magic.
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"JCMP";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub value: Matrix<S>,
    pub grad: Matrix<S>,
    m: Matrix<S>,
    v: Matrix<S>,
    steps: u64,
}

impl<S: Scalar> Param<S> {
    fn new(value: Matrix<S>) -> Self {
        let (r, c) = value.shape();
        Self { value, grad: Matrix::zeros(r, c), m: Matrix::zeros(r, c), v: Matrix::zeros(r, c), steps: 0 }
    }

    /// First and second Adam moments.
    pub fn moments(&self) -> (&Matrix<S>, &Matrix<S>) {
        (&self.m, &self.v)
    }
}

/// Named trainable arrays with gradient buffers and Adam state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<S> {
    params: IndexMap<String, Param<S>>,
    step: u64,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { params: IndexMap::new(), step: 0 }
    }

    /// Adds or replaces parameter `name`, resetting its optimizer state.
    pub fn insert(&mut self, name: impl Into<String>, value: Matrix<S>) {
        self.params.insert(name.into(), Param::new(value));
    }

    /// Glorot-uniform weight matrix `fan_in x fan_out`.
    pub fn insert_glorot(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut Rng) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| S::lit(rng.random_range(-limit..=limit))).collect();
        self.insert(name, Matrix::from_vec(fan_in, fan_out, data).expect("sized"));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Param<S>> {
        self.params.get(name).ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Matrix<S>> {
        Ok(&self.get(name)?.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Matrix<S>> {
        self.params.get_mut(name).map(|p| &mut p.value).ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn grad(&self, name: &str) -> Result<&Matrix<S>> {
        Ok(&self.get(name)?.grad)
    }

    pub fn accumulate_grad(&mut self, name: &str, g: &Matrix<S>) -> Result<()> {
        let p = self.params.get_mut(name).ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        if p.grad.shape() != g.shape() {
            return Err(Error::Shape(format!("gradient {:?} for `{name}` {:?}", g.shape(), p.grad.shape())));
        }
        p.grad.add_assign(g);
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(S::zero());
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<S>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Number of completed optimizer steps.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Bias-corrected Adam update of every parameter; gradients are zeroed.
    pub fn adam_step(&mut self, lr: f64, cfg: &AdamConfig) -> Result<()> {
        self.adam_step_where(lr, cfg, |_| true)
    }

    /// Adam update restricted to parameters whose name satisfies `select`.
    /// Gradients of every parameter are zeroed afterwards.
    pub fn adam_step_where(&mut self, lr: f64, cfg: &AdamConfig, select: impl Fn(&str) -> bool) -> Result<()> {
        if let Some((name, _)) = self.params.iter().find(|(_, p)| p.grad.as_slice().iter().any(|g| g.is_nan())) {
            return Err(Error::NanGradient(name.clone()));
        }
        let (b1, b2) = (S::lit(cfg.beta1), S::lit(cfg.beta2));
        let eps = S::lit(cfg.eps);
        let lr = S::lit(lr);
        for (name, p) in self.params.iter_mut() {
            if !select(name) {
                continue;
            }
            p.steps += 1;
            let t = p.steps as i32;
            let c1 = S::one() - b1.powi(t);
            let c2 = S::one() - b2.powi(t);
            let Param { value, grad, m, v, .. } = p;
            for (((w, &g), mi), vi) in value
                .as_mut_slice()
                .iter_mut()
                .zip(grad.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mi = b1 * *mi + (S::one() - b1) * g;
                *vi = b2 * *vi + (S::one() - b2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        self.step += 1;
        self.zero_grads();
        Ok(())
    }

    /// Serializes parameter values in the JCMP format.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, p) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(p.value.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(p.value.cols() as u32).to_le_bytes());
            for v in p.value.as_slice() {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        out
    }

    /// Parses a JCMP buffer. Optimizer state starts fresh.
    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let version = u16::from_le_bytes(rd.array()?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let count = u32::from_le_bytes(rd.array()?) as usize;
        let mut store = Self::new();
        for _ in 0..count {
            let len = u32::from_le_bytes(rd.array()?) as usize;
            let name = std::str::from_utf8(rd.take(len)?)
                .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
                .to_string();
            let rows = u32::from_le_bytes(rd.array()?) as usize;
            let cols = u32::from_le_bytes(rd.array()?) as usize;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(S::lit(f64::from_le_bytes(rd.array()?)));
            }
            store.insert(name, Matrix::from_vec(rows, cols, data)?);
        }
        if rd.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(store)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_bytes())?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint_bytes(&std::fs::read(path)?)
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Format("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", Matrix::filled(1, 1, v));
        s
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut s = scalar_store(0.3);
        s.adam_step(0.1, &AdamConfig::default()).unwrap();
        assert_eq!(s.value("w").unwrap()[(0, 0)], 0.3);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so the step is lr * g / (|g| + ε)
        for g in [0.5, -2.0, 1e-3] {
            let mut s = scalar_store(1.0);
            s.accumulate_grad("w", &Matrix::filled(1, 1, g)).unwrap();
            s.adam_step(0.01, &AdamConfig::default()).unwrap();
            let moved = 1.0 - s.value("w").unwrap()[(0, 0)];
            let expect = 0.01 * g / (g.abs() + 1e-8);
            assert!((moved - expect).abs() < 1e-12, "g={g}: {moved} vs {expect}");
            assert_eq!(s.grad("w").unwrap()[(0, 0)], 0.0);
        }
    }

    #[test]
    fn zero_lr_updates_moments_only() {
        let mut s = scalar_store(1.0);
        s.accumulate_grad("w", &Matrix::filled(1, 1, 2.0)).unwrap();
        s.adam_step(0.0, &AdamConfig::default()).unwrap();
        let p = s.get("w").unwrap();
        assert_eq!(p.value[(0, 0)], 1.0);
        assert!((p.moments().0[(0, 0)] - 0.2).abs() < 1e-15);
        assert!((p.moments().1[(0, 0)] - 0.004).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut s = scalar_store(1.0);
        s.accumulate_grad("w", &Matrix::filled(1, 1, f64::NAN)).unwrap();
        assert!(matches!(s.adam_step(0.1, &AdamConfig::default()), Err(Error::NanGradient(n)) if n == "w"));
        assert_eq!(s.value("w").unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn checkpoint_roundtrip_and_corruption() {
        let mut s = ParamStore::<f64>::new();
        s.insert("enc.0.w", Matrix::from_vec(2, 3, vec![1.0, -2.5, 3.0, 0.125, 1e-300, -0.0]).unwrap());
        s.insert("enc.0.b", Matrix::zeros(1, 3));
        let bytes = s.to_checkpoint_bytes();
        assert_eq!(&bytes[..4], b"JCMP");
        let back = ParamStore::<f64>::from_checkpoint_bytes(&bytes).unwrap();
        assert_eq!(back.names().collect::<Vec<_>>(), vec!["enc.0.w", "enc.0.b"]);
        for (name, p) in s.iter() {
            let a: Vec<u64> = p.value.as_slice().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.value(name).unwrap().as_slice().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(ParamStore::<f64>::from_checkpoint_bytes(&bad), Err(Error::Format(_))));
        assert!(ParamStore::<f64>::from_checkpoint_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut ver = bytes;
        ver[4] = 9;
        assert!(ParamStore::<f64>::from_checkpoint_bytes(&ver).is_err());
    }
}
