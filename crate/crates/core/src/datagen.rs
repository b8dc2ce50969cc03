//! Deterministic synthetic sources: labeled vectors in `[0, 1]^k`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::autodiff::Reader;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const DATASET_MAGIC: &[u8; 4] = b"JCMD";
pub const DATASET_VERSION: u16 = 1;

/// Coordinate values class centers are drawn from.
const CENTER_LATTICE: [f32; 4] = [0.2, 0.4, 0.6, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    All,
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f32>,
    /// 0-based class index.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub k: usize,
    pub classes: usize,
    pub split: Split,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Source rows and labels for `idx`.
    pub fn batch<S: Scalar>(&self, idx: &[usize]) -> (Matrix<S>, Vec<usize>) {
        let mut data = Vec::with_capacity(idx.len() * self.k);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            let s = &self.samples[i];
            data.extend(s.x.iter().map(|&v| S::lit(f64::from(v))));
            labels.push(s.label);
        }
        (Matrix::from_vec(idx.len(), self.k, data).expect("sized"), labels)
    }

    pub fn all<S: Scalar>(&self) -> (Matrix<S>, Vec<usize>) {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }

    /// Disjoint shuffled split with `round(len * val_fraction)` validation samples.
    pub fn split(&self, val_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng::stream(seed, 0));
        let n_val = ((self.len() as f64) * val_fraction).round() as usize;
        let (val, train) = idx.split_at(n_val.min(self.len()));
        let pick = |ids: &[usize], split| {
            let mut ids = ids.to_vec();
            ids.sort_unstable();
            Dataset {
                samples: ids.iter().map(|&i| self.samples[i].clone()).collect(),
                k: self.k,
                classes: self.classes,
                split,
                seed: self.seed,
            }
        };
        (pick(train, Split::Train), pick(val, Split::Val))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for s in &self.samples {
            c[s.label] += 1;
        }
        c
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(22 + self.len() * (4 * self.k + 2));
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        out.extend_from_slice(&(self.classes as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for s in &self.samples {
            for v in &s.x {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&(s.label as u16).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(4)? != DATASET_MAGIC {
            return Err(Error::Format("bad dataset magic".into()));
        }
        let version = u16::from_le_bytes(rd.array()?);
        if version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let k = u32::from_le_bytes(rd.array()?) as usize;
        let classes = u32::from_le_bytes(rd.array()?) as usize;
        let n = u64::from_le_bytes(rd.array()?) as usize;
        let record = 4 * k + 2;
        if bytes.len() - rd.pos != n.saturating_mul(record) {
            return Err(Error::Format(format!("expected {n} records of {record} bytes")));
        }
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let x = (0..k).map(|_| rd.array().map(f32::from_le_bytes)).collect::<Result<Vec<_>>>()?;
            let label = u16::from_le_bytes(rd.array()?) as usize;
            if label >= classes {
                return Err(Error::InvalidLabel { label, classes });
            }
            samples.push(Sample { x, label });
        }
        Ok(Self { samples, k, classes, split: Split::All, seed: 0 })
    }
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, ds.to_bytes())?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::from_bytes(&std::fs::read(path)?)
}

fn check_dims(k: usize, classes: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Config { field: "k".into(), reason: format!("need k >= 2, got {k}") });
    }
    if classes < 2 {
        return Err(Error::Config { field: "classes".into(), reason: format!("need at least 2, got {classes}") });
    }
    Ok(())
}

/// Class centers on the lattice `{0.2, 0.4, 0.6, 0.8}^k`, pairwise distinct.
pub fn mixture_centers(k: usize, classes: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut r = rng::stream(seed, 1);
    let mut centers: Vec<Vec<f32>> = Vec::with_capacity(classes);
    while centers.len() < classes {
        let c: Vec<f32> = (0..k).map(|_| CENTER_LATTICE[r.random_range(0..CENTER_LATTICE.len())]).collect();
        if !centers.contains(&c) {
            centers.push(c);
        }
    }
    centers
}

/// Gaussian clusters around lattice centers, clipped to `[0, 1]`.
/// Samples are interleaved by class.
pub fn gen_gaussian_mixture(k: usize, classes: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    check_dims(k, classes)?;
    if classes > CENTER_LATTICE.len().pow(k.min(16) as u32) {
        return Err(Error::Config { field: "classes".into(), reason: "more classes than lattice centers".into() });
    }
    let centers = mixture_centers(k, classes, seed);
    let noise = Normal::new(0.0, spread.max(0.0)).map_err(|e| Error::Config { field: "spread".into(), reason: e.to_string() })?;
    let mut r = rng::stream(seed, 2);
    let mut samples = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for (label, c) in centers.iter().enumerate() {
            let x = c
                .iter()
                .map(|&m| {
                    let e = if spread > 0.0 { noise.sample(&mut r) } else { 0.0 };
                    (f64::from(m) + e).clamp(0.0, 1.0) as f32
                })
                .collect();
            samples.push(Sample { x, label });
        }
    }
    Ok(Dataset { samples, k, classes, split: Split::All, seed })
}

/// Noise-free pattern for shape class `label` (0 horizontal bar, 1 vertical
/// bar, 2 cross, 3 blank) on a `side x side` grid.
pub fn shape_template(side: usize, label: usize) -> Vec<f32> {
    let lo = 3 * side / 8;
    let hi = 5 * side / 8;
    let band = |v: usize| (lo..hi).contains(&v);
    let mut img = vec![0.0f32; side * side];
    for r in 0..side {
        for c in 0..side {
            let on = match label {
                0 => band(r),
                1 => band(c),
                2 => band(r) || band(c),
                _ => false,
            };
            if on {
                img[r * side + c] = 1.0;
            }
        }
    }
    img
}

/// Shape images with additive uniform noise on `[-noise, noise]`, clipped to `[0, 1]`.
pub fn gen_toy_images(side: usize, classes: usize, per_class: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if side != 8 && side != 16 {
        return Err(Error::Config { field: "side".into(), reason: format!("must be 8 or 16, got {side}") });
    }
    if !(2..=4).contains(&classes) {
        return Err(Error::Config { field: "classes".into(), reason: format!("toy images support 2..=4 classes, got {classes}") });
    }
    let templates: Vec<Vec<f32>> = (0..classes).map(|l| shape_template(side, l)).collect();
    let mut r = rng::stream(seed, 3);
    let mut samples = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for (label, t) in templates.iter().enumerate() {
            let x = t
                .iter()
                .map(|&v| {
                    let e = if noise > 0.0 { r.random_range(-noise..=noise) } else { 0.0 };
                    (f64::from(v) + e).clamp(0.0, 1.0) as f32
                })
                .collect();
            samples.push(Sample { x, label });
        }
    }
    Ok(Dataset { samples, k: side * side, classes, split: Split::All, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
        a.iter().zip(b).map(|(&x, &y)| f64::from(x - y).powi(2)).sum()
    }

    fn nearest_accuracy(ds: &Dataset, refs: &[Vec<f32>]) -> f64 {
        let hits = ds
            .samples
            .iter()
            .filter(|s| {
                let best = (0..refs.len())
                    .min_by(|&a, &b| sq_dist(&s.x, &refs[a]).total_cmp(&sq_dist(&s.x, &refs[b])))
                    .unwrap();
                best == s.label
            })
            .count();
        hits as f64 / ds.len() as f64
    }

    #[test]
    fn zero_spread_hits_centers() {
        let ds = gen_gaussian_mixture(6, 3, 5, 0.0, 4).unwrap();
        let centers = mixture_centers(6, 3, 4);
        for s in &ds.samples {
            assert_eq!(s.x, centers[s.label]);
        }
        assert_eq!(ds.class_counts(), vec![5, 5, 5]);
    }

    #[test]
    fn mixture_is_deterministic_and_learnable() {
        let a = gen_gaussian_mixture(16, 4, 250, 0.05, 17).unwrap();
        assert_eq!(a, gen_gaussian_mixture(16, 4, 250, 0.05, 17).unwrap());
        assert!(a.samples.iter().all(|s| s.x.iter().all(|&v| (0.0..=1.0).contains(&v))));
        let acc = nearest_accuracy(&a, &mixture_centers(16, 4, 17));
        assert!(acc > 0.99, "nearest-center accuracy {acc}");
    }

    #[test]
    fn toy_images() {
        let ds = gen_toy_images(8, 4, 3, 0.0, 1).unwrap();
        let blank: Vec<&Sample> = ds.samples.iter().filter(|s| s.label == 3).collect();
        assert!(blank.iter().all(|s| s.x.iter().all(|&v| v == 0.0)));
        for l in 0..4 {
            let cls: Vec<&Sample> = ds.samples.iter().filter(|s| s.label == l).collect();
            assert!(cls.windows(2).all(|w| w[0].x == w[1].x));
        }
        let noisy = gen_toy_images(8, 4, 100, 0.1, 2).unwrap();
        let refs: Vec<Vec<f32>> = (0..4).map(|l| shape_template(8, l)).collect();
        assert!(nearest_accuracy(&noisy, &refs) > 0.95);
        assert!(gen_toy_images(10, 4, 1, 0.0, 0).is_err());
        assert!(gen_toy_images(8, 5, 1, 0.0, 0).is_err());
        assert_eq!(gen_toy_images(16, 2, 1, 0.0, 0).unwrap().k, 256);
    }

    #[test]
    fn file_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_gaussian_mixture(5, 3, 4, 0.1, 9).unwrap();
        let path = dir.path().join("d.jcmd");
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.samples, ds.samples);
        assert_eq!((back.k, back.classes), (5, 3));

        let mut bytes = ds.to_bytes();
        assert!(Dataset::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        bytes[4] = 7;
        assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Format(_))));
        bytes[0] = b'Q';
        assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Format(_))));

        let empty = Dataset { samples: vec![], k: 4, classes: 2, split: Split::All, seed: 0 };
        let e = Dataset::from_bytes(&empty.to_bytes()).unwrap();
        assert!(e.is_empty());
        assert_eq!(e.k, 4);
    }

    #[test]
    fn split_is_disjoint() {
        let ds = gen_gaussian_mixture(4, 2, 50, 0.1, 3).unwrap();
        let (tr, va) = ds.split(0.2, 5);
        assert_eq!(va.len(), 20);
        assert_eq!(tr.len() + va.len(), ds.len());
        for s in &va.samples {
            assert!(!tr.samples.iter().any(|t| t == s));
        }
    }

    proptest! {
        #[test]
        fn roundtrip_any_mixture(k in 2usize..8, classes in 2usize..5, per in 0usize..6, seed in any::<u64>()) {
            let ds = gen_gaussian_mixture(k, classes, per, 0.2, seed).unwrap();
            let back = Dataset::from_bytes(&ds.to_bytes()).unwrap();
            prop_assert_eq!(back.samples, ds.samples);
        }
    }
}
