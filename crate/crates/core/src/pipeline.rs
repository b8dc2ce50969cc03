//! End-to-end chain: source → encoder-modulator → AWGN → semantic and source
//! decoders. Owns training and evaluation for JCM and, through [`Method`],
//! for the baseline transmitters that share the same encoder/decoder shells.

use num_complex::Complex;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::autodiff::{
    mlp_forward, power_normalize_value, AdamConfig, CosineSchedule, Head, Mlp, MlpSpec, ParamStore, Tape, Var,
};
use crate::baselines::{hard_soft_project, QuantizerKind};
use crate::channel::{fill_real_noise, ChannelConfig};
use crate::constellation::{normalize_power, ComplexSequence, Constellation, Scheme};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::gumbel::{gumbel_matrix, gumbel_max_sample, st_modulate, GumbelNoise, RelaxedSymbols};
use crate::loss::{psnr_db, vilb_on_tape, LossConfig};
use crate::metrics::accuracy;
use crate::rng::{self, Rng};
use crate::scalar::Scalar;
use crate::tensor::Matrix;
use crate::transition::{pmf_from_logits, TransitionPmf, PROB_FLOOR};

const TAG_INIT: u64 = 1;
const TAG_SHUFFLE: u64 = 2;
const TAG_NOISE: u64 = 3;
const TAG_EVAL: u64 = 4;

/// Channel uses per source dimension.
pub fn rate(positions: usize, source_dim: usize) -> f64 {
    positions as f64 / source_dim as f64
}

/// How symbols are produced from the encoder output.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Learned categorical transition probabilities, Gumbel-Max sampling.
    Jcm,
    /// Unconstrained real outputs sent directly.
    Analog,
    /// One real output per channel use sent on the I axis; pretraining stage
    /// of the quantized baselines, whose encoders share this shape.
    AnalogReal,
    /// Nearest-symbol projection forward, distance-softmax surrogate backward.
    HardSoft { temperature: f64 },
    /// Frozen encoder followed by a fixed per-axis quantizer.
    Quantized(QuantizerKind),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Jcm => "jcm",
            Method::Analog => "analog",
            Method::AnalogReal => "analog_real",
            Method::HardSoft { .. } => "deepjscc_q",
            Method::Quantized(QuantizerKind::Uniform { .. }) => "uniform",
            Method::Quantized(QuantizerKind::Learned(_)) => "nn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerNorm {
    PerSequence,
    PerBatch,
}

/// Whether the transmitted value is the hard symbol (with the relaxed
/// surrogate carrying the gradient) or the relaxed surrogate itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relaxation {
    StraightThrough,
    Soft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub method: Method,
    pub scheme: Scheme,
    pub order: usize,
    pub positions: usize,
    pub source_dim: usize,
    pub classes: usize,
    pub encoder_hidden: Vec<usize>,
    pub semantic_hidden: Vec<usize>,
    pub source_hidden: Vec<usize>,
    pub snr_db: f64,
    pub power: f64,
    pub lambda: f64,
    pub temperature: f64,
    pub power_norm: PowerNorm,
}

impl ModelConfig {
    pub fn jcm(scheme: Scheme, order: usize, positions: usize, source_dim: usize, classes: usize) -> Self {
        Self {
            method: Method::Jcm,
            scheme,
            order,
            positions,
            source_dim,
            classes,
            encoder_hidden: vec![64],
            semantic_hidden: vec![64],
            source_hidden: vec![64],
            snr_db: 12.0,
            power: 1.0,
            lambda: 1.0,
            temperature: crate::gumbel::DEFAULT_TEMPERATURE,
            power_norm: PowerNorm::PerSequence,
        }
    }
}

/// Encoder, decoders and their parameters. Decoders only ever see `ẑ`.
#[derive(Debug, Clone)]
pub struct JcmModel<S> {
    pub method: Method,
    pub constellation: Constellation<S>,
    pub positions: usize,
    pub source_dim: usize,
    pub classes: usize,
    pub encoder: Mlp,
    pub semantic: Mlp,
    pub source: Mlp,
    pub channel: ChannelConfig,
    pub loss: LossConfig,
    pub temperature: f64,
    pub power_norm: PowerNorm,
    pub store: ParamStore<S>,
}

/// Frozen per-sample randomness for one forward pass.
#[derive(Debug, Clone)]
pub struct BatchNoise<S> {
    /// Gumbel noise in encoder-logit layout (JCM only; empty otherwise).
    pub gumbel: Matrix<S>,
    /// Real channel noise, `[I.., Q..]` per row.
    pub channel: Matrix<S>,
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub class_logits: Var,
    pub reconstruction: Var,
    pub transmitted: Var,
    pub received: Var,
    /// Hard constellation point per position, one row per sample (digital methods).
    pub symbols: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_acc: f64,
    pub val_psnr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    /// One step on all parameters per minibatch.
    Joint,
    /// Decoder step followed by an encoder step per minibatch.
    Alternating,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: CosineSchedule,
    pub adam: AdamConfig,
    pub update: UpdateMode,
    /// Symbol-sequence draws per example per step.
    pub draws: usize,
    /// Noise draws per validation sample.
    pub eval_draws: usize,
    /// Parameters under these prefixes are not updated.
    pub frozen: Vec<String>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 32,
            schedule: CosineSchedule::default(),
            adam: AdamConfig::default(),
            update: UpdateMode::Joint,
            draws: 1,
            eval_draws: 1,
            frozen: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalMetrics {
    pub accuracy: f64,
    /// Per-element reconstruction MSE.
    pub mse: f64,
    pub psnr_db: f64,
    pub loss: f64,
    /// Hard symbols used, concatenated over samples and draws.
    pub symbols: Vec<usize>,
}

/// Result of [`JcmModel::encode_modulate`] for one sample.
#[derive(Debug, Clone)]
pub struct Encoded<S> {
    pub pmf: TransitionPmf<S>,
    pub sequence: ComplexSequence<S>,
    pub relaxed: RelaxedSymbols<S>,
}

impl<S: Scalar> JcmModel<S> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let constellation = Constellation::new(cfg.scheme, cfg.order)?;
        if cfg.positions == 0 || cfg.source_dim == 0 {
            return Err(Error::Config { field: "n".into(), reason: "channel uses and source dimension must be positive".into() });
        }
        let g = constellation.groups();
        let enc_out = match cfg.method {
            Method::Jcm => cfg.positions * g * constellation.categories(),
            Method::Analog | Method::HardSoft { .. } => cfg.positions * g,
            Method::AnalogReal | Method::Quantized(_) => cfg.positions,
        };
        let rx = 2 * cfg.positions;
        let encoder = Mlp::new("enc", MlpSpec::relu(cfg.source_dim, &cfg.encoder_hidden, enc_out, match cfg.method {
            Method::Jcm => Head::Logits,
            _ => Head::Linear,
        }))?;
        let semantic = Mlp::new("sem", MlpSpec::relu(rx, &cfg.semantic_hidden, cfg.classes, Head::Logits))?;
        let source = Mlp::new("src", MlpSpec::relu(rx, &cfg.source_hidden, cfg.source_dim, Head::Linear))?;
        let mut store = ParamStore::new();
        let mut r = rng::stream(rng::derive(seed, TAG_INIT), 0);
        encoder.init(&mut store, &mut r);
        semantic.init(&mut store, &mut r);
        source.init(&mut store, &mut r);
        if !(cfg.temperature > 0.0) {
            return Err(Error::Config { field: "rho".into(), reason: "temperature must be positive".into() });
        }
        Ok(Self {
            method: cfg.method.clone(),
            constellation,
            positions: cfg.positions,
            source_dim: cfg.source_dim,
            classes: cfg.classes,
            encoder,
            semantic,
            source,
            channel: ChannelConfig::new(cfg.snr_db, cfg.power)?,
            loss: LossConfig::new(cfg.lambda, cfg.classes)?,
            temperature: cfg.temperature,
            power_norm: cfg.power_norm,
            store,
        })
    }

    /// The same parameters under another transmitter with the same encoder
    /// shape (e.g. a pretrained real-analog encoder behind a quantizer).
    pub fn with_method(&self, method: Method) -> Result<Self> {
        let compatible = matches!(
            (&self.method, &method),
            (Method::AnalogReal | Method::Quantized(_), Method::AnalogReal | Method::Quantized(_))
                | (Method::Analog | Method::HardSoft { .. }, Method::Analog | Method::HardSoft { .. })
                | (Method::Jcm, Method::Jcm)
        );
        if !compatible {
            return Err(Error::Config { field: "method".into(), reason: format!("{} encoder cannot drive {}", self.method.name(), method.name()) });
        }
        Ok(Self { method, ..self.clone() })
    }

    /// Raw encoder outputs for every sample of `ds`.
    pub fn encoder_outputs(&self, ds: &Dataset) -> Result<Matrix<S>> {
        let (x, _) = ds.all::<S>();
        Ok(mlp_forward(&self.store, &self.encoder, &x)?.0)
    }

    pub fn rate(&self) -> f64 {
        rate(self.positions, self.source_dim)
    }

    fn groups(&self) -> usize {
        self.constellation.groups()
    }

    fn per_batch(&self) -> bool {
        self.power_norm == PowerNorm::PerBatch
    }

    fn gumbel_width(&self) -> usize {
        match self.method {
            Method::Jcm => self.positions * self.groups() * self.constellation.categories(),
            _ => 0,
        }
    }

    /// Draws the per-sample Gumbel noise (`groups * n` rows of categories).
    pub fn sample_gumbel_noise(&self, r: &mut Rng) -> GumbelNoise<S> {
        let rows = self.positions * self.groups();
        GumbelNoise { values: gumbel_matrix(r, rows, self.constellation.categories()), seed: None }
    }

    /// Draws frozen noise for one sample from its own stream.
    fn sample_noise_row(&self, r: &mut Rng, gumbel_row: &mut [S], channel_row: &mut [S]) {
        if matches!(self.method, Method::Jcm) {
            let noise = self.sample_gumbel_noise(r);
            let (n, g, c) = (self.positions, self.groups(), self.constellation.categories());
            for gi in 0..g {
                for i in 0..n {
                    let src = noise.values.row(gi * n + i);
                    let base = (i * g + gi) * c;
                    gumbel_row[base..base + c].copy_from_slice(src);
                }
            }
        }
        fill_real_noise(r, self.channel.component_std(), channel_row);
    }

    /// Noise for `rows` samples, sample `r` drawn from stream `streams[r]` under `seed`.
    pub fn sample_noise(&self, seed: u64, streams: &[u64]) -> BatchNoise<S> {
        let mut gumbel = Matrix::zeros(streams.len(), self.gumbel_width());
        let mut channel = Matrix::zeros(streams.len(), 2 * self.positions);
        for (row, &s) in streams.iter().enumerate() {
            let mut r = rng::stream(seed, s);
            self.sample_noise_row(&mut r, gumbel.row_mut(row), channel.row_mut(row));
        }
        BatchNoise { gumbel, channel }
    }

    /// Records the full chain for the source rows `x` on `tape`.
    pub fn forward(&self, tape: &mut Tape<S>, store: &ParamStore<S>, x: &Matrix<S>, noise: &BatchNoise<S>, mode: Relaxation) -> Result<ForwardPass> {
        if x.cols() != self.source_dim {
            return Err(Error::Shape(format!("source width {} != {}", x.cols(), self.source_dim)));
        }
        let b = x.rows();
        let n = self.positions;
        let power = S::lit(self.channel.power);
        let xin = tape.constant(x.clone());
        let enc = self.encoder.forward(tape, store, xin)?;
        let (transmitted, symbols) = match &self.method {
            Method::Jcm => {
                let (z, sym) = self.jcm_modulate(tape, enc, &noise.gumbel, mode)?;
                (z, Some(sym))
            }
            Method::Analog => {
                let iq = self.pad_to_iq(tape, enc)?;
                (tape.power_normalize(iq, n, power, self.per_batch())?, None)
            }
            Method::AnalogReal => {
                let zeros = tape.constant(Matrix::zeros(b, n));
                let iq = tape.concat_cols(enc, zeros)?;
                (tape.power_normalize(iq, n, power, self.per_batch())?, None)
            }
            Method::HardSoft { temperature } => {
                let iq = self.pad_to_iq(tape, enc)?;
                let soft = tape.distance_softmax(iq, self.constellation.points(), S::lit(*temperature))?;
                let soft_n = tape.power_normalize(soft, n, power, self.per_batch())?;
                let mut hard = Matrix::zeros(b, 2 * n);
                let mut sym = Vec::with_capacity(b);
                for r in 0..b {
                    let row = tape.value(iq).row(r).to_vec();
                    let (vals, idx) = hard_soft_project(&row, &self.constellation);
                    hard.row_mut(r).copy_from_slice(&vals);
                    sym.push(idx);
                }
                let z = match mode {
                    Relaxation::Soft => soft_n,
                    Relaxation::StraightThrough => {
                        let hard_n = power_normalize_value(&hard, n, power, self.per_batch())?;
                        tape.straight_through(hard_n, soft_n)?
                    }
                };
                (z, Some(sym))
            }
            Method::Quantized(kind) => {
                let enc_v = tape.value(enc).clone();
                let mut hard = Matrix::zeros(b, 2 * n);
                let mut sym = Vec::with_capacity(b);
                for r in 0..b {
                    let (vals, idx) = kind.quantize_row(enc_v.row(r), &self.constellation);
                    hard.row_mut(r).copy_from_slice(&vals);
                    sym.push(idx);
                }
                let hard_n = power_normalize_value(&hard, n, power, self.per_batch())?;
                (tape.constant(hard_n), Some(sym))
            }
        };
        let received = tape.add_const(transmitted, &noise.channel)?;
        let class_logits = self.semantic.forward(tape, store, received)?;
        let reconstruction = self.source.forward(tape, store, received)?;
        Ok(ForwardPass { class_logits, reconstruction, transmitted, received, symbols })
    }

    /// BPSK transmitters fill only the I half; Q stays zero.
    fn pad_to_iq(&self, tape: &mut Tape<S>, v: Var) -> Result<Var> {
        match self.constellation.scheme() {
            Scheme::Bpsk => {
                let zeros = tape.constant(Matrix::zeros(tape.value(v).rows(), self.positions));
                tape.concat_cols(v, zeros)
            }
            Scheme::RectQam => Ok(v),
        }
    }

    fn jcm_modulate(&self, tape: &mut Tape<S>, logits: Var, gumbel: &Matrix<S>, mode: Relaxation) -> Result<(Var, Vec<Vec<usize>>)> {
        let (n, g, c) = (self.positions, self.groups(), self.constellation.categories());
        let eps = S::lit(PROB_FLOOR);
        let probs = tape.softmax_groups(logits, c)?;
        let probs = tape.affine(probs, S::one() - eps * S::lit(c as f64), eps);
        let log_probs = tape.log(probs);
        let perturbed = tape.add_const(log_probs, gumbel)?;
        let scaled = tape.scale(perturbed, S::one() / S::lit(self.temperature));
        let relaxed = tape.softmax_groups(scaled, c)?;
        let levels = self.constellation.axis_levels();
        let soft = tape.group_dot(relaxed, &levels, n, g)?;
        let soft = self.pad_to_iq(tape, soft)?;
        let power = S::lit(self.channel.power);
        let soft_n = tape.power_normalize(soft, n, power, self.per_batch())?;

        let pv = tape.value(probs);
        let b = pv.rows();
        let mut hard = Matrix::zeros(b, 2 * n);
        let mut symbols = Vec::with_capacity(b);
        for r in 0..b {
            let prow = pv.row(r);
            let grow = gumbel.row(r);
            let mut sym = Vec::with_capacity(n);
            for i in 0..n {
                let mut idx = [0usize; 2];
                for (gi, slot) in idx.iter_mut().enumerate().take(g) {
                    let base = (i * g + gi) * c;
                    let h = gumbel_max_sample(&prow[base..base + c], &grow[base..base + c]);
                    hard[(r, gi * n + i)] = levels[h];
                    *slot = h;
                }
                sym.push(self.constellation.symbol_index(&idx[..g]));
            }
            symbols.push(sym);
        }
        let z = match mode {
            Relaxation::Soft => soft_n,
            Relaxation::StraightThrough => {
                let hard_n = power_normalize_value(&hard, n, power, self.per_batch())?;
                tape.straight_through(hard_n, soft_n)?
            }
        };
        Ok((z, symbols))
    }

    /// Records forward pass and loss for a batch with frozen noise.
    pub fn loss_on_tape(&self, store: &ParamStore<S>, x: &Matrix<S>, labels: &[usize], noise: &BatchNoise<S>, mode: Relaxation) -> Result<(Tape<S>, Var, ForwardPass)> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, store, x, noise, mode)?;
        let vars = vilb_on_tape(&mut tape, fwd.class_logits, labels, x, fwd.reconstruction, &self.loss)?;
        Ok((tape, vars.total, fwd))
    }

    /// Encoder logits → PMF → shared-noise hard/relaxed symbols → power
    /// normalization, for each source row (JCM only).
    pub fn encode_modulate(&self, x: &Matrix<S>, seed: u64) -> Result<Vec<Encoded<S>>> {
        if !matches!(self.method, Method::Jcm) {
            return Err(Error::Config { field: "method".into(), reason: "encode_modulate needs the JCM method".into() });
        }
        let (logits, _, _) = mlp_forward(&self.store, &self.encoder, x)?;
        let (n, g, c) = (self.positions, self.groups(), self.constellation.categories());
        let power = S::lit(self.channel.power);
        (0..x.rows())
            .map(|r| {
                let per_pos = Matrix::from_vec(n, g * c, logits.row(r).to_vec())?;
                let pmf = pmf_from_logits(&per_pos, &self.constellation)?;
                let noise = self.sample_gumbel_noise(&mut rng::stream(seed, r as u64));
                let m = st_modulate(&pmf, &noise, S::lit(self.temperature), &self.constellation)?;
                let sequence = normalize_power(&m.forward, power)?;
                Ok(Encoded { pmf, sequence, relaxed: m.relaxed })
            })
            .collect()
    }

    /// Semantic posterior (softmax) and source reconstruction from received
    /// rows laid out `[I.., Q..]`.
    pub fn decode(&self, received: &Matrix<S>) -> Result<(Matrix<S>, Matrix<S>)> {
        if received.cols() != 2 * self.positions {
            return Err(Error::Shape(format!("received width {} != {}", received.cols(), 2 * self.positions)));
        }
        let (logits, _, _) = mlp_forward(&self.store, &self.semantic, received)?;
        let (recon, _, _) = mlp_forward(&self.store, &self.source, received)?;
        let mut post = Matrix::zeros(logits.rows(), logits.cols());
        for r in 0..logits.rows() {
            let row = logits.row(r);
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let total: S = row.iter().map(|&v| (v - max).exp()).sum();
            for (o, &v) in post.row_mut(r).iter_mut().zip(row) {
                *o = (v - max).exp() / total;
            }
        }
        Ok((post, recon))
    }

    fn is_frozen(opts: &TrainOptions, name: &str) -> bool {
        opts.frozen.iter().any(|p| name.starts_with(p.as_str()))
    }

    /// Minibatch training with the cosine schedule; logs validation metrics
    /// after every epoch. On a non-finite loss the parameters are restored
    /// to the last completed epoch and an error is returned.
    pub fn train(&mut self, train: &Dataset, val: &Dataset, opts: &TrainOptions, seed: u64) -> Result<Vec<EpochLog>> {
        if train.is_empty() {
            return Err(Error::Config { field: "dataset".into(), reason: "training set is empty".into() });
        }
        if opts.batch_size == 0 || opts.draws == 0 {
            return Err(Error::Config { field: "batch_size".into(), reason: "batch size and draws must be positive".into() });
        }
        let mut logs = Vec::with_capacity(opts.epochs);
        let mut last_good = self.store.clone();
        let encoder = self.encoder.clone();
        for epoch in 0..opts.epochs {
            let lr = opts.schedule.lr(epoch as f64);
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut rng::stream(rng::derive(seed, TAG_SHUFFLE), epoch as u64));
            let noise_seed = rng::derive(rng::derive(seed, TAG_NOISE), epoch as u64);
            let mut total = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(opts.batch_size) {
                let idx: Vec<usize> = chunk.iter().flat_map(|&i| std::iter::repeat(i).take(opts.draws)).collect();
                let streams: Vec<u64> = chunk
                    .iter()
                    .flat_map(|&i| (0..opts.draws).map(move |d| (i * opts.draws + d) as u64))
                    .collect();
                let (x, labels) = train.batch::<S>(&idx);
                let noise = self.sample_noise(noise_seed, &streams);
                let (tape, loss, _) = self.loss_on_tape(&self.store, &x, &labels, &noise, Relaxation::StraightThrough)?;
                let value = tape.value(loss)[(0, 0)].as_f64();
                if !value.is_finite() {
                    self.store = last_good;
                    return Err(Error::NonFiniteLoss { epoch: epoch + 1 });
                }
                tape.backward(loss, S::one(), &mut self.store)?;
                match opts.update {
                    UpdateMode::Joint => {
                        self.store.adam_step_where(lr, &opts.adam, |n| !Self::is_frozen(opts, n))?;
                    }
                    UpdateMode::Alternating => {
                        self.store.adam_step_where(lr, &opts.adam, |n| !encoder.owns(n) && !Self::is_frozen(opts, n))?;
                        let (tape, loss, _) = self.loss_on_tape(&self.store, &x, &labels, &noise, Relaxation::StraightThrough)?;
                        tape.backward(loss, S::one(), &mut self.store)?;
                        self.store.adam_step_where(lr, &opts.adam, |n| encoder.owns(n) && !Self::is_frozen(opts, n))?;
                    }
                }
                total += value;
                batches += 1;
            }
            let train_loss = total / batches as f64;
            let (val_acc, val_psnr) = if val.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let m = self.evaluate(val, opts.eval_draws, rng::derive(seed, TAG_EVAL))?;
                (m.accuracy, m.psnr_db)
            };
            last_good = self.store.clone();
            logs.push(EpochLog { epoch: epoch + 1, lr, train_loss, val_acc, val_psnr });
        }
        Ok(logs)
    }

    /// Accuracy and PSNR with hard symbols only, averaged over `draws`
    /// noise realizations per sample.
    pub fn evaluate(&self, ds: &Dataset, draws: usize, seed: u64) -> Result<EvalMetrics> {
        const CHUNK: usize = 256;
        let draws = draws.max(1);
        let jobs: Vec<(usize, Vec<usize>)> = (0..draws)
            .flat_map(|d| {
                (0..ds.len()).collect::<Vec<_>>().chunks(CHUNK).map(move |c| (d, c.to_vec())).collect::<Vec<_>>()
            })
            .collect();
        let parts = jobs
            .par_iter()
            .map(|(d, idx)| -> Result<(f64, f64, f64, usize, Vec<usize>)> {
                let (x, labels) = ds.batch::<S>(idx);
                let streams: Vec<u64> = idx.iter().map(|&i| (i * draws + d) as u64).collect();
                let noise = self.sample_noise(seed, &streams);
                let (tape, loss, fwd) = self.loss_on_tape(&self.store, &x, &labels, &noise, Relaxation::StraightThrough)?;
                let logits = tape.value(fwd.class_logits);
                let recon = tape.value(fwd.reconstruction);
                let hits = accuracy(logits, &labels) * idx.len() as f64;
                let sq: f64 = recon.as_slice().iter().zip(x.as_slice()).map(|(&a, &b)| (a - b).as_f64().powi(2)).sum();
                let loss = tape.value(loss)[(0, 0)].as_f64() * idx.len() as f64;
                let symbols = fwd.symbols.map(|s| s.concat()).unwrap_or_default();
                Ok((hits, sq, loss, idx.len(), symbols))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut hits = 0.0;
        let mut sq = 0.0;
        let mut loss = 0.0;
        let mut count = 0usize;
        let mut symbols = Vec::new();
        for (h, s, l, c, sym) in parts {
            hits += h;
            sq += s;
            loss += l;
            count += c;
            symbols.extend(sym);
        }
        let mse = sq / (count * self.source_dim) as f64;
        Ok(EvalMetrics { accuracy: hits / count as f64, mse, psnr_db: psnr_db(mse), loss: loss / count as f64, symbols })
    }

    /// Hard symbol indices for every sample of `ds`, one draw each.
    pub fn symbol_usage(&self, ds: &Dataset, seed: u64) -> Result<Vec<usize>> {
        Ok(self.evaluate(ds, 1, seed)?.symbols)
    }

    /// Power-normalized transmitted rows for source rows `x` (hard symbols).
    pub fn transmit_rows(&self, x: &Matrix<S>, seed: u64) -> Result<Matrix<S>> {
        let streams: Vec<u64> = (0..x.rows() as u64).collect();
        let noise = self.sample_noise(seed, &streams);
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, &self.store, x, &noise, Relaxation::StraightThrough)?;
        Ok(tape.value(fwd.transmitted).clone())
    }
}

/// `[I.., Q..]` row as complex values.
pub fn row_to_complex<S: Scalar>(row: &[S]) -> Vec<Complex<S>> {
    let n = row.len() / 2;
    (0..n).map(|i| Complex::new(row[i], row[n + i])).collect()
}
