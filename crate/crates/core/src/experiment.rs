//! Sweep configuration and orchestration: flat `key = value` configs, one
//! cell per (method, SNR, seed), and the on-disk artifacts of a run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::autodiff::{AdamConfig, CosineSchedule};
use crate::baselines::{learned_quantizer_train, LearnedQuantOptions, QuantizerKind, HARD_SOFT_TEMPERATURE};
use crate::constellation::{Constellation, Scheme};
use crate::datagen::{gen_gaussian_mixture, gen_toy_images, save_dataset, Dataset};
use crate::error::{Error, Result};
use crate::gumbel::DEFAULT_TEMPERATURE;
use crate::loss::default_lambda;
use crate::metrics::{empirical_constellation_pmf, ShapingReport};
use crate::pipeline::{rate, EpochLog, JcmModel, Method, ModelConfig, PowerNorm, TrainOptions, UpdateMode};
use crate::rng;

const TAG_DATA: u64 = 11;
const TAG_SPLIT: u64 = 12;
const TAG_MODEL: u64 = 13;
const TAG_TRAIN: u64 = 14;
const TAG_EVAL: u64 = 15;
const TAG_QUANT: u64 = 16;

pub const RESULTS_HEADER: &str = "method,scheme,M,n,rate,snr_db,lambda,seed,accuracy,psnr_db,final_loss";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodKind {
    Jcm,
    Analog,
    Uniform,
    Nn,
    DeepJsccQ,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Jcm => "jcm",
            Self::Analog => "analog",
            Self::Uniform => "uniform",
            Self::Nn => "nn",
            Self::DeepJsccQ => "deepjscc_q",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "jcm" => Self::Jcm,
            "analog" => Self::Analog,
            "uniform" => Self::Uniform,
            "nn" => Self::Nn,
            "deepjscc_q" => Self::DeepJsccQ,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    GaussianMixture { k: usize, classes: usize, per_class: usize, spread: f64 },
    ToyImages { side: usize, classes: usize, per_class: usize, noise: f64 },
}

impl DatasetSpec {
    pub fn source_dim(&self) -> usize {
        match self {
            Self::GaussianMixture { k, .. } => *k,
            Self::ToyImages { side, .. } => side * side,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Self::GaussianMixture { classes, .. } | Self::ToyImages { classes, .. } => *classes,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        match *self {
            Self::GaussianMixture { k, classes, per_class, spread } => gen_gaussian_mixture(k, classes, per_class, spread, seed),
            Self::ToyImages { side, classes, per_class, noise } => gen_toy_images(side, classes, per_class, noise, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub order: usize,
    pub n: usize,
    pub snr_db: Vec<f64>,
    /// One λ per SNR; `None` falls back to the tabulated map.
    pub lambda: Option<Vec<f64>>,
    pub rho: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub lr_period: f64,
    pub encoder_hidden: Vec<usize>,
    pub semantic_hidden: Vec<usize>,
    pub source_hidden: Vec<usize>,
    pub dataset: DatasetSpec,
    pub val_fraction: f64,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodKind>,
    pub output_dir: PathBuf,
    pub power: f64,
    pub power_norm: PowerNorm,
    pub update: UpdateMode,
    pub draws: usize,
    pub eval_draws: usize,
    pub hardsoft_temperature: f64,
    pub quantizer_epochs: usize,
    pub save_checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let schedule = CosineSchedule::default();
        Self {
            scheme: Scheme::RectQam,
            order: 4,
            n: 16,
            snr_db: vec![12.0],
            lambda: None,
            rho: DEFAULT_TEMPERATURE,
            epochs: 100,
            batch_size: 32,
            lr_max: schedule.lr_max,
            lr_min: schedule.lr_min,
            lr_period: schedule.period,
            encoder_hidden: vec![128],
            semantic_hidden: vec![128],
            source_hidden: vec![128],
            dataset: DatasetSpec::GaussianMixture { k: 16, classes: 4, per_class: 1000, spread: 0.05 },
            val_fraction: 0.2,
            seeds: vec![1],
            methods: vec![MethodKind::Jcm],
            output_dir: PathBuf::from("out"),
            power: 1.0,
            power_norm: PowerNorm::PerSequence,
            update: UpdateMode::Joint,
            draws: 1,
            eval_draws: 4,
            hardsoft_temperature: HARD_SOFT_TEMPERATURE,
            quantizer_epochs: 30,
            save_checkpoints: true,
        }
    }
}

fn cfg_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config { field: field.into(), reason: reason.into() }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| cfg_err(key, format!("cannot parse {v:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_num(key, s)).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(cfg_err(key, format!("expected true/false, got {v:?}"))),
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment, list values are
    /// comma-separated. Unknown and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| cfg_err(&format!("line {}", lineno + 1), "expected key = value"))?;
            let k = k.trim().to_string();
            if kv.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(cfg_err(&k, "given more than once"));
            }
        }
        let mut cfg = Self::default();
        let mut data_kind = String::from("gaussian_mixture");
        let (mut k, mut classes, mut per_class, mut spread) = (16usize, 4usize, 1000usize, 0.05f64);
        let (mut side, mut noise) = (8usize, 0.1f64);
        for (key, v) in &kv {
            let key = key.as_str();
            match key {
                "scheme" => {
                    cfg.scheme = match v.as_str() {
                        "bpsk" => Scheme::Bpsk,
                        "qam" => Scheme::RectQam,
                        _ => return Err(cfg_err(key, format!("expected bpsk or qam, got {v:?}"))),
                    }
                }
                "M" | "order" => cfg.order = parse_num(key, v)?,
                "n" => cfg.n = parse_num(key, v)?,
                "snr_db" => cfg.snr_db = parse_list(key, v)?,
                "lambda" => cfg.lambda = Some(parse_list(key, v)?),
                "rho" => cfg.rho = parse_num(key, v)?,
                "epochs" => cfg.epochs = parse_num(key, v)?,
                "batch_size" => cfg.batch_size = parse_num(key, v)?,
                "lr_max" => cfg.lr_max = parse_num(key, v)?,
                "lr_min" => cfg.lr_min = parse_num(key, v)?,
                "lr_period" => cfg.lr_period = parse_num(key, v)?,
                "encoder_hidden" => cfg.encoder_hidden = parse_list(key, v)?,
                "semantic_hidden" => cfg.semantic_hidden = parse_list(key, v)?,
                "source_hidden" => cfg.source_hidden = parse_list(key, v)?,
                "dataset" => data_kind = v.clone(),
                "k" => k = parse_num(key, v)?,
                "classes" => classes = parse_num(key, v)?,
                "per_class" => per_class = parse_num(key, v)?,
                "spread" => spread = parse_num(key, v)?,
                "side" => side = parse_num(key, v)?,
                "noise" => noise = parse_num(key, v)?,
                "val_fraction" => cfg.val_fraction = parse_num(key, v)?,
                "seeds" => cfg.seeds = parse_list(key, v)?,
                "methods" => {
                    cfg.methods = v
                        .split(',')
                        .map(|s| MethodKind::parse(s.trim()).ok_or_else(|| cfg_err(key, format!("unknown method {:?}", s.trim()))))
                        .collect::<Result<_>>()?
                }
                "output_dir" => cfg.output_dir = PathBuf::from(v),
                "power" => cfg.power = parse_num(key, v)?,
                "power_norm" => {
                    cfg.power_norm = match v.as_str() {
                        "sequence" => PowerNorm::PerSequence,
                        "batch" => PowerNorm::PerBatch,
                        _ => return Err(cfg_err(key, format!("expected sequence or batch, got {v:?}"))),
                    }
                }
                "update" => {
                    cfg.update = match v.as_str() {
                        "joint" => UpdateMode::Joint,
                        "alternating" => UpdateMode::Alternating,
                        _ => return Err(cfg_err(key, format!("expected joint or alternating, got {v:?}"))),
                    }
                }
                "draws" => cfg.draws = parse_num(key, v)?,
                "eval_draws" => cfg.eval_draws = parse_num(key, v)?,
                "hardsoft_temperature" => cfg.hardsoft_temperature = parse_num(key, v)?,
                "quantizer_epochs" => cfg.quantizer_epochs = parse_num(key, v)?,
                "save_checkpoints" => cfg.save_checkpoints = parse_bool(key, v)?,
                _ => return Err(cfg_err(key, "unknown key")),
            }
        }
        cfg.dataset = match data_kind.as_str() {
            "gaussian_mixture" => DatasetSpec::GaussianMixture { k, classes, per_class, spread },
            "toy_images" => DatasetSpec::ToyImages { side, classes, per_class, noise },
            other => return Err(cfg_err("dataset", format!("unknown dataset {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| cfg_err("config", format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    /// Replaces the seed list with a single master seed when `value` is set.
    pub fn override_seed(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.seeds = vec![parse_num("JCM_SEED", v)?];
        }
        Ok(())
    }

    pub fn rate(&self) -> f64 {
        rate(self.n, self.dataset.source_dim())
    }

    /// λ for the `i`-th SNR.
    pub fn lambda_at(&self, i: usize) -> Result<f64> {
        match &self.lambda {
            Some(l) if l.len() == 1 => Ok(l[0]),
            Some(l) => l.get(i).copied().ok_or_else(|| cfg_err("lambda", "one value per SNR required")),
            None => default_lambda(self.scheme, self.snr_db[i])
                .ok_or_else(|| cfg_err("lambda", format!("no tabulated value for {} dB; set lambda explicitly", self.snr_db[i]))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        Constellation::<f64>::new(self.scheme, self.order).map_err(|_| cfg_err("M", format!("order {} invalid for {:?}", self.order, self.scheme)))?;
        if self.n == 0 {
            return Err(cfg_err("n", "must be positive"));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(cfg_err("snr_db", "need at least one finite value"));
        }
        if let Some(l) = &self.lambda {
            if l.len() != 1 && l.len() != self.snr_db.len() {
                return Err(cfg_err("lambda", "give one value or one per SNR"));
            }
            if l.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(cfg_err("lambda", "values must be finite and >= 0"));
            }
        }
        for i in 0..self.snr_db.len() {
            self.lambda_at(i)?;
        }
        if !(self.rho > 0.0) {
            return Err(cfg_err("rho", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(cfg_err("epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(cfg_err("batch_size", "must be positive"));
        }
        if !(self.lr_max > 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr_max) {
            return Err(cfg_err("lr_max", "need 0 <= lr_min <= lr_max, lr_max > 0"));
        }
        if !(self.lr_period > 0.0) {
            return Err(cfg_err("lr_period", "must be positive"));
        }
        for (name, w) in [("encoder_hidden", &self.encoder_hidden), ("semantic_hidden", &self.semantic_hidden), ("source_hidden", &self.source_hidden)] {
            if w.contains(&0) {
                return Err(cfg_err(name, "widths must be positive"));
            }
        }
        match self.dataset {
            DatasetSpec::GaussianMixture { k, classes, per_class, spread } => {
                if k == 0 || classes < 2 || per_class == 0 || !(spread >= 0.0) {
                    return Err(cfg_err("dataset", "gaussian_mixture needs k > 0, classes >= 2, per_class > 0, spread >= 0"));
                }
            }
            DatasetSpec::ToyImages { side, classes, per_class, noise } => {
                if ![8, 16].contains(&side) || !(2..=4).contains(&classes) || per_class == 0 || !(noise >= 0.0) {
                    return Err(cfg_err("dataset", "toy_images needs side 8 or 16, classes 2..=4, per_class > 0"));
                }
            }
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(cfg_err("val_fraction", "must lie in (0, 1)"));
        }
        if self.seeds.is_empty() {
            return Err(cfg_err("seeds", "need at least one seed"));
        }
        if self.methods.is_empty() {
            return Err(cfg_err("methods", "need at least one method"));
        }
        if !(self.power > 0.0) {
            return Err(cfg_err("power", "must be positive"));
        }
        if self.draws == 0 || self.eval_draws == 0 {
            return Err(cfg_err("draws", "draw counts must be positive"));
        }
        if !(self.hardsoft_temperature > 0.0) {
            return Err(cfg_err("hardsoft_temperature", "must be positive"));
        }
        Ok(())
    }

    fn model_config(&self, method: Method, snr_db: f64, lambda: f64) -> ModelConfig {
        ModelConfig {
            method,
            scheme: self.scheme,
            order: self.order,
            positions: self.n,
            source_dim: self.dataset.source_dim(),
            classes: self.dataset.classes(),
            encoder_hidden: self.encoder_hidden.clone(),
            semantic_hidden: self.semantic_hidden.clone(),
            source_hidden: self.source_hidden.clone(),
            snr_db,
            power: self.power,
            lambda,
            temperature: self.rho,
            power_norm: self.power_norm,
        }
    }

    fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            schedule: CosineSchedule { lr_max: self.lr_max, lr_min: self.lr_min, period: self.lr_period },
            adam: AdamConfig::default(),
            update: self.update,
            draws: self.draws,
            eval_draws: self.eval_draws,
            frozen: Vec::new(),
        }
    }
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub method: MethodKind,
    pub scheme: Scheme,
    pub order: usize,
    pub n: usize,
    pub rate: f64,
    pub snr_db: f64,
    pub lambda: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub psnr_db: f64,
    pub final_loss: f64,
    pub logs: Vec<EpochLog>,
    /// Hard symbols used on the evaluation split (digital methods).
    pub symbols: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub results: Vec<CellResult>,
    pub shaping: Vec<ShapingReport>,
    pub rate: f64,
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Bpsk => "bpsk",
        Scheme::RectQam => "qam",
    }
}

/// RFC-4180 text of the results table.
pub fn results_csv(rows: &[CellResult]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push_str("\r\n");
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}\r\n",
            r.method.name(),
            scheme_name(r.scheme),
            r.order,
            r.n,
            r.rate,
            r.snr_db,
            r.lambda,
            r.seed,
            r.accuracy,
            r.psnr_db,
            r.final_loss
        );
    }
    out
}

pub fn epoch_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from("epoch,lr,train_loss,val_acc,val_psnr\r\n");
    for l in logs {
        let _ = write!(out, "{},{},{},{},{}\r\n", l.epoch, l.lr, l.train_loss, l.val_acc, l.val_psnr);
    }
    out
}

struct Group<'a> {
    cfg: &'a ExperimentConfig,
    snr_index: usize,
    seed: u64,
}

impl Group<'_> {
    fn stem(&self, method: MethodKind) -> String {
        format!("{}_snr{}_seed{}", method.name(), self.cfg.snr_db[self.snr_index], self.seed)
    }

    /// Trains and evaluates every configured method for one (SNR, seed).
    fn run(&self, out: Option<&Path>) -> Result<Vec<CellResult>> {
        let cfg = self.cfg;
        let snr = cfg.snr_db[self.snr_index];
        let lambda = cfg.lambda_at(self.snr_index)?;
        let data = cfg.dataset.generate(rng::derive(self.seed, TAG_DATA))?;
        let (train, val) = data.split(cfg.val_fraction, rng::derive(self.seed, TAG_SPLIT));
        let opts = cfg.train_options();
        let model_seed = rng::derive(self.seed, TAG_MODEL);
        let train_seed = rng::derive(self.seed, TAG_TRAIN);
        let eval_seed = rng::derive(self.seed, TAG_EVAL);
        let mut pretrained: Option<(JcmModel<f64>, Vec<EpochLog>)> = None;
        let mut rows = Vec::new();
        let mut methods = cfg.methods.clone();
        methods.sort();
        methods.dedup();
        for kind in methods {
            let (model, logs) = match kind {
                MethodKind::Jcm | MethodKind::Analog | MethodKind::DeepJsccQ => {
                    let method = match kind {
                        MethodKind::Jcm => Method::Jcm,
                        MethodKind::Analog => Method::Analog,
                        _ => Method::HardSoft { temperature: cfg.hardsoft_temperature },
                    };
                    let mut m = JcmModel::new(&cfg.model_config(method, snr, lambda), model_seed)?;
                    let logs = m.train(&train, &val, &opts, train_seed)?;
                    (m, logs)
                }
                MethodKind::Uniform | MethodKind::Nn => {
                    if pretrained.is_none() {
                        let mut m = JcmModel::new(&cfg.model_config(Method::AnalogReal, snr, lambda), model_seed)?;
                        let logs = m.train(&train, &val, &opts, train_seed)?;
                        pretrained = Some((m, logs));
                    }
                    let (base, base_logs) = pretrained.as_ref().expect("pretrained above");
                    let quantizer = if kind == MethodKind::Uniform {
                        QuantizerKind::uniform()
                    } else {
                        let corpus: Vec<f64> = base.encoder_outputs(&train)?.into_vec();
                        let qopts = LearnedQuantOptions { epochs: cfg.quantizer_epochs, ..Default::default() };
                        QuantizerKind::Learned(learned_quantizer_train(&corpus, cfg.order, &qopts, rng::derive(self.seed, TAG_QUANT))?)
                    };
                    let mut m = base.with_method(Method::Quantized(quantizer))?;
                    let mut fine = opts.clone();
                    fine.frozen = vec![format!("{}.", m.encoder.prefix)];
                    let mut logs = base_logs.clone();
                    let offset = logs.len();
                    logs.extend(m.train(&train, &val, &fine, train_seed)?.into_iter().map(|mut l| {
                        l.epoch += offset;
                        l
                    }));
                    (m, logs)
                }
            };
            let eval = model.evaluate(&val, cfg.eval_draws, eval_seed)?;
            if let Some(dir) = out {
                let stem = self.stem(kind);
                fs::write(dir.join(format!("log_{stem}.csv")), epoch_csv(&logs))?;
                if cfg.save_checkpoints {
                    model.store.save_checkpoint(dir.join(format!("ckpt_{stem}.jcmp")))?;
                }
            }
            rows.push(CellResult {
                method: kind,
                scheme: cfg.scheme,
                order: cfg.order,
                n: cfg.n,
                rate: cfg.rate(),
                snr_db: snr,
                lambda,
                seed: self.seed,
                accuracy: eval.accuracy,
                psnr_db: eval.psnr_db,
                final_loss: logs.last().map_or(f64::NAN, |l| l.train_loss),
                logs,
                symbols: eval.symbols,
            });
        }
        if let Some(dir) = out {
            let path = dir.join(format!("data_seed{}.jcmd", self.seed));
            if self.snr_index == 0 {
                save_dataset(&data, path)?;
            }
        }
        Ok(rows)
    }
}

/// Runs every (method, SNR, seed) cell and, when `out` is given, writes
/// `results.csv`, per-SNR `shaping_<snr>.json` for JCM on QAM, epoch logs,
/// checkpoints and dataset files there.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunSummary> {
    cfg.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let groups: Vec<Group> = (0..cfg.snr_db.len())
        .flat_map(|snr_index| cfg.seeds.iter().map(move |&seed| Group { cfg, snr_index, seed }))
        .collect();
    let per_group = groups.par_iter().map(|g| g.run(out)).collect::<Vec<_>>();
    let mut results = Vec::new();
    for r in per_group {
        results.extend(r?);
    }
    results.sort_by(|a, b| {
        (a.method.name(), a.snr_db, a.seed)
            .partial_cmp(&(b.method.name(), b.snr_db, b.seed))
            .expect("finite snr")
    });
    let shaping = shaping_reports(cfg, &results)?;
    if let Some(dir) = out {
        fs::write(dir.join("results.csv"), results_csv(&results))?;
        for rep in &shaping {
            fs::write(dir.join(format!("shaping_{}.json", rep.snr_db)), rep.to_json())?;
        }
    }
    Ok(RunSummary { results, shaping, rate: cfg.rate() })
}

/// Symbol usage of JCM per SNR, pooled over seeds (QAM only).
pub fn shaping_reports(cfg: &ExperimentConfig, results: &[CellResult]) -> Result<Vec<ShapingReport>> {
    if cfg.scheme != Scheme::RectQam {
        return Ok(Vec::new());
    }
    let c = Constellation::<f64>::new(cfg.scheme, cfg.order)?;
    let mut out = Vec::new();
    for &snr in &cfg.snr_db {
        let symbols: Vec<usize> = results
            .iter()
            .filter(|r| r.method == MethodKind::Jcm && r.snr_db == snr)
            .flat_map(|r| r.symbols.iter().copied())
            .collect();
        if symbols.is_empty() {
            continue;
        }
        let pmf = empirical_constellation_pmf(&symbols, c.order())?;
        out.push(ShapingReport::from_pmf(&c, pmf, snr)?);
    }
    Ok(out)
}

/// Process exit status for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 2,
        Error::NonFiniteLoss { .. } => 3,
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_text(extra: &str) -> String {
        format!(
            "scheme = qam\nM = 4\nn = 2\nsnr_db = 12\nepochs = 1\nper_class = 8\nk = 4\nclasses = 2\n\
             encoder_hidden = 4\nsemantic_hidden = 4\nsource_hidden = 4\nsave_checkpoints = false\n{extra}"
        )
    }

    #[test]
    fn parse_defaults_and_lists() {
        let cfg = ExperimentConfig::parse(&tiny_text("snr_db = -6, 0 ,18\n").replace("snr_db = 12\n", "")).unwrap();
        assert_eq!(cfg.snr_db, vec![-6.0, 0.0, 18.0]);
        assert_eq!(cfg.lambda_at(0).unwrap(), 20.0);
        assert_eq!(cfg.lambda_at(2).unwrap(), 270.0);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.rho, 1.5);
        assert_eq!(cfg.rate(), 0.5);
    }

    #[test]
    fn unknown_and_invalid_keys_name_the_field() {
        match ExperimentConfig::parse(&tiny_text("colour = blue\n")) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "colour"),
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::parse(&tiny_text("").replace("snr_db = 12", "snr_db = 3")) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "lambda"),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::parse(&tiny_text("").replace("snr_db = 12", "snr_db = 3\nlambda = 5")).is_ok());
        match ExperimentConfig::parse(&tiny_text("M = 8\n").replace("M = 4\n", "")) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "M"),
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::parse(&tiny_text("n = 3\n")) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "n"),
            other => panic!("{other:?}"),
        }
        assert_eq!(exit_code(&cfg_err("x", "y")), 2);
        assert_eq!(exit_code(&Error::NonFiniteLoss { epoch: 1 }), 3);
    }

    #[test]
    fn seed_override() {
        let mut cfg = ExperimentConfig::parse(&tiny_text("seeds = 1,2,3\n")).unwrap();
        cfg.override_seed(None).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        cfg.override_seed(Some("42")).unwrap();
        assert_eq!(cfg.seeds, vec![42]);
        assert!(cfg.override_seed(Some("x")).is_err());
    }

    #[test]
    fn sweep_rows_sorted_and_deterministic() {
        let cfg = ExperimentConfig::parse(&tiny_text("methods = uniform, jcm\nlambda = 1\n").replace("snr_db = 12", "snr_db = 18, -6, 0")).unwrap();
        let a = run_experiment(&cfg, None).unwrap();
        assert_eq!(a.results.len(), 6);
        let keys: Vec<(&str, f64)> = a.results.iter().map(|r| (r.method.name(), r.snr_db)).collect();
        assert_eq!(keys, vec![("jcm", -6.0), ("jcm", 0.0), ("jcm", 18.0), ("uniform", -6.0), ("uniform", 0.0), ("uniform", 18.0)]);
        let b = run_experiment(&cfg, None).unwrap();
        assert_eq!(results_csv(&a.results), results_csv(&b.results));
        assert_eq!(a.shaping.len(), 3);
        // quantized baselines log pretraining and fine-tuning epochs
        assert_eq!(a.results[3].logs.len(), 2);
    }

    #[test]
    fn artifacts_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::parse(&tiny_text("methods = jcm, analog, nn, deepjscc_q\nsave_checkpoints = true\n").replace("save_checkpoints = false\n", "")).unwrap();
        cfg.output_dir = dir.path().to_path_buf();
        run_experiment(&cfg, Some(dir.path())).unwrap();
        let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], RESULTS_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(dir.path().join("shaping_12.json").exists());
        assert!(dir.path().join("data_seed1.jcmd").exists());
        let ck = crate::autodiff::ParamStore::<f64>::load_checkpoint(dir.path().join("ckpt_jcm_snr12_seed1.jcmp")).unwrap();
        assert!(ck.len() > 0);
        let log = fs::read_to_string(dir.path().join("log_nn_snr12_seed1.csv")).unwrap();
        assert!(log.starts_with("epoch,lr,train_loss,val_acc,val_psnr"));
    }
}
