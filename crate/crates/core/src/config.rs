//! Flat `key = value` configuration files.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored and
//! every key may appear once. Unknown keys are rejected so that typos do not
//! silently fall back to defaults.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{
    load_cifar_binary, read_csv, subsample_longtail, synth_gaussian_longtail, Dataset,
    LongTailSpec, SynthConfig,
};
use crate::error::{Error, Result};
use crate::training::TrainConfig;

/// Ordered `(key, value, line)` entries of a flat config text.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {line_no}: expected `key = value`, got `{line}`"))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::config(format!("line {line_no}: empty key")));
        }
        if let Some((_, _, first)) = out.iter().find(|(k, _, _)| k == key) {
            return Err(Error::config(format!(
                "line {line_no}: `{key}` already set on line {first}"
            )));
        }
        out.push((key.to_string(), value.trim().to_string(), line_no));
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

fn join(list: &[usize]) -> String {
    list.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    /// Applies one setting. Returns `Ok(false)` for keys this type does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let m = &mut self.model;
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "sc_batch" => self.sc_batch = parse(key, value)?,
            "ce_batch" => self.ce_batch = parse(key, value)?,
            "batch" => {
                self.sc_batch = parse(key, value)?;
                self.ce_batch = self.sc_batch;
            }
            "lr" => self.sgd.learning_rate = parse(key, value)?,
            "momentum" => self.sgd.momentum = parse(key, value)?,
            "weight_decay" => self.sgd.weight_decay = parse(key, value)?,
            "lr_milestones" => self.lr_milestones = parse_list(key, value)?,
            "lr_decay" => self.lr_decay = parse(key, value)?,
            "alpha_schedule" => self.schedule = parse(key, value)?,
            "loss" => self.loss = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "affinity" => self.affinity = parse(key, value)?,
            "sampler" => self.sc_sampler = parse(key, value)?,
            "sc_sampler" => self.sc_sampler = parse(key, value)?,
            "ce_sampler" => self.ce_sampler = parse(key, value)?,
            "view_noise" => self.view_noise = parse(key, value)?,
            "positives_per_anchor" => self.positives_per_anchor = parse(key, value)?,
            "sc_reduction" => self.sc_reduction = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "two_stage" => self.two_stage = parse_bool(key, value)?,
            "input_dim" => m.input_dim = parse(key, value)?,
            "backbone_hidden" => m.backbone_hidden = parse_list(key, value)?,
            "embed_dim" => m.embed_dim = parse(key, value)?,
            "proj_hidden" => m.proj_hidden = parse(key, value)?,
            "proj_dim" => m.proj_dim = parse(key, value)?,
            "classes" => m.num_classes = parse(key, value)?,
            "prototypes_per_class" => m.prototypes_per_class = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Every setting as `key = value` lines, in a fixed order. Floats use the
    /// shortest representation that parses back to the same value.
    pub fn to_kv(&self) -> String {
        let m = &self.model;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("epochs", self.epochs.to_string());
        put("sc_batch", self.sc_batch.to_string());
        put("ce_batch", self.ce_batch.to_string());
        put("lr", self.sgd.learning_rate.to_string());
        put("momentum", self.sgd.momentum.to_string());
        put("weight_decay", self.sgd.weight_decay.to_string());
        put("lr_milestones", join(&self.lr_milestones));
        put("lr_decay", self.lr_decay.to_string());
        put("alpha_schedule", self.schedule.to_string());
        put("loss", self.loss.to_string());
        put("tau", self.tau.to_string());
        put("affinity", self.affinity.to_string());
        put("sc_sampler", self.sc_sampler.to_string());
        put("ce_sampler", self.ce_sampler.to_string());
        put("view_noise", self.view_noise.to_string());
        put("positives_per_anchor", self.positives_per_anchor.to_string());
        put("sc_reduction", self.sc_reduction.to_string());
        put("seed", self.seed.to_string());
        put("two_stage", self.two_stage.to_string());
        put("input_dim", m.input_dim.to_string());
        put("backbone_hidden", join(&m.backbone_hidden));
        put("embed_dim", m.embed_dim.to_string());
        put("proj_hidden", m.proj_hidden.to_string());
        put("proj_dim", m.proj_dim.to_string());
        put("classes", m.num_classes.to_string());
        put("prototypes_per_class", m.prototypes_per_class.to_string());
        s
    }

    /// Parses text produced by [`TrainConfig::to_kv`] (or any subset of its
    /// keys, on top of the defaults).
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v, line) in parse_kv(text)? {
            if !cfg.set(&k, &v)? {
                return Err(Error::config(format!("line {line}: unknown key `{k}`")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Gaussian classes generated from the data seed.
    Synthetic,
    /// CIFAR binary records.
    Cifar(PathBuf),
    /// `label,f0,f1,...` rows with a header.
    Csv(PathBuf),
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "synthetic" {
            return Ok(DataSource::Synthetic);
        }
        match s.split_once(':') {
            Some(("cifar", p)) if !p.is_empty() => Ok(DataSource::Cifar(p.into())),
            Some(("csv", p)) if !p.is_empty() => Ok(DataSource::Csv(p.into())),
            _ => Err(Error::config(format!(
                "data source must be synthetic, cifar:PATH or csv:PATH, got `{s}`"
            ))),
        }
    }
}

impl std::fmt::Display for DataSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataSource::Synthetic => f.write_str("synthetic"),
            DataSource::Cifar(p) => write!(f, "cifar:{}", p.display()),
            DataSource::Csv(p) => write!(f, "csv:{}", p.display()),
        }
    }
}

/// Where the data comes from and how the long tail is cut.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    /// Balanced evaluation split for file sources; synthetic data brings its own.
    pub test_source: Option<DataSource>,
    pub n_max: usize,
    pub beta: f64,
    pub dim: usize,
    pub class_sep: f64,
    pub test_per_class: usize,
    /// Seed for data generation and subsampling; the run seed when unset.
    pub data_seed: Option<u64>,
}

impl Default for DataConfig {
    /// The synthetic benchmark: 16-dimensional Gaussians, 500 to 5 samples
    /// per class, 200 test samples per class.
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            test_source: None,
            n_max: 500,
            beta: 100.0,
            dim: 16,
            class_sep: 3.0,
            test_per_class: 200,
            data_seed: None,
        }
    }
}

impl DataConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "data" => self.source = parse(key, value)?,
            "test_data" => self.test_source = Some(parse(key, value)?),
            "n_max" => self.n_max = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "class_sep" => self.class_sep = parse(key, value)?,
            "test_per_class" => self.test_per_class = parse(key, value)?,
            "data_seed" => self.data_seed = Some(parse(key, value)?),
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "data = {}\nn_max = {}\nbeta = {}\ndim = {}\nclass_sep = {}\ntest_per_class = {}\n",
            self.source, self.n_max, self.beta, self.dim, self.class_sep, self.test_per_class
        );
        if let Some(t) = &self.test_source {
            let _ = writeln!(s, "test_data = {t}");
        }
        if let Some(seed) = self.data_seed {
            let _ = writeln!(s, "data_seed = {seed}");
        }
        s
    }

    fn load_file(source: &DataSource, classes: usize) -> Result<Dataset> {
        match source {
            DataSource::Synthetic => Err(Error::config("not a file source")),
            DataSource::Cifar(p) => load_cifar_binary(p, classes),
            DataSource::Csv(p) => {
                let f = fs::File::open(p).map_err(|e| Error::io(p, e))?;
                read_csv(std::io::BufReader::new(f), classes)
            }
        }
    }

    /// Long-tailed training set and balanced test set (if any) for `classes`
    /// classes.
    pub fn load(&self, classes: usize, run_seed: u64) -> Result<(Dataset, Option<Dataset>)> {
        let seed = self.data_seed.unwrap_or(run_seed);
        let spec = LongTailSpec::new(classes, self.n_max, self.beta)?;
        match &self.source {
            DataSource::Synthetic => {
                let (train, test) = synth_gaussian_longtail(&SynthConfig {
                    spec,
                    dim: self.dim,
                    class_sep: self.class_sep,
                    test_per_class: self.test_per_class,
                    seed,
                })?;
                Ok((train, Some(test)))
            }
            file => {
                let full = Self::load_file(file, classes)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let train = subsample_longtail(&full, &spec, &mut rng)?;
                let test = match &self.test_source {
                    Some(t) => Some(Self::load_file(t, classes)?),
                    None => None,
                };
                Ok((train, test))
            }
        }
    }
}

/// Data plus training settings for one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        Ok(self.data.set(key, value)? || self.train.set(key, value)?)
    }

    pub fn set_checked(&mut self, key: &str, value: &str) -> Result<()> {
        if self.set(key, value)? {
            Ok(())
        } else {
            Err(Error::config(format!("unknown key `{key}`")))
        }
    }

    /// Parses a config text. Keys not owned by data or training settings are
    /// handed to `extra`, which returns `false` to reject them.
    pub fn parse_with(
        text: &str,
        mut extra: impl FnMut(&str, &str) -> Result<bool>,
    ) -> Result<Self> {
        // Benchmark-sized training by default; the full-scale trainer
        // defaults are far too slow for a single core.
        let mut cfg = Self {
            data: DataConfig::default(),
            train: benchmark_train_config(),
        };
        for (k, v, line) in parse_kv(text)? {
            let known = cfg.set(&k, &v).map_err(|e| prefix_line(line, e))?;
            if !known && !extra(&k, &v).map_err(|e| prefix_line(line, e))? {
                return Err(Error::config(format!("line {line}: unknown key `{k}`")));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, |_, _| Ok(false))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_kv(&self) -> String {
        format!("{}{}", self.data.to_kv(), self.train.to_kv())
    }

    /// Loads the data and aligns the model's input width and class count with
    /// it.
    pub fn prepare(&self) -> Result<(Dataset, Option<Dataset>, TrainConfig)> {
        let mut train_cfg = self.train.clone();
        let (train, test) = self.data.load(train_cfg.model.num_classes, train_cfg.seed)?;
        train_cfg.model.input_dim = train.dim();
        train_cfg.validate()?;
        Ok((train, test, train_cfg))
    }
}

fn prefix_line(line: usize, e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("line {line}: {msg}")),
        other => other,
    }
}

/// Training settings sized for the synthetic benchmark on one CPU core.
pub fn benchmark_train_config() -> TrainConfig {
    TrainConfig {
        epochs: 60,
        sc_batch: 128,
        ce_batch: 128,
        lr_milestones: vec![36, 48],
        sgd: crate::numerics::SgdConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
        },
        tau: 0.3,
        view_noise: 0.6,
        sc_reduction: crate::training::Reduction::Mean,
        ..TrainConfig::default()
    }
}
