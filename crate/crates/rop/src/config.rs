//! Run configuration: a flat `key = value` file, overridden by `ROP_<KEY>`
//! environment variables, overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rop_core::kbc::{Aggregation, KbcConfig};
use rop_core::rop::{Arch, Composition, RopConfig};
use rop_core::Similarity;
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, AppError, AppResult};

pub const ENV_PREFIX: &str = "ROP_";

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("task", "pqa | kbc"),
    ("arch", "arc1 | arc2 | arc3"),
    ("comp", "none | add | gru | egru (default: the architecture's recurrent choice)"),
    ("dim", "shared embedding/hidden size (pqa 300, kbc 200)"),
    ("d_e", "entity dimension (default: dim)"),
    ("d_r", "relation dimension (default: dim)"),
    ("d_h", "hidden dimension (default: dim)"),
    ("margin", "sequence-loss margin alpha (pqa 0.3, kbc 0.5)"),
    ("beta", "kbc prediction-loss margin (0.5)"),
    ("pred_weight", "kbc prediction-loss weight lambda (1)"),
    ("seq_weight", "kbc sequence-loss weight (1)"),
    ("similarity", "cosine | dot"),
    ("aggregation", "kbc path pooling: max | mean | logsumexp"),
    ("negatives", "negatives per gold entity (pqa 10, kbc 4)"),
    ("lr", "AdaGrad learning rate (pqa 0.01, kbc 0.1)"),
    ("batch", "minibatch size (pqa 50 paths, kbc 20 pairs)"),
    ("epochs", "training epochs (10)"),
    ("seed", "RNG seed (0)"),
    ("train", "pqa training paths"),
    ("dev", "pqa dev paths (base format)"),
    ("test", "pqa test paths (base format)"),
    ("train_format", "base | enhanced (pqa training paths)"),
    ("data", "kbc dataset directory: <relation>/{train,dev,test}.jsonl"),
    ("kbc_format", "base | enhanced (paths inside the kbc files)"),
    ("candidates", "typed | full (pqa candidate pool)"),
    ("max_len", "kbc path truncation (8)"),
    ("max_paths", "kbc paths kept per pair (30)"),
    ("out", "output directory"),
];

const PATH_KEYS: [&str; 4] = ["train", "dev", "test", "data"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: &str) -> AppResult<()> {
        let key = key.trim();
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(AppError::Usage(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// `key = value` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> AppResult<Self> {
        let mut c = Self::new();
        c.merge_text(text, "<config>")?;
        Ok(c)
    }

    fn merge_text(&mut self, text: &str, origin: &str) -> AppResult<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| AppError::Parse {
                path: origin.to_string(),
                line: i + 1,
                message: "expected key = value".into(),
            })?;
            self.set(k, v).map_err(|e| AppError::Parse {
                path: origin.to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Relative data paths in a file are resolved against the file's
    /// directory.
    pub fn merge_file(&mut self, path: &Path) -> AppResult<()> {
        let text = read_to_string(path)?;
        let origin = path.display().to_string();
        let mut file = Self::new();
        file.merge_text(&text, &origin)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for (k, v) in file.values {
            let v = if PATH_KEYS.contains(&k.as_str()) && Path::new(&v).is_relative() {
                base.join(&v).display().to_string()
            } else {
                v
            };
            self.values.insert(k, v);
        }
        Ok(())
    }

    /// Applies `ROP_<KEY>` variables from `vars` (usually `std::env::vars()`).
    pub fn merge_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> AppResult<()> {
        for (k, v) in vars {
            if let Some(key) = k.strip_prefix(ENV_PREFIX) {
                let key = key.to_ascii_lowercase();
                if KEYS.iter().any(|(k, _)| *k == key) {
                    self.set(&key, &v)?;
                }
            }
        }
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn merge_overrides<'a>(&mut self, items: impl IntoIterator<Item = &'a str>) -> AppResult<()> {
        for item in items {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| AppError::Usage(format!("override {item:?} is not key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn resolve(&self) -> AppResult<Resolved> {
        Resolved::from_config(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Pqa,
    Kbc,
}

/// Architecture-level settings; stored in checkpoints and compared on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub task: Task,
    pub arch: String,
    pub comp: String,
    pub d_e: usize,
    pub d_r: usize,
    pub d_h: usize,
    pub margin: f64,
    pub negatives: usize,
    pub similarity: String,
    pub beta: f64,
    pub pred_weight: f64,
    pub seq_weight: f64,
    pub aggregation: String,
}

impl ModelSpec {
    pub fn rop_config(&self) -> AppResult<RopConfig> {
        let arch = Arch::parse(&self.arch).ok_or_else(|| AppError::Usage(format!("unknown arch {:?}", self.arch)))?;
        let comp = Composition::parse(&self.comp)
            .ok_or_else(|| AppError::Usage(format!("unknown comp {:?}", self.comp)))?;
        let similarity = Similarity::parse(&self.similarity)
            .ok_or_else(|| AppError::Usage(format!("unknown similarity {:?}", self.similarity)))?;
        let c = RopConfig {
            arch,
            comp,
            d_e: self.d_e,
            d_r: self.d_r,
            d_h: self.d_h,
            margin: self.margin,
            negatives: self.negatives,
            similarity,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn kbc_config(&self) -> AppResult<KbcConfig> {
        let rop = self.rop_config()?;
        let aggregation = Aggregation::parse(&self.aggregation)
            .ok_or_else(|| AppError::Usage(format!("unknown aggregation {:?}", self.aggregation)))?;
        let c = KbcConfig {
            similarity: rop.similarity,
            rop,
            beta: self.beta,
            pred_weight: self.pred_weight,
            seq_weight: self.seq_weight,
            aggregation,
        };
        c.validate()?;
        Ok(c)
    }
}

/// A fully-defaulted, validated configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub model: ModelSpec,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub train_enhanced: bool,
    pub data: Option<PathBuf>,
    pub kbc_enhanced: bool,
    pub full_candidates: bool,
    pub max_len: usize,
    pub max_paths: usize,
    pub out: PathBuf,
}

fn parse_num<T: std::str::FromStr>(c: &RunConfig, key: &str, default: T) -> AppResult<T> {
    match c.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| AppError::Usage(format!("{key}: cannot parse {v:?}"))),
    }
}

fn parse_choice(c: &RunConfig, key: &str, default: &str, choices: &[&str]) -> AppResult<String> {
    let v = c.get(key).unwrap_or(default);
    if choices.contains(&v) {
        Ok(v.to_string())
    } else {
        Err(AppError::Usage(format!("{key}: {v:?} is not one of {choices:?}")))
    }
}

impl Resolved {
    fn from_config(c: &RunConfig) -> AppResult<Self> {
        let task = match parse_choice(c, "task", "pqa", &["pqa", "kbc"])?.as_str() {
            "pqa" => Task::Pqa,
            _ => Task::Kbc,
        };
        let kbc = task == Task::Kbc;
        let arch = parse_choice(c, "arch", "arc3", &["arc1", "arc2", "arc3"])?;
        let default_comp = match arch.as_str() {
            "arc1" => "none",
            "arc2" => "gru",
            _ => "egru",
        };
        let comp = parse_choice(c, "comp", default_comp, &["none", "add", "gru", "egru"])?;
        let dim = parse_num(c, "dim", if kbc { 200 } else { 300 })?;
        let model = ModelSpec {
            task,
            arch,
            comp,
            d_e: parse_num(c, "d_e", dim)?,
            d_r: parse_num(c, "d_r", dim)?,
            d_h: parse_num(c, "d_h", dim)?,
            margin: parse_num(c, "margin", if kbc { 0.5 } else { 0.3 })?,
            negatives: parse_num(c, "negatives", if kbc { 4 } else { 10 })?,
            similarity: parse_choice(c, "similarity", "cosine", &["cosine", "dot"])?,
            beta: parse_num(c, "beta", 0.5)?,
            pred_weight: parse_num(c, "pred_weight", 1.0)?,
            seq_weight: parse_num(c, "seq_weight", 1.0)?,
            aggregation: parse_choice(c, "aggregation", "max", &["max", "mean", "logsumexp"])?,
        };
        match task {
            Task::Pqa => model.rop_config().map(|_| ())?,
            Task::Kbc => model.kbc_config().map(|_| ())?,
        }
        let lr: f64 = parse_num(c, "lr", if kbc { 0.1 } else { 0.01 })?;
        if lr.is_nan() || lr < 0.0 {
            return Err(AppError::Usage(format!("lr must be nonnegative, got {lr}")));
        }
        let batch = parse_num(c, "batch", if kbc { 20 } else { 50 })?;
        if batch == 0 {
            return Err(AppError::Usage("batch must be at least 1".into()));
        }
        let path = |k: &str| c.get(k).map(PathBuf::from);
        Ok(Resolved {
            model,
            lr,
            batch,
            epochs: parse_num(c, "epochs", 10)?,
            seed: parse_num(c, "seed", 0)?,
            train: path("train"),
            dev: path("dev"),
            test: path("test"),
            train_enhanced: parse_choice(c, "train_format", "base", &["base", "enhanced"])? == "enhanced",
            data: path("data"),
            kbc_enhanced: parse_choice(c, "kbc_format", "base", &["base", "enhanced"])? == "enhanced",
            full_candidates: parse_choice(c, "candidates", "typed", &["typed", "full"])? == "full",
            max_len: parse_num(c, "max_len", rop_core::kg::MAX_PATH_LEN)?,
            max_paths: parse_num(c, "max_paths", rop_core::kg::MAX_PATHS_PER_PAIR)?,
            out: path("out").unwrap_or_else(|| PathBuf::from("runs/latest")),
        })
    }

    /// Every key with its effective value, in `key = value` form; parsing
    /// it back yields the same resolution.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut kv: Vec<(&str, String)> = vec![
            ("task", if m.task == Task::Kbc { "kbc" } else { "pqa" }.into()),
            ("arch", m.arch.clone()),
            ("comp", m.comp.clone()),
            ("d_e", m.d_e.to_string()),
            ("d_r", m.d_r.to_string()),
            ("d_h", m.d_h.to_string()),
            ("margin", m.margin.to_string()),
            ("beta", m.beta.to_string()),
            ("pred_weight", m.pred_weight.to_string()),
            ("seq_weight", m.seq_weight.to_string()),
            ("similarity", m.similarity.clone()),
            ("aggregation", m.aggregation.clone()),
            ("negatives", m.negatives.to_string()),
            ("lr", self.lr.to_string()),
            ("batch", self.batch.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("train_format", if self.train_enhanced { "enhanced" } else { "base" }.into()),
            ("kbc_format", if self.kbc_enhanced { "enhanced" } else { "base" }.into()),
            ("candidates", if self.full_candidates { "full" } else { "typed" }.into()),
            ("max_len", self.max_len.to_string()),
            ("max_paths", self.max_paths.to_string()),
            ("out", self.out.display().to_string()),
        ];
        for (k, p) in [("train", &self.train), ("dev", &self.dev), ("test", &self.test), ("data", &self.data)] {
            if let Some(p) = p {
                kv.push((k, p.display().to_string()));
            }
        }
        let mut s = String::new();
        for (k, v) in kv {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}
