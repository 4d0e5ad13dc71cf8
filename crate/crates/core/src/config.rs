//! Run configuration from `section.key = value` files.
//!
//! Blank lines and `#` comments are ignored. Later assignments win, so
//! command-line overrides can be applied with [`RunConfig::set`] after a file
//! is loaded.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::SynthSpec;
use crate::executor::Aggregation;
use crate::layout::{LayoutConfig, LayoutStrategy};
use crate::model::TrainConfig;
use crate::teacher::TeacherConfig;

/// Variant axes of an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub lambdas: Vec<f32>,
    pub strategies: Vec<LayoutStrategy>,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            lambdas: vec![10.0],
            strategies: LayoutStrategy::ALL.to_vec(),
            seeds: vec![0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub graph: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub teacher_path: Option<PathBuf>,
    pub split_ratio: f64,
    pub topn: usize,
    /// Skip the user's training items when expanding leaf hops.
    pub exclude_train_at_leaf: bool,
    /// Skip intermediate entities with no admissible leaf below them.
    pub prune_dead_ends: bool,
    pub aggregation: Aggregation,
    pub teacher: TeacherConfig,
    pub train: TrainConfig,
    pub layout: LayoutConfig,
    pub synth: SynthSpec,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            graph: None,
            entities: None,
            model: None,
            teacher_path: None,
            split_ratio: 0.7,
            topn: 10,
            exclude_train_at_leaf: true,
            prune_dead_ends: true,
            aggregation: Aggregation::Max,
            teacher: TeacherConfig::default(),
            train: TrainConfig::default(),
            layout: LayoutConfig::default(),
            synth: SynthSpec::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}`: expected a boolean, got `{value}`"
        ))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    /// Reads a config file on top of the defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_str(&text)?;
        Ok(cfg)
    }

    /// Applies every assignment in `text`.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                msg: format!("expected `section.key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Parse {
                    line: n + 1,
                    msg: e.to_string(),
                })?;
        }
        Ok(())
    }

    /// Sets one dotted key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let path = || Some(PathBuf::from(v));
        match key {
            "run.seed" => self.seed = parse(key, v)?,
            "run.out" => self.out = PathBuf::from(v),
            "run.graph" => self.graph = path(),
            "run.entities" => self.entities = path(),
            "run.model" => self.model = path(),
            "run.teacher" => self.teacher_path = path(),

            "eval.split_ratio" => self.split_ratio = parse(key, v)?,
            "eval.topn" => self.topn = parse(key, v)?,

            "teacher.dim" => self.teacher.dim = parse(key, v)?,
            "teacher.epochs" => self.teacher.epochs = parse(key, v)?,
            "teacher.lr" => self.teacher.lr = parse(key, v)?,
            "teacher.negatives" => self.teacher.negatives = parse(key, v)?,
            "teacher.init_scale" => self.teacher.init_scale = parse(key, v)?,

            "train.dim" => self.train.dim = parse(key, v)?,
            "train.lr" => self.train.lr = parse(key, v)?,
            "train.momentum" => self.train.momentum = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.lambda" => self.train.lambda = parse(key, v)?,
            "train.path_limit" => self.train.path_limit = parse(key, v)?,
            "train.negatives" => self.train.negatives = parse(key, v)?,
            "train.max_metapath_len" => self.train.max_metapath_len = parse(key, v)?,
            "train.predecessor" => self.train.predecessor = v.parse()?,
            "train.negative_pool" => self.train.negative_pool = v.parse()?,

            "layout.budget" => self.layout.budget = parse(key, v)?,
            "layout.cap" => {
                self.layout.cap = if v == "none" {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            "layout.sample_limit" => self.layout.sample_limit = parse(key, v)?,
            "layout.min_len" => self.layout.min_len = parse(key, v)?,
            "layout.max_len" => self.layout.max_len = parse(key, v)?,
            "layout.degree_caps" => self.layout.degree_caps = parse_bool(key, v)?,
            "layout.skip_user_returns" => self.layout.skip_user_returns = parse_bool(key, v)?,
            "layout.strategy" => self.layout.strategy = v.parse()?,
            "layout.aggregation" => self.aggregation = v.parse()?,
            "layout.exclude_train" => self.exclude_train_at_leaf = parse_bool(key, v)?,
            "layout.prune_dead_ends" => self.prune_dead_ends = parse_bool(key, v)?,

            "synth.users" => self.synth.users = parse(key, v)?,
            "synth.items" => self.synth.items = parse(key, v)?,
            "synth.brands" => self.synth.brands = parse(key, v)?,
            "synth.categories" => self.synth.categories = parse(key, v)?,
            "synth.features" => self.synth.features = parse(key, v)?,
            "synth.purchases_per_user" => self.synth.purchases_per_user = parse(key, v)?,
            "synth.boost" => self.synth.boost = parse(key, v)?,
            "synth.affinity" => self.synth.affinity = parse(key, v)?,
            "synth.features_per_item" => self.synth.features_per_item = parse(key, v)?,
            "synth.mentions_per_user" => self.synth.mentions_per_user = parse(key, v)?,

            "experiment.lambdas" => self.experiment.lambdas = parse_list(key, v)?,
            "experiment.strategies" => self.experiment.strategies = parse_list(key, v)?,
            "experiment.seeds" => self.experiment.seeds = parse_list(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config("eval.split_ratio must be in (0, 1)".into()));
        }
        if self.topn == 0 {
            return Err(Error::Config("eval.topn must be positive".into()));
        }
        if self.layout.min_len == 0 || self.layout.min_len > self.layout.max_len {
            return Err(Error::Config(
                "layout.min_len must be in 1..=layout.max_len".into(),
            ));
        }
        self.train.validate()
    }

    /// Training config with the run seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            max_metapath_len: self.train.max_metapath_len.max(self.layout.max_len),
            ..self.train.clone()
        }
    }

    /// Teacher config with the run seed.
    pub fn teacher_config(&self) -> TeacherConfig {
        TeacherConfig {
            seed: self.seed,
            ..self.teacher.clone()
        }
    }
}
