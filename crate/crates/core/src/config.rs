//! Flat `key = value` experiment files.
//!
//! ```text
//! # comments start with '#'
//! data_path = synthetic:1000x1000:1
//! epsilon = 6
//! k = 250
//! n_splits = 3
//! sweep_epsilon = 0.5, 2.5, 6
//! sweep_sizes = 1000x1000, 5000x2500
//! ```
//!
//! Missing keys take the defaults of [`ExperimentConfig::default`]; unknown
//! or repeated keys are errors.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::data::SplitMode;
use crate::error::{Error, Result};
use crate::eval::{CvSettings, DEFAULT_KS, DEFAULT_NEGATIVES};
use crate::mf::HyperParams;
use crate::server::TrainingMode;

/// Directory holding `ratings.csv` when `data_path` is not given.
pub const DATA_DIR_ENV: &str = "FEDMF_DATA_DIR";
pub const DEFAULT_MIN_INTERACTIONS: usize = 60;

/// A subset size: a count, or everything that survives filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Size {
    Full,
    Count(usize),
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Size::Full => f.write_str("full"),
            Size::Count(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "full" {
            return Ok(Size::Full);
        }
        match s.parse::<usize>() {
            Ok(0) => Err("size must be positive".into()),
            Ok(n) => Ok(Size::Count(n)),
            Err(_) => Err(format!("expected a count or `full`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Ratings file, or `synthetic:USERSxITEMS[:SEED]`.
    pub data_path: String,
    pub n_users: Size,
    pub n_items: Size,
    pub hp: HyperParams,
    pub split_mode: SplitMode,
    pub n_splits: usize,
    pub ks: Vec<usize>,
    pub n_negatives: usize,
    pub master_seed: u64,
    pub output_path: String,
    pub mode: TrainingMode,
    /// Minimum interactions per user and per item for ratings files.
    pub min_interactions: usize,
    pub eval_every: u32,
    pub checkpoint_path: Option<String>,
    pub sweep_epsilon: Vec<f64>,
    pub sweep_k: Vec<usize>,
    pub sweep_sizes: Vec<(usize, usize)>,
}

pub fn default_data_path() -> String {
    let dir = std::env::var(DATA_DIR_ENV).unwrap_or_else(|_| "data".into());
    Path::new(&dir)
        .join("ratings.csv")
        .to_string_lossy()
        .into_owned()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_path: default_data_path(),
            n_users: Size::Full,
            n_items: Size::Full,
            hp: HyperParams::default(),
            split_mode: SplitMode::RandomLeaveOneOut,
            n_splits: 1,
            ks: DEFAULT_KS.to_vec(),
            n_negatives: DEFAULT_NEGATIVES,
            master_seed: 42,
            output_path: "trace.csv".into(),
            mode: TrainingMode::Ldp,
            min_interactions: DEFAULT_MIN_INTERACTIONS,
            eval_every: 1,
            checkpoint_path: None,
            sweep_epsilon: Vec::new(),
            sweep_k: Vec::new(),
            sweep_sizes: Vec::new(),
        }
    }
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|e| format!("`{}`: {e}", p.trim()))
        })
        .collect()
}

fn pair(v: &str) -> std::result::Result<(usize, usize), String> {
    let (u, i) = v
        .split_once('x')
        .ok_or_else(|| format!("expected USERSxITEMS, got `{v}`"))?;
    let u = u.trim().parse().map_err(|e| format!("`{u}`: {e}"))?;
    let i = i.trim().parse().map_err(|e| format!("`{i}`: {e}"))?;
    Ok((u, i))
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e| format!("`{v}`: {e}"))
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl ExperimentConfig {
    /// Every key the file format accepts.
    pub const KEYS: &'static [&'static str] = &[
        "data_path",
        "n_users",
        "n_items",
        "n_factors",
        "reg",
        "learning_rate",
        "alpha",
        "epochs",
        "inner_steps",
        "epsilon",
        "k",
        "report_scaling",
        "split_mode",
        "n_splits",
        "ks",
        "n_negatives",
        "master_seed",
        "output_path",
        "mode",
        "min_interactions",
        "eval_every",
        "checkpoint_path",
        "sweep_epsilon",
        "sweep_k",
        "sweep_sizes",
    ];

    /// Sets one key from its text form. Used by the parser and by command
    /// line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "data_path" => self.data_path = v.to_string(),
            "n_users" => self.n_users = v.parse()?,
            "n_items" => self.n_items = v.parse()?,
            "n_factors" => self.hp.n_factors = num(v)?,
            "reg" => self.hp.reg = num(v)?,
            "learning_rate" => self.hp.learning_rate = num(v)?,
            "alpha" => self.hp.alpha = num(v)?,
            "epochs" => self.hp.epochs = num(v)?,
            "inner_steps" => self.hp.inner_steps = num(v)?,
            "epsilon" => self.hp.epsilon = num(v)?,
            "k" => self.hp.k = num(v)?,
            "report_scaling" => self.hp.report_scaling = v.parse()?,
            "split_mode" => self.split_mode = v.parse()?,
            "n_splits" => self.n_splits = num(v)?,
            "ks" => self.ks = list(v)?,
            "n_negatives" => self.n_negatives = num(v)?,
            "master_seed" => self.master_seed = num(v)?,
            "output_path" => self.output_path = v.to_string(),
            "mode" => self.mode = v.parse()?,
            "min_interactions" => self.min_interactions = num(v)?,
            "eval_every" => self.eval_every = num(v)?,
            "checkpoint_path" => {
                self.checkpoint_path = (!v.is_empty() && v != "none").then(|| v.to_string())
            }
            "sweep_epsilon" => self.sweep_epsilon = list(v)?,
            "sweep_k" => self.sweep_k = list(v)?,
            "sweep_sizes" => {
                self.sweep_sizes = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|p| pair(p.trim()))
                        .collect::<std::result::Result<_, _>>()?
                }
            }
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Parses the text of a config file. `origin` names it in errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        let err = |line: usize, key: &str, msg: String| Error::Config {
            path: origin.to_string(),
            line,
            key: key.to_string(),
            msg,
        };
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| err(line, body, "expected `key = value`".into()))?;
            let key = key.trim();
            if seen.iter().any(|k| k == key) {
                return Err(err(line, key, "repeated key".into()));
            }
            cfg.set(key, value).map_err(|m| err(line, key, m))?;
            seen.push(key.to_string());
        }
        cfg.validate().map_err(|e| match e {
            Error::Config { key, msg, .. } => {
                let line = text
                    .lines()
                    .position(|l| l.split('=').next().map(str::trim) == Some(key.as_str()))
                    .map_or(0, |p| p + 1);
                err(line, &key, msg)
            }
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                path: String::new(),
                line: 0,
                key: key.to_string(),
                msg: msg.to_string(),
            })
        };
        let hp = &self.hp;
        if !(hp.epsilon > 0.0 && hp.epsilon.is_finite()) {
            return bad("epsilon", "must be positive and finite");
        }
        if hp.k == 0 {
            return bad("k", "must be at least 1");
        }
        if hp.n_factors == 0 {
            return bad("n_factors", "must be at least 1");
        }
        if !(hp.reg >= 0.0 && hp.reg.is_finite()) {
            return bad("reg", "must be non-negative");
        }
        if !(hp.learning_rate > 0.0 && hp.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if !(hp.alpha >= 0.0 && hp.alpha.is_finite()) {
            return bad("alpha", "must be non-negative");
        }
        if self.n_splits == 0 {
            return bad("n_splits", "must be at least 1");
        }
        if self.ks.is_empty() || self.ks.windows(2).any(|w| w[0] >= w[1]) || self.ks[0] == 0 {
            return bad("ks", "must be non-empty, positive and strictly ascending");
        }
        if self.n_negatives == 0 {
            return bad("n_negatives", "must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be at least 1");
        }
        if self
            .sweep_epsilon
            .iter()
            .any(|&e| !(e > 0.0 && e.is_finite()))
        {
            return bad("sweep_epsilon", "values must be positive and finite");
        }
        if self.sweep_k.contains(&0) {
            return bad("sweep_k", "values must be at least 1");
        }
        if self.sweep_sizes.iter().any(|&(u, i)| u == 0 || i == 0) {
            return bad("sweep_sizes", "sizes must be positive");
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// The file form of this config; parsing it gives back an equal value.
    pub fn to_text(&self) -> String {
        let hp = &self.hp;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("data_path", self.data_path.clone());
        kv("n_users", self.n_users.to_string());
        kv("n_items", self.n_items.to_string());
        kv("n_factors", hp.n_factors.to_string());
        kv("reg", hp.reg.to_string());
        kv("learning_rate", hp.learning_rate.to_string());
        kv("alpha", hp.alpha.to_string());
        kv("epochs", hp.epochs.to_string());
        kv("inner_steps", hp.inner_steps.to_string());
        kv("epsilon", hp.epsilon.to_string());
        kv("k", hp.k.to_string());
        kv("report_scaling", hp.report_scaling.to_string());
        kv("split_mode", self.split_mode.to_string());
        kv("n_splits", self.n_splits.to_string());
        kv("ks", join(&self.ks));
        kv("n_negatives", self.n_negatives.to_string());
        kv("master_seed", self.master_seed.to_string());
        kv("output_path", self.output_path.clone());
        kv("mode", self.mode.to_string());
        kv("min_interactions", self.min_interactions.to_string());
        kv("eval_every", self.eval_every.to_string());
        kv(
            "checkpoint_path",
            self.checkpoint_path
                .clone()
                .unwrap_or_else(|| "none".into()),
        );
        kv("sweep_epsilon", join(&self.sweep_epsilon));
        kv("sweep_k", join(&self.sweep_k));
        let sizes: Vec<String> = self
            .sweep_sizes
            .iter()
            .map(|(u, i)| format!("{u}x{i}"))
            .collect();
        kv("sweep_sizes", sizes.join(", "));
        s
    }

    pub fn cv_settings(&self) -> CvSettings {
        CvSettings {
            hp: self.hp,
            mode: self.mode,
            split_mode: self.split_mode,
            ks: self.ks.clone(),
            n_negatives: self.n_negatives,
            eval_every: self.eval_every,
        }
    }

    /// The user-level budget after `k` reports per epoch.
    pub fn user_level_budget(&self) -> f64 {
        self.hp.k as f64 * self.hp.epsilon
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub epsilon: f64,
    pub k: usize,
    pub n_users: Size,
    pub n_items: Size,
}

impl GridPoint {
    /// CSV key columns, as written in sweep output.
    pub fn key(&self) -> String {
        format!(
            "{},{},{},{}",
            self.epsilon, self.k, self.n_users, self.n_items
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub epsilons: Vec<f64>,
    pub ks: Vec<usize>,
    pub sizes: Vec<(Size, Size)>,
}

impl SweepSpec {
    /// Axes left empty in the config collapse to the base value.
    pub fn from_config(base: ExperimentConfig) -> Self {
        let epsilons = if base.sweep_epsilon.is_empty() {
            vec![base.hp.epsilon]
        } else {
            base.sweep_epsilon.clone()
        };
        let ks = if base.sweep_k.is_empty() {
            vec![base.hp.k]
        } else {
            base.sweep_k.clone()
        };
        let sizes = if base.sweep_sizes.is_empty() {
            vec![(base.n_users, base.n_items)]
        } else {
            base.sweep_sizes
                .iter()
                .map(|&(u, i)| (Size::Count(u), Size::Count(i)))
                .collect()
        };
        Self {
            base,
            epsilons,
            ks,
            sizes,
        }
    }

    /// Cartesian product, sizes outermost, then ε, then k.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.sizes.len() * self.epsilons.len() * self.ks.len());
        for &(n_users, n_items) in &self.sizes {
            for &epsilon in &self.epsilons {
                for &k in &self.ks {
                    out.push(GridPoint {
                        epsilon,
                        k,
                        n_users,
                        n_items,
                    });
                }
            }
        }
        out
    }

    /// The base config with one grid point applied.
    pub fn config_for(&self, p: &GridPoint) -> ExperimentConfig {
        let mut c = self.base.clone();
        c.hp.epsilon = p.epsilon;
        c.hp.k = p.k;
        c.n_users = p.n_users;
        c.n_items = p.n_items;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let c = ExperimentConfig::parse("data_path = ratings.csv\n", "t").unwrap();
        assert_eq!(c.data_path, "ratings.csv");
        assert_eq!(c.hp.n_factors, 5);
        assert_eq!(c.hp.reg, 1e-6);
        assert_eq!(c.hp.learning_rate, 1e-3);
        assert_eq!(c.hp.epochs, 20);
        assert_eq!(c.hp.epsilon, 2.5);
        assert_eq!(c.hp.k, 100);
    }

    #[test]
    fn negative_epsilon_rejected_with_line() {
        let e = ExperimentConfig::parse("data_path = x\n\nepsilon = -1\n", "f.cfg").unwrap_err();
        match e {
            Error::Config { line, key, .. } => {
                assert_eq!(line, 3);
                assert_eq!(key, "epsilon");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_and_repeated_keys() {
        assert!(matches!(
            ExperimentConfig::parse("epsilonn = 1\n", "t"),
            Err(Error::Config { line: 1, .. })
        ));
        assert!(ExperimentConfig::parse("k = 1\nk = 2\n", "t").is_err());
        assert!(ExperimentConfig::parse("k = 0\n", "t").is_err());
        assert!(ExperimentConfig::parse("no equals sign\n", "t").is_err());
    }

    #[test]
    fn round_trip() {
        let text = "data_path = synthetic:300x200:4 # tiny\nn_users = 100\nepsilon = 0.3\n\
                    ks = 1, 3, 10\nmode = nonprivate\nsweep_sizes = 10x20, 30x40\n\
                    sweep_epsilon = 0.5, 6\ncheckpoint_path = v.fmf\nreg = 0.000001\n";
        let c = ExperimentConfig::parse(text, "t").unwrap();
        let again = ExperimentConfig::parse(&c.to_text(), "t").unwrap();
        assert_eq!(c, again);
        assert_eq!(c.sweep_sizes, vec![(10, 20), (30, 40)]);
        assert_eq!(c.checkpoint_path.as_deref(), Some("v.fmf"));
        assert_eq!(c.n_users, Size::Count(100));
    }

    #[test]
    fn sweep_grid() {
        let base = ExperimentConfig {
            sweep_epsilon: vec![0.5, 6.0],
            sweep_k: vec![1, 250],
            ..ExperimentConfig::default()
        };
        let spec = SweepSpec::from_config(base);
        let pts = spec.points();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[1].key(), "0.5,250,full,full");
        let one = SweepSpec::from_config(ExperimentConfig::default());
        assert_eq!(one.points().len(), 1);
        assert_eq!(
            one.config_for(&one.points()[0]),
            ExperimentConfig::default()
        );
    }
}
