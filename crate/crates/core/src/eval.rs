//! Leave-one-out HR@K: the held-out item is ranked against sampled
//! negatives the user never interacted with.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{
    sample_negatives, split_leave_one_out, InteractionDataset, SplitMode, SplitPair,
};
use crate::error::{Error, Result};
use crate::mf::{score, HyperParams, ItemMatrix, UserEmbedding};
use crate::rng::{derive_seed, TAG_CROSS_VALIDATION, TAG_NEGATIVES, TAG_SPLIT, TAG_TRAIN};
use crate::server::{run_training, EpochRecord, EvalSet, TrainingConfig, TrainingMode};

pub const DEFAULT_NEGATIVES: usize = 99;
pub const DEFAULT_KS: [usize; 3] = [2, 5, 10];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingTask {
    pub user: usize,
    pub test_item: usize,
    pub negatives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub hr: BTreeMap<usize, f64>,
    pub n_users: usize,
}

impl Metrics {
    pub fn hr_at(&self, k: usize) -> Option<f64> {
        self.hr.get(&k).copied()
    }
}

/// One task per user. Negatives are drawn against the user's full history
/// in `full`, so neither train nor test items can appear.
pub fn build_tasks(
    full: &InteractionDataset,
    split: &SplitPair,
    n_negatives: usize,
    seed: u64,
) -> Result<Vec<RankingTask>> {
    (0..full.n_users())
        .into_par_iter()
        .map(|u| {
            let test_item = split.test_items[u];
            let negatives = sample_negatives(full, u, n_negatives, seed, &[test_item])?;
            Ok(RankingTask {
                user: u,
                test_item,
                negatives,
            })
        })
        .collect()
}

/// 1-based rank of the test item among itself and the negatives. Ties go
/// to the smaller item index.
pub fn rank_test_item(x: &UserEmbedding, v: &ItemMatrix, task: &RankingTask) -> usize {
    let target = score(x, v.row(task.test_item));
    1 + task
        .negatives
        .iter()
        .filter(|&&j| {
            let s = score(x, v.row(j));
            s > target || (s == target && j < task.test_item)
        })
        .count()
}

pub fn hit_ratio(
    tasks: &[RankingTask],
    xs: &[UserEmbedding],
    v: &ItemMatrix,
    ks: &[usize],
) -> Result<Metrics> {
    if tasks.is_empty() {
        return Err(Error::Empty("no ranking tasks"));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Param("Ks must be strictly ascending".into()));
    }
    let ranks: Vec<usize> = tasks
        .par_iter()
        .map(|t| rank_test_item(&xs[t.user], v, t))
        .collect();
    let n = tasks.len();
    let hr = ks
        .iter()
        .map(|&k| {
            (
                k,
                ranks.iter().filter(|&&r| r <= k).count() as f64 / n as f64,
            )
        })
        .collect();
    Ok(Metrics { hr, n_users: n })
}

/// Expected HR@K of a ranker that orders candidates uniformly at random:
/// `K / (negatives + 1)`.
pub fn random_baseline(ks: &[usize]) -> Metrics {
    random_baseline_with(ks, DEFAULT_NEGATIVES)
}

pub fn random_baseline_with(ks: &[usize], n_negatives: usize) -> Metrics {
    let candidates = (n_negatives + 1) as f64;
    Metrics {
        hr: ks
            .iter()
            .map(|&k| (k, (k as f64 / candidates).min(1.0)))
            .collect(),
        n_users: 0,
    }
}

/// Per-K mean and sample standard deviation over several runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub mean: BTreeMap<usize, f64>,
    pub std: BTreeMap<usize, f64>,
    pub runs: usize,
}

pub fn summarize_metrics(runs: &[Metrics]) -> Result<MetricsSummary> {
    if runs.is_empty() {
        return Err(Error::Empty("no metrics to summarize"));
    }
    let n = runs.len() as f64;
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for &k in runs[0].hr.keys() {
        let vals: Vec<f64> = runs
            .iter()
            .map(|m| {
                m.hr_at(k)
                    .ok_or_else(|| Error::Param(format!("run lacks HR@{k}")))
            })
            .collect::<Result<_>>()?;
        let mu = vals.iter().sum::<f64>() / n;
        let var = if runs.len() > 1 {
            vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        mean.insert(k, mu);
        std.insert(k, var.sqrt());
    }
    Ok(MetricsSummary {
        mean,
        std,
        runs: runs.len(),
    })
}

/// Everything a cross-validation run needs besides the data and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSettings {
    pub hp: HyperParams,
    pub mode: TrainingMode,
    pub split_mode: SplitMode,
    pub ks: Vec<usize>,
    pub n_negatives: usize,
    pub eval_every: u32,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            hp: HyperParams::default(),
            mode: TrainingMode::Ldp,
            split_mode: SplitMode::RandomLeaveOneOut,
            ks: DEFAULT_KS.to_vec(),
            n_negatives: DEFAULT_NEGATIVES,
            eval_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    /// One metric trace per split.
    pub traces: Vec<Vec<EpochRecord>>,
    /// Final item matrix of each split.
    pub item_matrices: Vec<ItemMatrix>,
    /// Final-epoch metrics across splits; `None` when nothing was evaluated
    /// (zero epochs outside random mode).
    pub summary: Option<MetricsSummary>,
}

/// Seeds used by split `s` of a run keyed by `master_seed`:
/// `(split, negatives, training)`.
pub fn split_seeds(master_seed: u64, s: usize) -> (u64, u64, u64) {
    let base = derive_seed(master_seed, &[TAG_CROSS_VALIDATION, s as u64]);
    (
        derive_seed(base, &[TAG_SPLIT]),
        derive_seed(base, &[TAG_NEGATIVES]),
        derive_seed(base, &[TAG_TRAIN]),
    )
}

/// Trains once per leave-one-out split, each split with its own seeds, and
/// summarizes the final metrics.
pub fn cross_validate(
    ds: &InteractionDataset,
    settings: &CvSettings,
    n_splits: usize,
    master_seed: u64,
) -> Result<CvOutcome> {
    if n_splits == 0 {
        return Err(Error::Param("n_splits must be at least 1".into()));
    }
    let mut traces = Vec::with_capacity(n_splits);
    let mut item_matrices = Vec::with_capacity(n_splits);
    for s in 0..n_splits {
        let (split_seed, neg_seed, train_seed) = split_seeds(master_seed, s);
        let split = split_leave_one_out(ds, settings.split_mode, split_seed)?;
        let tasks = build_tasks(ds, &split, settings.n_negatives, neg_seed)?;
        let eval = EvalSet {
            tasks: &tasks,
            ks: &settings.ks,
            every: settings.eval_every,
        };
        let cfg = TrainingConfig {
            hp: settings.hp,
            mode: settings.mode,
            seed: train_seed,
        };
        let out = run_training(&split.train, Some(&eval), &cfg)?;
        traces.push(out.state.metric_trace);
        item_matrices.push(out.state.item_matrix);
    }
    let finals: Vec<Metrics> = traces
        .iter()
        .filter_map(|t| t.last().map(|r| r.metrics.clone()))
        .collect();
    let summary = if finals.len() == n_splits {
        Some(summarize_metrics(&finals)?)
    } else {
        None
    };
    Ok(CvOutcome {
        traces,
        item_matrices,
        summary,
    })
}
