//! Experiment runner: dataset preparation, cross-validated training runs,
//! parameter sweeps, cost tables and CSV re-aggregation.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{error, info, warn};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, GridPoint, Size, SweepSpec};
use crate::data::synthetic::{generate, SyntheticSpec};
use crate::data::{
    binarize, filter_min_interactions, read_ratings_file, sample_subset_with_min,
    InteractionDataset,
};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, MetricsSummary};
use crate::rng::{derive_seed, TAG_SUBSET};
use crate::server::{comm_cost, write_checkpoint, EpochRecord, TrainingMode};

/// Loads the configured source: synthetic data as generated, ratings files
/// binarized and filtered to `min_interactions`.
pub fn load_source(cfg: &ExperimentConfig) -> Result<InteractionDataset> {
    if cfg.data_path.starts_with("synthetic:") {
        let spec: SyntheticSpec = cfg.data_path.parse().map_err(Error::Param)?;
        return binarize(&generate(&spec)?);
    }
    let ratings = read_ratings_file(&cfg.data_path)?;
    let ds = binarize(&ratings)?;
    if cfg.min_interactions > 1 {
        filter_min_interactions(&ds, cfg.min_interactions)
    } else {
        Ok(ds)
    }
}

/// Cuts the configured `n_users x n_items` subset out of `source`. Users
/// need two interactions among the sampled items so they can be split.
pub fn subset(cfg: &ExperimentConfig, source: &InteractionDataset) -> Result<InteractionDataset> {
    if cfg.n_users == Size::Full && cfg.n_items == Size::Full {
        return Ok(source.clone());
    }
    let count = |s: Size, all: usize| match s {
        Size::Full => all,
        Size::Count(n) => n,
    };
    sample_subset_with_min(
        source,
        count(cfg.n_users, source.n_users()),
        count(cfg.n_items, source.n_items()),
        2,
        derive_seed(cfg.master_seed, &[TAG_SUBSET]),
    )
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<InteractionDataset> {
    subset(cfg, &load_source(cfg)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub mode: TrainingMode,
    pub epsilon: f64,
    pub k: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub n_splits: usize,
    pub ks: Vec<usize>,
    /// Per-epoch mean over splits.
    pub trace: Vec<EpochRecord>,
    pub summary: Option<MetricsSummary>,
}

impl ExperimentReport {
    pub fn user_level_budget(&self) -> f64 {
        self.k as f64 * self.epsilon
    }

    pub fn summary_line(&self) -> String {
        let mut s = format!(
            "mode={} users={} items={} interactions={} splits={}",
            self.mode, self.n_users, self.n_items, self.n_interactions, self.n_splits
        );
        if self.mode == TrainingMode::Ldp {
            let _ = write!(
                s,
                " epsilon={} k={} user_level_epsilon={}",
                self.epsilon,
                self.k,
                self.user_level_budget()
            );
        }
        match &self.summary {
            Some(m) => {
                for (k, mean) in &m.mean {
                    let _ = write!(s, " hr@{k}={mean:.4}±{:.4}", m.std[k]);
                }
            }
            None => s.push_str(" (no epochs evaluated)"),
        }
        s
    }
}

/// Element-wise mean of per-split traces. All splits share a schedule, so
/// records line up by position.
pub fn mean_trace(traces: &[Vec<EpochRecord>]) -> Vec<EpochRecord> {
    let Some(first) = traces.first() else {
        return Vec::new();
    };
    let n = traces.len() as f64;
    first
        .iter()
        .enumerate()
        .map(|(i, r0)| {
            let mut rec = r0.clone();
            for (k, v) in rec.metrics.hr.iter_mut() {
                *v = traces.iter().map(|t| t[i].metrics.hr[k]).sum::<f64>() / n;
            }
            rec.loss = traces.iter().map(|t| t[i].loss).sum::<f64>() / n;
            rec
        })
        .collect()
}

pub fn trace_header(ks: &[usize]) -> String {
    let hr: Vec<String> = ks.iter().map(|k| format!("hr_at_{k}")).collect();
    format!("epoch,{},loss,upload_bytes,download_bytes", hr.join(","))
}

pub fn write_trace_csv<W: Write>(
    mut w: W,
    ks: &[usize],
    trace: &[EpochRecord],
) -> std::io::Result<()> {
    writeln!(w, "{}", trace_header(ks))?;
    for r in trace {
        write!(w, "{}", r.epoch)?;
        for k in ks {
            write!(w, ",{:.6}", r.metrics.hr[k])?;
        }
        writeln!(w, ",{:.6},{},{}", r.loss, r.upload_bytes, r.download_bytes)?;
    }
    Ok(())
}

/// Trains and evaluates `cfg.n_splits` times on an already prepared
/// dataset. Writes nothing.
pub fn run_on(
    cfg: &ExperimentConfig,
    ds: &InteractionDataset,
) -> Result<(ExperimentReport, Vec<crate::mf::ItemMatrix>)> {
    cfg.validate()?;
    info!(
        "{} run on {}x{} ({} interactions), per-report epsilon {} with k {} gives user-level epsilon {}",
        cfg.mode,
        ds.n_users(),
        ds.n_items(),
        ds.n_interactions(),
        cfg.hp.epsilon,
        cfg.hp.k,
        cfg.user_level_budget()
    );
    let cv = cross_validate(ds, &cfg.cv_settings(), cfg.n_splits, cfg.master_seed)?;
    let report = ExperimentReport {
        mode: cfg.mode,
        epsilon: cfg.hp.epsilon,
        k: cfg.hp.k,
        n_users: ds.n_users(),
        n_items: ds.n_items(),
        n_interactions: ds.n_interactions(),
        n_splits: cfg.n_splits,
        ks: cfg.ks.clone(),
        trace: mean_trace(&cv.traces),
        summary: cv.summary,
    };
    Ok((report, cv.item_matrices))
}

/// Full pipeline: load, subset, cross-validate, then write the mean trace to
/// `output_path` and, if configured, the first split's item matrix to
/// `checkpoint_path`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let (report, matrices) = run_on(cfg, &ds)?;

    let out = &cfg.output_path;
    let mut w = BufWriter::new(File::create(out).map_err(|e| Error::io(out, e))?);
    write_trace_csv(&mut w, &cfg.ks, &report.trace).map_err(|e| Error::io(out, e))?;
    w.flush().map_err(|e| Error::io(out, e))?;

    if let (Some(path), Some(v)) = (&cfg.checkpoint_path, matrices.first()) {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        write_checkpoint(v, BufWriter::new(f)).map_err(|e| Error::io(path, e))?;
    }
    info!("{}", report.summary_line());
    Ok(report)
}

pub fn sweep_header(ks: &[usize]) -> String {
    let hr: Vec<String> = ks.iter().map(|k| format!("hr_at_{k}")).collect();
    format!("epsilon,k,n_users,n_items,{}", hr.join(","))
}

fn sweep_row(p: &GridPoint, ks: &[usize], m: &MetricsSummary) -> String {
    let mut s = p.key();
    for k in ks {
        let _ = write!(s, ",{:.6}", m.mean[k]);
    }
    s
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    pub completed: usize,
    pub skipped: usize,
    pub failed: Vec<(GridPoint, String)>,
}

impl SweepReport {
    pub fn success(&self) -> bool {
        self.failed.is_empty()
    }
}

/// Keys of rows already present in a sweep CSV.
fn completed_keys(path: &Path) -> Result<BTreeSet<String>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeSet::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.splitn(5, ',').take(4).collect::<Vec<_>>().join(","))
        .collect())
}

/// Runs every grid point not already in `spec.base.output_path`, appending
/// one row per point in grid order. Points run in parallel batches; a
/// failing point is logged and the sweep moves on.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    let base = &spec.base;
    base.validate()?;
    let out = Path::new(&base.output_path);
    let done = completed_keys(out)?;
    let fresh = !out.exists() || fs::metadata(out).map_err(|e| Error::io(out, e))?.len() == 0;

    let mut report = SweepReport::default();
    let pending: Vec<GridPoint> = spec
        .points()
        .into_iter()
        .filter(|p| {
            let skip = done.contains(&p.key());
            if skip {
                report.skipped += 1;
            }
            !skip
        })
        .collect();
    if pending.is_empty() {
        info!("sweep: nothing to do ({} rows present)", report.skipped);
        return Ok(report);
    }

    let source = load_source(base)?;
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)
        .map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(file);
    if fresh {
        writeln!(w, "{}", sweep_header(&base.ks)).map_err(|e| Error::io(out, e))?;
    }

    let batch = rayon::current_num_threads().max(1);
    for chunk in pending.chunks(batch) {
        let results: Vec<Result<ExperimentReport>> = chunk
            .par_iter()
            .map(|p| {
                let cfg = spec.config_for(p);
                let ds = subset(&cfg, &source)?;
                run_on(&cfg, &ds).map(|(r, _)| r)
            })
            .collect();
        for (p, r) in chunk.iter().zip(results) {
            match r {
                Ok(rep) => match &rep.summary {
                    Some(m) => {
                        writeln!(w, "{}", sweep_row(p, &base.ks, m))
                            .map_err(|e| Error::io(out, e))?;
                        info!("sweep point {}: {}", p.key(), rep.summary_line());
                        report.completed += 1;
                    }
                    None => {
                        warn!("sweep point {} produced no metrics", p.key());
                        report.failed.push((*p, "no epochs evaluated".into()));
                    }
                },
                Err(e) => {
                    error!("sweep point {} failed: {e}", p.key());
                    report.failed.push((*p, e.to_string()));
                }
            }
        }
        w.flush().map_err(|e| Error::io(out, e))?;
    }
    Ok(report)
}

/// Per-client communication table for the configured run.
pub fn report_costs(cfg: &ExperimentConfig, n_items: usize) -> Result<String> {
    cfg.validate()?;
    let c = comm_cost(&cfg.hp, n_items);
    let kb = |b: u64| b as f64 / 1000.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "items={} factors={} k={} epochs={}",
        n_items, cfg.hp.n_factors, cfg.hp.k, cfg.hp.epochs
    );
    let _ = writeln!(s, "quantity,per_epoch_bytes,total_bytes,total_kb");
    let rows = [
        ("download", c.download_per_epoch, c.download_total),
        ("upload", c.upload_per_epoch, c.upload_total),
        ("upload_wire", c.upload_per_epoch_wire, c.upload_total_wire),
    ];
    for (name, per, total) in rows {
        let _ = writeln!(s, "{name},{per},{total},{:.1}", kb(total));
    }
    Ok(s)
}

const KEY_COLUMNS: [&str; 5] = ["epsilon", "k", "n_users", "n_items", "epoch"];

/// Groups rows of one or more CSVs with the same header by their key
/// columns (any of `epsilon,k,n_users,n_items,epoch`) and reports mean and
/// sample standard deviation of every other column. Groups keep first-seen
/// order.
pub fn summarize_csvs(paths: &[impl AsRef<Path>]) -> Result<String> {
    if paths.is_empty() {
        return Err(Error::Empty("no CSV files to summarize"));
    }
    let mut header: Option<Vec<String>> = None;
    let mut groups: Vec<(Vec<String>, Vec<Vec<f64>>)> = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let h: Vec<String> = lines
            .next()
            .ok_or(Error::Empty("CSV without header"))?
            .split(',')
            .map(str::to_string)
            .collect();
        match &header {
            None => header = Some(h.clone()),
            Some(prev) if *prev != h => {
                return Err(Error::Shape(format!(
                    "{} has a different header",
                    path.display()
                )))
            }
            _ => {}
        }
        let is_key: Vec<bool> = h
            .iter()
            .map(|c| KEY_COLUMNS.contains(&c.as_str()))
            .collect();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != h.len() {
                return Err(Error::Parse {
                    line: n + 2,
                    msg: format!("{}: expected {} fields", path.display(), h.len()),
                });
            }
            let key: Vec<String> = cells
                .iter()
                .zip(&is_key)
                .filter(|(_, &k)| k)
                .map(|(c, _)| c.to_string())
                .collect();
            let vals: Vec<f64> = cells
                .iter()
                .zip(&is_key)
                .filter(|(_, &k)| !k)
                .map(|(c, _)| {
                    c.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: n + 2,
                        msg: format!("{}: `{c}`: {e}", path.display()),
                    })
                })
                .collect::<Result<_>>()?;
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, rows)) => rows.push(vals),
                None => groups.push((key, vec![vals])),
            }
        }
    }
    let header = header.unwrap_or_default();
    let keys: Vec<&String> = header
        .iter()
        .filter(|c| KEY_COLUMNS.contains(&c.as_str()))
        .collect();
    let values: Vec<&String> = header
        .iter()
        .filter(|c| !KEY_COLUMNS.contains(&c.as_str()))
        .collect();

    let mut cols: Vec<String> = keys.iter().map(|c| c.to_string()).collect();
    cols.push("runs".into());
    for v in &values {
        cols.push(format!("{v}_mean"));
        cols.push(format!("{v}_std"));
    }
    let mut s = cols.join(",");
    s.push('\n');
    for (key, rows) in &groups {
        let n = rows.len() as f64;
        let mut line = key.clone();
        line.push(rows.len().to_string());
        for j in 0..values.len() {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = if rows.len() > 1 {
                rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            line.push(format!("{mean:.6}"));
            line.push(format!("{:.6}", var.sqrt()));
        }
        s.push_str(&line.join(","));
        s.push('\n');
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::parse(
            "data_path = synthetic:120x300:3\nepochs = 2\nk = 5\nn_negatives = 20\n",
            "t",
        )
        .unwrap();
        c.output_path = String::new();
        c
    }

    #[test]
    fn synthetic_source_and_subset() {
        let mut c = tiny();
        let full = load_source(&c).unwrap();
        assert_eq!(full.n_users(), 120);
        c.n_users = Size::Count(50);
        c.n_items = Size::Count(150);
        let sub = load_dataset(&c).unwrap();
        assert_eq!((sub.n_users(), sub.n_items()), (50, 150));
        assert!(sub.user_counts().iter().all(|&n| n >= 2));
    }

    #[test]
    fn mean_trace_averages_by_position() {
        let c = tiny();
        let ds = load_dataset(&c).unwrap();
        let c2 = ExperimentConfig { n_splits: 2, ..c };
        let cv = cross_validate(&ds, &c2.cv_settings(), 2, c2.master_seed).unwrap();
        let m = mean_trace(&cv.traces);
        assert_eq!(m.len(), 2);
        let want = (cv.traces[0][1].metrics.hr[&10] + cv.traces[1][1].metrics.hr[&10]) / 2.0;
        assert!((m[1].metrics.hr[&10] - want).abs() < 1e-15);
    }

    #[test]
    fn trace_csv_schema() {
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[2, 5, 10], &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,hr_at_2,hr_at_5,hr_at_10,loss,upload_bytes,download_bytes\n"
        );
    }

    #[test]
    fn cost_table() {
        let c = ExperimentConfig::default();
        let t = report_costs(&c, 9781).unwrap();
        assert!(t.contains("download,195620,3912400,3912.4"), "{t}");
        assert!(t.contains("upload,400,8000,8.0"), "{t}");
        let bad = ExperimentConfig {
            hp: crate::mf::HyperParams { k: 0, ..c.hp },
            ..c
        };
        assert!(report_costs(&bad, 10).is_err());
    }
}
