use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedmf::config::{ExperimentConfig, Size, SweepSpec, DATA_DIR_ENV};
use fedmf::experiment::{load_dataset, report_costs, run_experiment, run_sweep, summarize_csvs};
use fedmf::server::TrainingMode;

#[derive(Parser)]
#[command(
    name = "fedmf",
    version,
    about = "Federated matrix factorization with LDP gradient reports"
)]
#[command(after_help = format!("Without data_path, ratings are read from ${DATA_DIR_ENV}/ratings.csv."))]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one configuration; writes the metric trace CSV.
    Run(Overrides),
    /// Run the configured grid; one CSV row per point, resumable.
    Sweep(Overrides),
    /// Print per-client communication costs.
    Costs(Overrides),
    /// Average CSVs that share a header, grouped by their key columns.
    Summarize {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Overrides {
    /// `key = value` config file.
    config: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// Count or `full`.
    #[arg(long)]
    users: Option<Size>,
    /// Count or `full`.
    #[arg(long)]
    items: Option<Size>,
    #[arg(long)]
    seed: Option<u64>,
    /// ldp, nonprivate or random.
    #[arg(long)]
    mode: Option<TrainingMode>,
    #[arg(long)]
    out: Option<String>,
    /// Any other config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig, String> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).map_err(|e| e.to_string())?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| format!("--set `{kv}`: expected KEY=VALUE"))?;
            cfg.set(k.trim(), v)
                .map_err(|m| format!("--set {}: {m}", k.trim()))?;
        }
        if let Some(e) = self.epsilon {
            cfg.hp.epsilon = e;
        }
        if let Some(k) = self.k {
            cfg.hp.k = k;
        }
        if let Some(u) = self.users {
            cfg.n_users = u;
        }
        if let Some(i) = self.items {
            cfg.n_items = i;
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(o) = &self.out {
            cfg.output_path = o.clone();
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

fn run(cmd: Command) -> Result<bool, String> {
    match cmd {
        Command::Run(o) => {
            let cfg = o.resolve()?;
            if cfg.mode == TrainingMode::Ldp {
                println!(
                    "privacy: per-report epsilon = {}, k = {} reports/epoch, user-level epsilon = k*epsilon = {}",
                    cfg.hp.epsilon,
                    cfg.hp.k,
                    cfg.user_level_budget()
                );
            }
            let report = run_experiment(&cfg).map_err(|e| e.to_string())?;
            println!("{}", report.summary_line());
            println!("trace written to {}", cfg.output_path);
            Ok(true)
        }
        Command::Sweep(o) => {
            let cfg = o.resolve()?;
            let spec = SweepSpec::from_config(cfg);
            let report = run_sweep(&spec).map_err(|e| e.to_string())?;
            println!(
                "sweep: {} completed, {} already present, {} failed -> {}",
                report.completed,
                report.skipped,
                report.failed.len(),
                spec.base.output_path
            );
            for (p, e) in &report.failed {
                println!("failed {}: {e}", p.key());
            }
            Ok(report.success())
        }
        Command::Costs(o) => {
            let cfg = o.resolve()?;
            let m = match cfg.n_items {
                Size::Count(m) => m,
                Size::Full => load_dataset(&cfg).map_err(|e| e.to_string())?.n_items(),
            };
            print!("{}", report_costs(&cfg, m).map_err(|e| e.to_string())?);
            Ok(true)
        }
        Command::Summarize { files, out } => {
            let table = summarize_csvs(&files).map_err(|e| e.to_string())?;
            match out {
                Some(p) => {
                    std::fs::write(&p, table).map_err(|e| format!("{}: {e}", p.display()))?
                }
                None => print!("{table}"),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
