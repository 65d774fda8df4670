//! A small (epsilon, k) grid written to CSV, then run again to show that
//! finished rows are skipped.
//!
//! cargo run --release --example parameter_sweep [out.csv]

use fedmf::config::{ExperimentConfig, SweepSpec};
use fedmf::experiment::run_sweep;

fn main() -> fedmf::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| {
        std::env::temp_dir()
            .join("fedmf_sweep.csv")
            .to_string_lossy()
            .into_owned()
    });
    let _ = std::fs::remove_file(&out);

    let text = format!(
        "data_path = synthetic:1500x1200:5\n\
         n_users = 1000\n\
         n_items = 1000\n\
         sweep_epsilon = 0.5, 6\n\
         sweep_k = 1, 250\n\
         output_path = {out}\n"
    );
    let cfg = ExperimentConfig::parse(&text, "inline")?;
    let spec = SweepSpec::from_config(cfg);

    let first = run_sweep(&spec)?;
    println!("first pass: {first:?}");
    let second = run_sweep(&spec)?;
    println!("second pass: {second:?}");
    print!("{}", std::fs::read_to_string(&out)?);
    Ok(())
}
