//! Leave-one-out HR@K: analytic random baseline, an untrained random model,
//! and a three-split cross-validated LDP run.
//!
//! cargo run --release --example evaluation

use fedmf::data::synthetic::{generate, SyntheticSpec};
use fedmf::data::{binarize, split_leave_one_out, SplitMode};
use fedmf::eval::{build_tasks, cross_validate, random_baseline, CvSettings, DEFAULT_KS};
use fedmf::mf::HyperParams;
use fedmf::server::{run_training, EvalSet, TrainingConfig, TrainingMode};

fn main() -> fedmf::Result<()> {
    let ds = binarize(&generate(&SyntheticSpec::new(1000, 1000, 3))?)?;

    println!(
        "analytic random ranker: {:?}",
        random_baseline(&DEFAULT_KS).hr
    );

    let split = split_leave_one_out(&ds, SplitMode::LatestLeaveOneOut, 0)?;
    let tasks = build_tasks(&ds, &split, 99, 5)?;
    let t = &tasks[0];
    println!(
        "user {} holds out item {}; first negatives {:?}",
        t.user,
        t.test_item,
        &t.negatives[..5]
    );
    let cfg = TrainingConfig {
        hp: HyperParams::default(),
        mode: TrainingMode::Random,
        seed: 1,
    };
    let random = run_training(&split.train, Some(&EvalSet::new(&tasks)), &cfg)?;
    println!(
        "untrained random model: {:?}",
        random.final_metrics().map(|m| &m.hr)
    );

    let settings = CvSettings {
        hp: HyperParams {
            epsilon: 2.5,
            k: 100,
            ..HyperParams::default()
        },
        ..CvSettings::default()
    };
    let cv = cross_validate(&ds, &settings, 3, 2024)?;
    if let Some(s) = cv.summary {
        for (k, mean) in &s.mean {
            println!(
                "ldp eps=2.5 k=100 HR@{k}: {mean:.4} ± {:.4} over {} splits",
                s.std[k], s.runs
            );
        }
    }
    Ok(())
}
