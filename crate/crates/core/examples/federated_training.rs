//! LDP and non-private federated training on a synthetic 1000 x 1000 set,
//! printing HR@10 per epoch side by side.
//!
//! cargo run --release --example federated_training [epsilon] [k]

use fedmf::data::synthetic::{generate, SyntheticSpec};
use fedmf::data::{binarize, split_leave_one_out, SplitMode};
use fedmf::eval::{build_tasks, DEFAULT_NEGATIVES};
use fedmf::mf::HyperParams;
use fedmf::server::{run_training, EvalSet, TrainingConfig, TrainingMode};

fn main() -> fedmf::Result<()> {
    let mut args = std::env::args().skip(1);
    let epsilon: f64 = args.next().map_or(6.0, |s| s.parse().expect("epsilon"));
    let k: usize = args.next().map_or(250, |s| s.parse().expect("k"));

    let ds = binarize(&generate(&SyntheticSpec::new(1000, 1000, 1))?)?;
    print!("{}", ds.summary());
    let split = split_leave_one_out(&ds, SplitMode::RandomLeaveOneOut, 11)?;
    let tasks = build_tasks(&ds, &split, DEFAULT_NEGATIVES, 12)?;
    let eval = EvalSet::new(&tasks);

    let hp = HyperParams {
        epsilon,
        k,
        ..HyperParams::default()
    };
    let run = |mode| {
        run_training(
            &split.train,
            Some(&eval),
            &TrainingConfig { hp, mode, seed: 13 },
        )
    };
    let ldp = run(TrainingMode::Ldp)?;
    let np = run(TrainingMode::NonPrivate)?;

    println!(
        "epsilon {epsilon}, k {k}, user-level budget {}",
        epsilon * k as f64
    );
    println!("epoch  ldp_hr@10  np_hr@10  ldp_upload_B  np_upload_B");
    for (a, b) in ldp.trace().iter().zip(np.trace()) {
        println!(
            "{:>5}  {:>9.4}  {:>8.4}  {:>12}  {:>11}",
            a.epoch,
            a.metrics.hr_at(10).unwrap_or(0.0),
            b.metrics.hr_at(10).unwrap_or(0.0),
            a.upload_bytes,
            b.upload_bytes
        );
    }
    Ok(())
}
