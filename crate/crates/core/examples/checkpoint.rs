//! Trains briefly, saves the item matrix, reloads it and scores a user
//! against the reloaded matrix.
//!
//! cargo run --release --example checkpoint

use fedmf::data::binarize;
use fedmf::data::synthetic::{generate, SyntheticSpec};
use fedmf::mf::{score, update_user_embedding, HyperParams};
use fedmf::server::{
    read_checkpoint, run_training, write_checkpoint, TrainingConfig, TrainingMode,
};

fn main() -> fedmf::Result<()> {
    let ds = binarize(&generate(&SyntheticSpec::new(400, 300, 2))?)?;
    let cfg = TrainingConfig {
        hp: HyperParams {
            epochs: 5,
            ..HyperParams::default()
        },
        mode: TrainingMode::NonPrivate,
        seed: 8,
    };
    let out = run_training(&ds, None, &cfg)?;

    let path = std::env::temp_dir().join("fedmf_items.fmf");
    write_checkpoint(&out.state.item_matrix, std::fs::File::create(&path)?)?;
    let v = read_checkpoint(std::fs::File::open(&path)?)?;
    println!(
        "{}: {} x {} matrix, identical after reload: {}",
        path.display(),
        v.n_rows(),
        v.n_cols(),
        v == out.state.item_matrix
    );

    // a client re-derives its vector from the broadcast matrix alone
    let items = ds.items_of(0);
    let x = update_user_embedding(&v, &items, &cfg.hp)?;
    let mut ranked: Vec<(usize, f64)> = (0..v.n_rows()).map(|i| (i, score(&x, v.row(i)))).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("user 0 rated {:?}", &items[..items.len().min(8)]);
    println!(
        "top 8: {:?}",
        ranked.iter().take(8).map(|r| r.0).collect::<Vec<_>>()
    );
    Ok(())
}
