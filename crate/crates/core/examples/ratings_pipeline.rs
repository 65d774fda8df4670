//! Ratings-file ingestion end to end: synthetic ratings written in the
//! MovieLens schema, parsed back, binarized, filtered and subsampled.
//!
//! cargo run --release --example ratings_pipeline

use fedmf::data::synthetic::{generate, SyntheticSpec};
use fedmf::data::{
    binarize, filter_min_interactions, read_ratings_file, sample_subset, split_leave_one_out,
    write_ratings_csv, SplitMode,
};

fn main() -> fedmf::Result<()> {
    let path = std::env::temp_dir().join("fedmf_ratings.csv");
    let ratings = generate(&SyntheticSpec::new(3000, 2000, 9))?;
    write_ratings_csv(std::fs::File::create(&path)?, &ratings)?;
    println!("wrote {} ratings to {}", ratings.len(), path.display());

    let ds = binarize(&read_ratings_file(&path)?)?;
    println!("-- binarized\n{}", ds.summary());

    let filtered = filter_min_interactions(&ds, 20)?;
    println!("-- at least 20 per user and item\n{}", filtered.summary());

    let sub = sample_subset(&filtered, 200, 300, 1)?;
    println!("-- 200 x 300 subset\n{}", sub.summary());

    let split = split_leave_one_out(&filtered, SplitMode::LatestLeaveOneOut, 0)?;
    println!(
        "latest leave-one-out: {} train interactions, {} held out",
        split.train.n_interactions(),
        split.test_items.len()
    );
    Ok(())
}
