use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use super::InteractionDataset;
use crate::error::{Error, Result};
use crate::rng::{stream, TAG_SPLIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Hold out one interaction drawn uniformly per user.
    RandomLeaveOneOut,
    /// Hold out the most recent interaction per user.
    LatestLeaveOneOut,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::RandomLeaveOneOut => "random",
            SplitMode::LatestLeaveOneOut => "latest",
        })
    }
}

impl FromStr for SplitMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "random" | "random_leave_one_out" => Ok(SplitMode::RandomLeaveOneOut),
            "latest" | "latest_leave_one_out" => Ok(SplitMode::LatestLeaveOneOut),
            _ => Err(format!(
                "unknown split mode `{s}` (expected random or latest)"
            )),
        }
    }
}

/// Training data with one held-out item per user. `train` shares the index
/// maps of the dataset it was split from.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: InteractionDataset,
    pub test_items: Vec<usize>,
    pub mode: SplitMode,
    pub seed: u64,
}

pub fn split_leave_one_out(
    ds: &InteractionDataset,
    mode: SplitMode,
    seed: u64,
) -> Result<SplitPair> {
    let mut rows = Vec::with_capacity(ds.n_users());
    let mut test_items = Vec::with_capacity(ds.n_users());

    for (u, row) in ds.rows.iter().enumerate() {
        if row.len() < 2 {
            return Err(Error::TooFewInteractions {
                user: ds.user_ids[u],
                count: row.len(),
            });
        }
        let pos = match mode {
            SplitMode::RandomLeaveOneOut => {
                stream(seed, &[TAG_SPLIT, u as u64]).random_range(0..row.len())
            }
            // rows are sorted by item, so the last max wins ties toward the
            // larger item index
            SplitMode::LatestLeaveOneOut => row
                .iter()
                .enumerate()
                .max_by_key(|(_, x)| (x.timestamp, x.item))
                .map(|(k, _)| k)
                .unwrap(),
        };
        test_items.push(row[pos].item as usize);
        let mut train_row = row.clone();
        train_row.remove(pos);
        rows.push(train_row);
    }

    Ok(SplitPair {
        train: ds.with_rows(rows),
        test_items,
        mode,
        seed,
    })
}
