//! Rating ingestion, binarization into implicit feedback, filtering,
//! subsampling and leave-one-out splitting.

mod filter;
mod parse;
mod sample;
mod split;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

pub use filter::filter_min_interactions;
pub use parse::{parse_ratings, read_ratings_file, write_ratings_csv, RATINGS_HEADER};
pub use sample::{sample_negatives, sample_subset, sample_subset_with_min};
pub use split::{split_leave_one_out, SplitMode, SplitPair};

/// One line of a MovieLens ratings file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RawRating {
    pub user_id: u64,
    pub item_id: u64,
    pub rating: f64,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub item: u32,
    pub timestamp: i64,
}

/// Sparse binary user × item matrix.
///
/// Dense indices are assigned in ascending order of the original ids, so
/// both index maps are sorted and looked up by binary search. Each user's
/// row is sorted by item index. Every user has at least one interaction;
/// items may be empty only in datasets produced by subsampling or by
/// removing held-out test items.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
    rows: Vec<Vec<Interaction>>,
}

impl InteractionDataset {
    /// Builds a dataset from `(user_id, item_id, timestamp)` triples.
    /// Duplicate pairs collapse to one interaction with the latest timestamp.
    pub fn from_triples<I>(triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, u64, i64)>,
    {
        let mut pairs: BTreeMap<(u64, u64), i64> = BTreeMap::new();
        for (u, i, ts) in triples {
            pairs
                .entry((u, i))
                .and_modify(|t| *t = (*t).max(ts))
                .or_insert(ts);
        }
        if pairs.is_empty() {
            return Err(Error::Empty("no interactions"));
        }
        let mut user_ids: Vec<u64> = pairs.keys().map(|&(u, _)| u).collect();
        user_ids.dedup();
        let mut item_ids: Vec<u64> = pairs.keys().map(|&(_, i)| i).collect();
        item_ids.sort_unstable();
        item_ids.dedup();
        Ok(Self::assemble(user_ids, item_ids, pairs))
    }

    /// Keeps the given item universe even if some items end up empty.
    fn with_item_universe(item_ids: Vec<u64>, pairs: BTreeMap<(u64, u64), i64>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("no interactions"));
        }
        let mut user_ids: Vec<u64> = pairs.keys().map(|&(u, _)| u).collect();
        user_ids.dedup();
        Ok(Self::assemble(user_ids, item_ids, pairs))
    }

    fn assemble(user_ids: Vec<u64>, item_ids: Vec<u64>, pairs: BTreeMap<(u64, u64), i64>) -> Self {
        let mut rows = vec![Vec::new(); user_ids.len()];
        let mut u_dense = 0usize;
        for ((u, i), ts) in pairs {
            while user_ids[u_dense] != u {
                u_dense += 1;
            }
            let item = item_ids
                .binary_search(&i)
                .expect("item id missing from universe") as u32;
            rows[u_dense].push(Interaction {
                item,
                timestamp: ts,
            });
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|x| x.item);
        }
        Self {
            user_ids,
            item_ids,
            rows,
        }
    }

    /// Same index maps, new rows. Used by the splitter.
    pub(crate) fn with_rows(&self, rows: Vec<Vec<Interaction>>) -> Self {
        debug_assert_eq!(rows.len(), self.rows.len());
        Self {
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
            rows,
        }
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Fraction of empty cells.
    pub fn sparsity(&self) -> f64 {
        1.0 - self.n_interactions() as f64 / (self.n_users() as f64 * self.n_items() as f64)
    }

    pub fn user_id(&self, user: usize) -> u64 {
        self.user_ids[user]
    }

    pub fn item_id(&self, item: usize) -> u64 {
        self.item_ids[item]
    }

    pub fn user_index(&self, user_id: u64) -> Option<usize> {
        self.user_ids.binary_search(&user_id).ok()
    }

    pub fn item_index(&self, item_id: u64) -> Option<usize> {
        self.item_ids.binary_search(&item_id).ok()
    }

    pub fn interactions(&self, user: usize) -> &[Interaction] {
        &self.rows[user]
    }

    /// Item indices the user interacted with, ascending.
    pub fn items_of(&self, user: usize) -> Vec<usize> {
        self.rows[user].iter().map(|x| x.item as usize).collect()
    }

    /// `r_ui`.
    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.rows[user]
            .binary_search_by_key(&(item as u32), |x| x.item)
            .is_ok()
    }

    pub fn user_counts(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items()];
        for x in self.rows.iter().flatten() {
            counts[x.item as usize] += 1;
        }
        counts
    }

    /// Summary as `key=value` lines.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        writeln!(s, "n_users={}", self.n_users()).unwrap();
        writeln!(s, "n_items={}", self.n_items()).unwrap();
        writeln!(s, "n_interactions={}", self.n_interactions()).unwrap();
        writeln!(s, "sparsity={:.6}", self.sparsity()).unwrap();
        s
    }
}

/// Converts explicit ratings to implicit feedback: every rated pair becomes
/// an interaction. Duplicate pairs keep the latest timestamp.
pub fn binarize(ratings: &[RawRating]) -> Result<InteractionDataset> {
    if ratings.is_empty() {
        return Err(Error::Empty("no ratings to binarize"));
    }
    InteractionDataset::from_triples(
        ratings
            .iter()
            .filter(|r| r.rating > 0.0)
            .map(|r| (r.user_id, r.item_id, r.timestamp)),
    )
}
