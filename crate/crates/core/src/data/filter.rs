use std::collections::BTreeMap;

use super::InteractionDataset;
use crate::error::{Error, Result};

/// Keeps only users and items with at least `threshold` interactions.
///
/// A user pass and an item pass alternate until neither removes anything,
/// so the output is a fixpoint of the filter.
pub fn filter_min_interactions(
    ds: &InteractionDataset,
    threshold: usize,
) -> Result<InteractionDataset> {
    if threshold == 0 {
        return Err(Error::Param("filter threshold must be >= 1".into()));
    }
    let mut user_alive: Vec<bool> = vec![true; ds.n_users()];
    let mut item_alive: Vec<bool> = vec![true; ds.n_items()];

    loop {
        let mut changed = false;

        for (u, alive) in user_alive.iter_mut().enumerate() {
            if !*alive {
                continue;
            }
            let n = ds.rows[u]
                .iter()
                .filter(|x| item_alive[x.item as usize])
                .count();
            if n < threshold {
                *alive = false;
                changed = true;
            }
        }

        let mut counts = vec![0usize; ds.n_items()];
        for (u, row) in ds.rows.iter().enumerate() {
            if user_alive[u] {
                for x in row {
                    counts[x.item as usize] += 1;
                }
            }
        }
        for (i, alive) in item_alive.iter_mut().enumerate() {
            if *alive && counts[i] < threshold {
                *alive = false;
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }

    let mut pairs = BTreeMap::new();
    for (u, row) in ds.rows.iter().enumerate() {
        if !user_alive[u] {
            continue;
        }
        for x in row {
            if item_alive[x.item as usize] {
                pairs.insert((ds.user_ids[u], ds.item_ids[x.item as usize]), x.timestamp);
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Vanished { threshold });
    }
    let items = ds
        .item_ids
        .iter()
        .zip(&item_alive)
        .filter(|(_, &a)| a)
        .map(|(&id, _)| id)
        .collect();
    InteractionDataset::with_item_universe(items, pairs)
}
