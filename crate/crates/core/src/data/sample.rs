use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use rand::Rng;

use super::InteractionDataset;
use crate::error::{Error, Result};
use crate::rng::{stream, TAG_NEGATIVES, TAG_SUBSET};

/// Uniform subset: `n_items` items without replacement, then `n_users` users
/// among those left with at least one interaction.
pub fn sample_subset(
    ds: &InteractionDataset,
    n_users: usize,
    n_items: usize,
    seed: u64,
) -> Result<InteractionDataset> {
    sample_subset_with_min(ds, n_users, n_items, 1, seed)
}

/// As [`sample_subset`], but users qualify only with at least
/// `min_user_interactions` interactions inside the sampled items. The
/// sampled item universe is kept whole even if some items end up empty.
pub fn sample_subset_with_min(
    ds: &InteractionDataset,
    n_users: usize,
    n_items: usize,
    min_user_interactions: usize,
    seed: u64,
) -> Result<InteractionDataset> {
    if n_items > ds.n_items() || n_users > ds.n_users() {
        return Err(Error::Param(format!(
            "subset {n_users}x{n_items} larger than dataset {}x{}",
            ds.n_users(),
            ds.n_items()
        )));
    }
    if n_users == 0 || n_items == 0 {
        return Err(Error::Param("subset dimensions must be positive".into()));
    }
    let mut rng = stream(seed, &[TAG_SUBSET]);

    let mut items = index::sample(&mut rng, ds.n_items(), n_items).into_vec();
    items.sort_unstable();
    let mut keep_item = vec![false; ds.n_items()];
    for &i in &items {
        keep_item[i] = true;
    }

    let min = min_user_interactions.max(1);
    let qualifying: Vec<usize> = (0..ds.n_users())
        .filter(|&u| {
            ds.rows[u]
                .iter()
                .filter(|x| keep_item[x.item as usize])
                .count()
                >= min
        })
        .collect();
    if qualifying.len() < n_users {
        return Err(Error::Insufficient(format!(
            "only {} users have >= {min} interactions among the {n_items} sampled items, {n_users} requested",
            qualifying.len()
        )));
    }
    let mut users: Vec<usize> = index::sample(&mut rng, qualifying.len(), n_users)
        .into_iter()
        .map(|k| qualifying[k])
        .collect();
    users.sort_unstable();

    let mut pairs = BTreeMap::new();
    for &u in &users {
        for x in &ds.rows[u] {
            if keep_item[x.item as usize] {
                pairs.insert((ds.user_ids[u], ds.item_ids[x.item as usize]), x.timestamp);
            }
        }
    }
    let item_ids = items.iter().map(|&i| ds.item_ids[i]).collect();
    InteractionDataset::with_item_universe(item_ids, pairs)
}

/// Draws `n` distinct items the user has not interacted with and that are
/// not in `exclude`. Deterministic in `(user, seed)`.
pub fn sample_negatives(
    ds: &InteractionDataset,
    user: usize,
    n: usize,
    seed: u64,
    exclude: &[usize],
) -> Result<Vec<usize>> {
    let n_items = ds.n_items();
    let mut blocked = vec![false; n_items];
    for x in &ds.rows[user] {
        blocked[x.item as usize] = true;
    }
    for &e in exclude {
        if e < n_items {
            blocked[e] = true;
        }
    }
    let available = blocked.iter().filter(|&&b| !b).count();
    if available < n {
        return Err(Error::Insufficient(format!(
            "user {} has {available} candidate negatives, {n} requested",
            ds.user_ids[user]
        )));
    }

    let mut rng = stream(seed, &[TAG_NEGATIVES, user as u64]);
    if available <= 4 * n {
        let pool: Vec<usize> = (0..n_items).filter(|&i| !blocked[i]).collect();
        return Ok(index::sample(&mut rng, pool.len(), n)
            .into_iter()
            .map(|k| pool[k])
            .collect());
    }

    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let i = rng.random_range(0..n_items);
        if !blocked[i] && seen.insert(i) {
            out.push(i);
        }
    }
    Ok(out)
}
