//! MovieLens-shaped synthetic ratings.
//!
//! Items get a long-tailed popularity (Zipf over a random rank order) and a
//! latent taste vector; users get a latent taste vector and a log-normal
//! activity level. Each user rates `activity` distinct items drawn with
//! weight `popularity * exp(affinity * <user, item>)`. Output uses the
//! ratings-file schema so it goes through the same ingestion path as real
//! data.

use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

use super::RawRating;
use crate::error::{Error, Result};
use crate::rng::stream;

const TAG_SYNTHETIC: u64 = 0x5359_4e54;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub seed: u64,
    pub latent_dim: usize,
    /// Zipf exponent of item popularity.
    pub popularity_exponent: f64,
    /// Scale on the user–item latent inner product.
    pub affinity: f64,
    /// Mean fraction of the catalogue a user rates.
    pub mean_density: f64,
    /// Log-normal shape of user activity.
    pub activity_sigma: f64,
    pub min_per_user: usize,
}

impl SyntheticSpec {
    pub fn new(n_users: usize, n_items: usize, seed: u64) -> Self {
        Self {
            n_users,
            n_items,
            seed,
            latent_dim: 8,
            popularity_exponent: 0.9,
            affinity: 4.0,
            mean_density: 0.024,
            activity_sigma: 1.0,
            min_per_user: 2,
        }
    }
}

/// Parses `synthetic:USERSxITEMS` or `synthetic:USERSxITEMS:SEED`.
impl FromStr for SyntheticSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let rest = s
            .strip_prefix("synthetic:")
            .ok_or_else(|| format!("`{s}` is not a synthetic source"))?;
        let mut parts = rest.split(':');
        let dims = parts.next().unwrap_or_default();
        let (u, i) = dims
            .split_once('x')
            .ok_or_else(|| format!("expected USERSxITEMS, got `{dims}`"))?;
        let n_users = u.trim().parse().map_err(|e| format!("users `{u}`: {e}"))?;
        let n_items = i.trim().parse().map_err(|e| format!("items `{i}`: {e}"))?;
        let seed = match parts.next() {
            Some(p) => p.trim().parse().map_err(|e| format!("seed `{p}`: {e}"))?,
            None => 0,
        };
        if parts.next().is_some() {
            return Err(format!("trailing fields in `{s}`"));
        }
        Ok(Self::new(n_users, n_items, seed))
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<Vec<RawRating>> {
    if spec.n_users == 0 || spec.n_items < 2 * spec.min_per_user.max(1) {
        return Err(Error::Param(format!(
            "synthetic dataset {}x{} too small",
            spec.n_users, spec.n_items
        )));
    }
    let mut rng = stream(spec.seed, &[TAG_SYNTHETIC]);
    let d = spec.latent_dim.max(1);
    let item_scale = 1.0 / (d as f64).sqrt();

    let mut ranks: Vec<usize> = (0..spec.n_items).collect();
    ranks.shuffle(&mut rng);
    let popularity: Vec<f64> = ranks
        .iter()
        .map(|&r| ((r + 1) as f64).powf(-spec.popularity_exponent))
        .collect();
    let item_taste: Vec<f64> = (0..spec.n_items * d)
        .map(|_| item_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();

    // E[lognormal] = exp(mu + sigma^2 / 2)
    let mean = spec.mean_density * spec.n_items as f64;
    let sigma = spec.activity_sigma;
    let activity = LogNormal::new(mean.max(1.0).ln() - sigma * sigma / 2.0, sigma)
        .map_err(|e| Error::Param(format!("activity distribution: {e}")))?;
    let cap = spec.n_items / 2;

    let mut out = Vec::new();
    let mut weights = vec![0.0; spec.n_items];
    for u in 0..spec.n_users {
        let taste: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        for (i, w) in weights.iter_mut().enumerate() {
            let dot: f64 = taste
                .iter()
                .zip(&item_taste[i * d..(i + 1) * d])
                .map(|(a, b)| a * b)
                .sum();
            *w = popularity[i] * (spec.affinity * dot).exp();
        }
        let n = (activity.sample(&mut rng).round() as usize).clamp(spec.min_per_user.max(1), cap);
        let chosen = index::sample_weighted(&mut rng, spec.n_items, |i| weights[i], n)
            .map_err(|e| Error::Numeric(format!("weighted sampling: {e}")))?;
        let mut ts = 1_000_000_000 + rng.random_range(0..100_000_000i64);
        for i in chosen {
            ts += rng.random_range(1..10_000);
            out.push(RawRating {
                user_id: u as u64 + 1,
                item_id: i as u64 + 1,
                rating: f64::from(rng.random_range(1..=10u8)) * 0.5,
                timestamp: ts,
            });
        }
    }
    Ok(out)
}
