use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Interaction, RatingScale, Vocab};
use crate::error::DataError;

/// Low-rank-plus-noise rating generator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_users: usize,
    pub n_items: usize,
    /// Fraction of the user × item grid that receives a rating, in `(0, 1]`.
    pub density: f64,
    pub scale: RatingScale,
    pub latent_rank: usize,
    /// Standard deviation of the additive Gaussian noise, in rating units.
    pub noise_std: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            n_users: 50,
            n_items: 40,
            density: 0.3,
            scale: RatingScale { min: 1.0, max: 5.0 },
            latent_rank: 2,
            noise_std: 0.1,
        }
    }
}

/// Ratings `min + span · (p_u · q_i) / rank + noise`, clamped to the scale, with
/// `p, q ~ U(0, 1)^rank`. User and item ids are their decimal indices.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset, DataError> {
    cfg.scale.validate()?;
    if !(cfg.density > 0.0 && cfg.density <= 1.0) {
        return Err(DataError::Synthetic(format!("density {} not in (0, 1]", cfg.density)));
    }
    if cfg.latent_rank == 0 {
        return Err(DataError::Synthetic("latent rank must be positive".into()));
    }
    let cells = cfg.n_users * cfg.n_items;
    let expected = cfg.density * cells as f64;
    if expected < 1.0 {
        return Err(DataError::Synthetic(format!(
            "density × users × items = {expected} < 1"
        )));
    }
    let n = (expected.round() as usize).clamp(1, cells);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut factors = |rows: usize| -> Vec<f64> {
        (0..rows * cfg.latent_rank).map(|_| rng.random::<f64>()).collect()
    };
    let p = factors(cfg.n_users);
    let q = factors(cfg.n_items);

    let mut picked = sample(&mut rng, cells, n).into_vec();
    picked.sort_unstable();

    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).map_err(|e| DataError::Synthetic(e.to_string()))?;
    let span = cfg.scale.max - cfg.scale.min;
    let k = cfg.latent_rank;
    let interactions = picked
        .into_iter()
        .map(|cell| {
            let (u, i) = (cell / cfg.n_items, cell % cfg.n_items);
            let signal: f64 = (0..k).map(|f| p[u * k + f] * q[i * k + f]).sum::<f64>() / k as f64;
            let r = cfg.scale.min + span * signal + noise.sample(&mut rng);
            Interaction {
                user: u as u32,
                item: i as u32,
                rating: r.clamp(cfg.scale.min, cfg.scale.max),
                timestamp: None,
            }
        })
        .collect();

    let users = Arc::new(Vocab::from_ids((0..cfg.n_users).map(|u| u.to_string())));
    let items = Arc::new(Vocab::from_ids((0..cfg.n_items).map(|i| i.to_string())));
    Ok(Dataset::new(
        format!("synthetic-{}", cfg.seed),
        cfg.scale,
        users,
        items,
        interactions,
    ))
}
