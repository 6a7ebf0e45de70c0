use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Monte Carlo estimate of the number of same-box pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub mean: f64,
    /// Sample standard deviation over trials divided by `√trials`.
    pub std_error: f64,
    pub trials: usize,
}

/// `C(f, 2) / b`: each of the `C(f, 2)` pairs shares a box with
/// probability `1/b`.
pub fn closed_form_pairs(freed: usize, boxes: usize) -> f64 {
    let f = freed as f64;
    f * (f - 1.0) / 2.0 / boxes as f64
}

fn colliding_pairs(rng: &mut ChaCha8Rng, freed: usize, counts: &mut [u64]) -> u64 {
    counts.iter_mut().for_each(|c| *c = 0);
    let b = counts.len() as u64;
    for _ in 0..freed {
        counts[rng.random_range(0..b) as usize] += 1;
    }
    counts.iter().map(|&c| c * c.saturating_sub(1) / 2).sum()
}

/// Drops `freed` items uniformly into `boxes` boxes, `trials` times, and
/// averages the number of unordered pairs landing in the same box.
///
/// Trial `t` draws from ChaCha8 keyed by `seed` on stream `t`, so the
/// result does not depend on how trials are spread over threads.
pub fn expected_relaxed_pairs(
    freed: usize,
    boxes: usize,
    trials: usize,
    seed: u64,
) -> Result<PairEstimate> {
    if boxes == 0 {
        return Err(Error::Config("need at least one box".into()));
    }
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    if freed < 2 {
        return Ok(PairEstimate {
            mean: 0.0,
            std_error: 0.0,
            trials,
        });
    }

    let counts: Vec<u64> = (0..trials)
        .into_par_iter()
        .map_init(
            || vec![0u64; boxes],
            |scratch, t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                colliding_pairs(&mut rng, freed, scratch)
            },
        )
        .collect();

    let n = trials as f64;
    let mean = counts.iter().sum::<u64>() as f64 / n;
    let std_error = if trials > 1 {
        let var = counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(PairEstimate {
        mean,
        std_error,
        trials,
    })
}
