//! Test-basis pair ensembles with a controlled residual phase.
//!
//! Every pair is built so that the announced phase differences fall exactly
//! on 0 or pi, while the light actually meets with an extra phase error
//! `residual_rad` in the second round. The sifted error rate of such pairs
//! isolates the effect of a residual phase from the slice width.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::click::click_probabilities;
use super::SimError;
use crate::model::{DetectionRecord, IntensityClass, PairRecord, RoundTag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualEnsemble {
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub dark_prob: f64,
    pub residual_rad: f64,
}

const CHUNK_PAIRS: u64 = 1 << 16;

/// One round conditioned on exactly one detector firing.
fn effective_click<R: Rng>(e: &ResidualEnsemble, phi: f64, rng: &mut R) -> Result<DetectionRecord, SimError> {
    let (pl, pr) = click_probabilities(e.kappa_a, e.kappa_b, phi, e.dark_prob)?;
    let only_l = pl * (1.0 - pr);
    let only_r = pr * (1.0 - pl);
    let l = rng.random::<f64>() * (only_l + only_r) < only_l;
    Ok(DetectionRecord::new(l, !l))
}

/// `n_pairs` pairs of adjacent rounds `(2i, 2i + 1)`, both parties on the
/// decoy intensity in both rounds, each round with exactly one click.
pub fn simulate_residual_pairs(e: &ResidualEnsemble, n_pairs: u64, seed: u64) -> Result<Vec<PairRecord>, SimError> {
    let chunks: Vec<u64> = (0..n_pairs.div_ceil(CHUNK_PAIRS)).collect();
    let parts: Result<Vec<Vec<PairRecord>>, SimError> = chunks
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let end = ((c + 1) * CHUNK_PAIRS).min(n_pairs);
            (c * CHUNK_PAIRS..end)
                .map(|i| {
                    let theta_aj = rng.random::<f64>() * TAU;
                    let theta_bj = rng.random::<f64>() * TAU;
                    let theta_ak = rng.random::<f64>() * TAU;
                    let branch = if rng.random::<bool>() { PI } else { 0.0 };
                    let delta_a = theta_aj - theta_ak;
                    let theta_bk = (theta_bj - delta_a + branch).rem_euclid(TAU);
                    let phi_j = theta_aj - theta_bj;
                    let phi_k = theta_ak - theta_bk + e.residual_rad;
                    let tag = |a: f64, b: f64| RoundTag {
                        intensity_a: IntensityClass::Decoy,
                        intensity_b: IntensityClass::Decoy,
                        phase_a: a,
                        phase_b: b,
                    };
                    Ok(PairRecord {
                        j: 2 * i,
                        k: 2 * i + 1,
                        tag_j: tag(theta_aj, theta_bj),
                        tag_k: tag(theta_ak, theta_bk),
                        click_j: effective_click(e, phi_j, &mut rng)?,
                        click_k: effective_click(e, phi_k, &mut rng)?,
                    })
                })
                .collect()
        })
        .collect();
    Ok(parts?.concat())
}
