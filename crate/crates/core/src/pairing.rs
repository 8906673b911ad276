//! Filtering of ineffective rounds and greedy pairing of the remaining
//! ones within the maximum pairing interval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DetectionRecord, IntensityClass, RoundTag};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PairingError {
    #[error("length mismatch: {tags} round tags but {detections} detection records")]
    LengthMismatch { tags: usize, detections: usize },
}

/// `c_prime[j]` is true when round `j` may take part in pairing.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterMask {
    pub c_prime: Vec<bool>,
}

/// True for the class combinations that are discarded before pairing: one
/// party on the signal intensity while the other is on the decoy.
pub fn is_mixed_signal_decoy(a: IntensityClass, b: IntensityClass) -> bool {
    use IntensityClass::*;
    matches!((a, b), (Signal, Decoy) | (Decoy, Signal))
}

/// Whether a round survives the filter.
pub fn is_effective(a: IntensityClass, b: IntensityClass, d: DetectionRecord) -> bool {
    d.is_effective() && !is_mixed_signal_decoy(a, b)
}

pub fn filter_rounds(tags: &[RoundTag], detections: &[DetectionRecord]) -> Result<FilterMask, PairingError> {
    if tags.len() != detections.len() {
        return Err(PairingError::LengthMismatch {
            tags: tags.len(),
            detections: detections.len(),
        });
    }
    Ok(FilterMask {
        c_prime: tags
            .iter()
            .zip(detections)
            .map(|(t, d)| is_effective(t.intensity_a, t.intensity_b, *d))
            .collect(),
    })
}

/// Streaming form of the greedy pairing. Feed effective round indices in
/// increasing order; a pair is returned as soon as it closes.
#[derive(Debug, Clone)]
pub struct Pairer {
    l_max: u64,
    opener: Option<u64>,
}

impl Pairer {
    pub fn new(l_max: u64) -> Self {
        assert!(l_max >= 1, "l_max must be at least 1");
        Self { l_max, opener: None }
    }

    pub fn push(&mut self, j: u64) -> Option<(u64, u64)> {
        match self.opener {
            Some(f) if j - f <= self.l_max => {
                self.opener = None;
                Some((f, j))
            }
            _ => {
                self.opener = Some(j);
                None
            }
        }
    }
}

/// Pairs effective rounds given by their (increasing) indices. Returns
/// positions into `rounds`.
pub fn pair_positions(rounds: &[u64], l_max: u64) -> Vec<(usize, usize)> {
    let mut opener: Option<usize> = None;
    let mut out = Vec::new();
    for (i, &j) in rounds.iter().enumerate() {
        match opener {
            Some(f) if j - rounds[f] <= l_max => {
                out.push((f, i));
                opener = None;
            }
            _ => opener = Some(i),
        }
    }
    out
}

/// Pairs the rounds set in `mask`. A trailing unmatched round is dropped.
pub fn pair_rounds(mask: &FilterMask, l_max: u64) -> Vec<(u64, u64)> {
    let mut p = Pairer::new(l_max);
    mask.c_prime
        .iter()
        .enumerate()
        .filter(|(_, &c)| c)
        .filter_map(|(j, _)| p.push(j as u64))
        .collect()
}
