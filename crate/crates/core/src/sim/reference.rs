//! Reference light: the beat between the two lasers seen by single-photon
//! detectors, as an inhomogeneous Poisson process.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::channel::ChannelTrace;
use crate::model::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceParams {
    pub mean_rate_hz: f64,
    pub t_r_us: f64,
    pub bin_ns: f64,
    pub visibility: f64,
}

impl ReferenceParams {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self {
            mean_rate_hz: cfg.ref_rate_hz,
            t_r_us: cfg.t_r_us,
            bin_ns: cfg.ref_bin_ns,
            visibility: cfg.ref_visibility,
        }
    }

    pub fn bins_per_window(&self) -> usize {
        (self.t_r_us * 1e3 / self.bin_ns).round() as usize
    }

    pub fn window_s(&self) -> f64 {
        self.t_r_us * 1e-6
    }
}

/// Absolute bin indices of the reference photons detected in window
/// `window`, sorted. Each window has its own random stream, so windows can
/// be generated independently and in any order.
pub fn reference_photon_bins(trace: &ChannelTrace, params: &ReferenceParams, seed: u64, window: u64) -> Vec<u64> {
    let peak = params.mean_rate_hz * (1.0 + params.visibility);
    if peak <= 0.0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(window);
    let gap = Exp::new(peak).expect("positive rate");
    let t_w = params.window_s();
    let bin_s = params.bin_ns * 1e-9;
    let nb = params.bins_per_window() as u64;
    let start = window as f64 * t_w;
    let mut out = Vec::new();
    let mut dt = 0.0;
    loop {
        dt += gap.sample(&mut rng);
        if dt >= t_w {
            break;
        }
        let level = 1.0 + params.visibility * trace.beat_phase(start + dt).cos();
        if rng.random::<f64>() * (1.0 + params.visibility) < level {
            let bin = ((dt / bin_s) as u64).min(nb - 1);
            out.push(window * nb + bin);
        }
    }
    out
}

/// Counts per bin of one window, built from absolute photon bin indices.
pub fn bin_photons(photons: &[u64], window: u64, bins_per_window: usize) -> Vec<u32> {
    let start = window * bins_per_window as u64;
    let mut bins = vec![0u32; bins_per_window];
    for &p in photons {
        if p >= start && p < start + bins_per_window as u64 {
            bins[(p - start) as usize] += 1;
        }
    }
    bins
}

/// Binned reference counts of one window.
pub fn generate_reference_counts(trace: &ChannelTrace, params: &ReferenceParams, seed: u64, window: u64) -> Vec<u32> {
    let photons = reference_photon_bins(trace, params, seed, window);
    bin_photons(&photons, window, params.bins_per_window())
}

/// Number of whole windows that fit in `duration_s`, at least one.
pub fn windows_covering(duration_s: f64, params: &ReferenceParams) -> u64 {
    (duration_s / params.window_s()).ceil().max(1.0) as u64
}
