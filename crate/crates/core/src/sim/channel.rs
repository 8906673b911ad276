//! Laser detuning and fibre phase drift.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::SystemConfig;

/// Channel state is resampled on this grid and held constant in between.
pub const SLOT_S: f64 = 100e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    /// Frequency difference between the two lasers.
    pub delta_f_hz: f64,
    /// Random-walk phase picked up in the fibres.
    pub phase_offset_rad: f64,
    /// Accumulated beat phase `2 pi * integral(delta_f dt)`, kept in `[0, 2 pi)`.
    pub beat_phase_rad: f64,
}

impl ChannelState {
    pub fn initial(cfg: &SystemConfig) -> Self {
        Self {
            delta_f_hz: cfg.beat_center_hz,
            phase_offset_rad: 0.0,
            beat_phase_rad: 0.0,
        }
    }
}

/// Advances the channel by `dt` seconds. The beat phase integrates the
/// frequency held over the step; both random walks then take one step.
pub fn evolve_channel<R: Rng + ?Sized>(
    state: ChannelState,
    dt: f64,
    cfg: &SystemConfig,
    rng: &mut R,
) -> ChannelState {
    assert!(dt > 0.0, "dt must be positive");
    let z_phase: f64 = StandardNormal.sample(rng);
    let z_freq: f64 = StandardNormal.sample(rng);
    let phase_step = cfg.phase_drift_std_rad * (dt / SLOT_S).sqrt();
    let freq_step = cfg.beat_jitter_std_hz * (dt / cfg.t_r_s()).sqrt();
    ChannelState {
        delta_f_hz: state.delta_f_hz + freq_step * z_freq,
        phase_offset_rad: state.phase_offset_rad + phase_step * z_phase,
        beat_phase_rad: (state.beat_phase_rad + TAU * state.delta_f_hz * dt).rem_euclid(TAU),
    }
}

/// Channel states at the start of consecutive [`SLOT_S`] slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTrace {
    pub slots: Vec<ChannelState>,
}

impl ChannelTrace {
    /// Generates enough slots to cover `duration_s`.
    pub fn generate(cfg: &SystemConfig, duration_s: f64, rng: &mut ChaCha8Rng) -> Self {
        let n = (duration_s / SLOT_S).ceil().max(1.0) as usize + 1;
        let mut slots = Vec::with_capacity(n);
        let mut state = ChannelState::initial(cfg);
        slots.push(state);
        while slots.len() < n {
            state = evolve_channel(state, SLOT_S, cfg, rng);
            slots.push(state);
        }
        Self { slots }
    }

    pub fn duration_s(&self) -> f64 {
        self.slots.len() as f64 * SLOT_S
    }

    fn slot(&self, t: f64) -> (usize, f64) {
        let s = ((t / SLOT_S).floor().max(0.0) as usize).min(self.slots.len() - 1);
        (s, t - s as f64 * SLOT_S)
    }

    pub fn state_at(&self, t: f64) -> ChannelState {
        self.slots[self.slot(t).0]
    }

    /// Beat phase at time `t`, not reduced.
    pub fn beat_phase(&self, t: f64) -> f64 {
        let (s, dt) = self.slot(t);
        let st = &self.slots[s];
        st.beat_phase_rad + TAU * st.delta_f_hz * dt
    }

    /// Phase between the two pulses at the beam splitter, given the
    /// senders' encoded phases.
    pub fn relative_phase(&self, t: f64, theta_a: f64, theta_b: f64) -> f64 {
        let (s, _) = self.slot(t);
        theta_a - theta_b - self.beat_phase(t) + self.slots[s].phase_offset_rad
    }

    /// Time-averaged frequency difference over `[t0, t1)`.
    pub fn mean_delta_f(&self, t0: f64, t1: f64) -> f64 {
        let mut acc = 0.0;
        let mut t = t0;
        while t < t1 {
            let (s, _) = self.slot(t);
            let mut end = if s + 1 < self.slots.len() {
                ((s + 1) as f64 * SLOT_S).min(t1)
            } else {
                t1
            };
            if end <= t {
                end = t1;
            }
            acc += self.slots[s].delta_f_hz * (end - t);
            t = end;
        }
        acc / (t1 - t0)
    }
}
