//! Round-by-round simulation of both senders, the channel and Charlie.
//!
//! Randomness is counter based: the intensity classes and phases of round
//! `j` sit at a fixed offset of their own ChaCha streams, and every other
//! per-round draw comes from a stream selected by `j`. Rounds can therefore
//! be generated in any order and on any number of threads with identical
//! results. Rounds that cannot click are never visited: candidates are drawn
//! by geometric skipping at the largest click probability of any class
//! pair and accepted with the true probability, which is exact because the
//! any-click probability does not depend on the phases.

use std::f64::consts::TAU;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channel::ChannelTrace;
use super::click::{any_click_probability, click_probabilities, detector_means};
use super::SimError;
use crate::model::{validate_config, DetectionRecord, IntensityClass, RoundTag, SystemConfig};

const CHUNK_ROUNDS: u64 = 1 << 22;

const STREAM_CLASS: u64 = 1;
const STREAM_PHASE: u64 = 2;
const STREAM_SKIP: u64 = 3;
const STREAM_DETAIL: u64 = 4;
const STREAM_TRUTH: u64 = 5;
const STREAM_CHANNEL: u64 = 6;
const STREAM_REFERENCE: u64 = 7;
const STREAM_BLOCK: u64 = 8;

/// Derives an independent 64-bit key from `seed` for `(domain, index)`.
pub fn subkey(seed: u64, domain: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(domain);
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

/// Seed of block `index` of a run.
pub fn block_seed(seed: u64, index: u64) -> u64 {
    subkey(seed, STREAM_BLOCK, index)
}

/// Seed of the reference-light generator of a block.
pub fn reference_seed(seed: u64) -> u64 {
    subkey(seed, STREAM_REFERENCE, 0)
}

/// Latent photon numbers actually emitted in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub photon_count_a: u16,
    pub photon_count_b: u16,
}

/// A round in which at least one detector fired.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickEvent {
    pub round: u64,
    pub tag: RoundTag,
    pub clicks: DetectionRecord,
    pub truth: GroundTruth,
}

/// Overrides for controlled experiments.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimOptions {
    pub force_a: Option<IntensityClass>,
    pub force_b: Option<IntensityClass>,
    /// Bob reuses Alice's phase in every round.
    pub equal_phases: bool,
}

/// Per-class detected mean photon numbers and the random streams of one
/// block.
#[derive(Debug, Clone)]
struct RoundSource {
    opts: SimOptions,
    p_a: [f64; 3],
    p_b: [f64; 3],
    tau_a: [f64; 3],
    tau_b: [f64; 3],
    kappa_a: [f64; 3],
    kappa_b: [f64; 3],
    dark: f64,
    clock_hz: f64,
    class_rng: ChaCha8Rng,
    phase_rng: ChaCha8Rng,
    detail_rng: ChaCha8Rng,
    truth_rng: ChaCha8Rng,
}

fn stream(seed: u64, domain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(subkey(seed, domain, 0));
    rng.set_stream(0);
    rng
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Poisson draw conditioned on being at least one, by inversion.
fn poisson_nonzero<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean > 5.0 {
        loop {
            let k = poisson(mean, rng);
            if k > 0 {
                return k;
            }
        }
    }
    let mut target = rng.random::<f64>() * -(-mean).exp_m1();
    let mut k = 1u64;
    let mut term = mean * (-mean).exp();
    loop {
        if target < term || term <= 0.0 {
            return k;
        }
        target -= term;
        k += 1;
        term *= mean / k as f64;
    }
}

/// Photons that reached a detector, given whether it fired.
fn detected_photons<R: Rng + ?Sized>(mean: f64, clicked: bool, dark: f64, rng: &mut R) -> u64 {
    if !clicked || mean <= 0.0 {
        return 0;
    }
    let p_click = 1.0 - (1.0 - dark) * (-mean).exp();
    let p_dark_only = dark * (-mean).exp() / p_click;
    if rng.random::<f64>() < p_dark_only {
        0
    } else {
        poisson_nonzero(mean, rng)
    }
}

fn to_u16(n: u64) -> u16 {
    n.min(u16::MAX as u64) as u16
}

impl RoundSource {
    fn new(cfg: &SystemConfig, seed: u64, opts: SimOptions) -> Self {
        let eta = cfg.det_efficiency;
        let t_a = cfg.alice.transmittance() * eta;
        let t_b = cfg.bob.transmittance() * eta;
        let tau_a = IntensityClass::ALL.map(|c| cfg.alice.intensity(c));
        let tau_b = IntensityClass::ALL.map(|c| cfg.bob.intensity(c));
        Self {
            opts,
            p_a: IntensityClass::ALL.map(|c| cfg.alice.probability(c)),
            p_b: IntensityClass::ALL.map(|c| cfg.bob.probability(c)),
            tau_a,
            tau_b,
            kappa_a: tau_a.map(|t| t * t_a),
            kappa_b: tau_b.map(|t| t * t_b),
            dark: cfg.dark_prob(),
            clock_hz: cfg.clock_hz,
            class_rng: stream(seed, STREAM_CLASS),
            phase_rng: stream(seed, STREAM_PHASE),
            detail_rng: stream(seed, STREAM_DETAIL),
            truth_rng: stream(seed, STREAM_TRUTH),
        }
    }

    fn pick(p: &[f64; 3], u: f64) -> IntensityClass {
        if u < p[0] {
            IntensityClass::Signal
        } else if u < p[0] + p[1] {
            IntensityClass::Decoy
        } else {
            IntensityClass::Vacuum
        }
    }

    fn resolve(&self, ua: f64, ub: f64) -> (IntensityClass, IntensityClass) {
        (
            self.opts.force_a.unwrap_or_else(|| Self::pick(&self.p_a, ua)),
            self.opts.force_b.unwrap_or_else(|| Self::pick(&self.p_b, ub)),
        )
    }

    /// Classes from the next two draws of a positioned class stream.
    fn next_classes(&self, rng: &mut ChaCha8Rng) -> (IntensityClass, IntensityClass) {
        let ua: f64 = rng.random();
        let ub: f64 = rng.random();
        self.resolve(ua, ub)
    }

    fn classes(&mut self, j: u64) -> (IntensityClass, IntensityClass) {
        self.class_rng.set_word_pos(4 * j as u128);
        let ua: f64 = self.class_rng.random();
        let ub: f64 = self.class_rng.random();
        self.resolve(ua, ub)
    }

    fn phases(&mut self, j: u64) -> (f64, f64) {
        self.phase_rng.set_word_pos(4 * j as u128);
        let a = self.phase_rng.random::<f64>() * TAU;
        let b = self.phase_rng.random::<f64>() * TAU;
        (a, if self.opts.equal_phases { a } else { b })
    }

    fn tag(&mut self, j: u64) -> RoundTag {
        let (intensity_a, intensity_b) = self.classes(j);
        let (phase_a, phase_b) = self.phases(j);
        RoundTag {
            intensity_a,
            intensity_b,
            phase_a,
            phase_b,
        }
    }

    fn max_click_probability(&self) -> f64 {
        let allowed = |f: Option<IntensityClass>, p: &[f64; 3]| -> Vec<usize> {
            match f {
                Some(c) => vec![c.code() as usize],
                None => (0..3).filter(|&i| p[i] > 0.0).collect(),
            }
        };
        let mut best: f64 = 0.0;
        for a in allowed(self.opts.force_a, &self.p_a) {
            for b in allowed(self.opts.force_b, &self.p_b) {
                best = best.max(any_click_probability(self.kappa_a[a], self.kappa_b[b], self.dark));
            }
        }
        best
    }

    /// Evaluates candidate round `j`; returns the event if a detector fired.
    fn candidate(&mut self, j: u64, p_max: f64, trace: &ChannelTrace) -> Result<Option<ClickEvent>, SimError> {
        let (ca, cb) = self.classes(j);
        let (ia, ib) = (ca.code() as usize, cb.code() as usize);
        let (ka, kb) = (self.kappa_a[ia], self.kappa_b[ib]);
        let p_any = any_click_probability(ka, kb, self.dark);
        let mut rng = self.detail_rng.clone();
        rng.set_stream(j);
        if rng.random::<f64>() * p_max >= p_any {
            return Ok(None);
        }
        let (phase_a, phase_b) = self.phases(j);
        let t = j as f64 / self.clock_hz;
        let phi = trace.relative_phase(t, phase_a, phase_b);
        let (pl, pr) = click_probabilities(ka, kb, phi, self.dark)?;
        let only_l = pl * (1.0 - pr);
        let only_r = pr * (1.0 - pl);
        let w = rng.random::<f64>() * (only_l + only_r + pl * pr);
        let clicks = if w < only_l {
            DetectionRecord::new(true, false)
        } else if w < only_l + only_r {
            DetectionRecord::new(false, true)
        } else {
            DetectionRecord::new(true, true)
        };
        let (mean_l, mean_r) = detector_means(ka, kb, phi)?;
        let k = detected_photons(mean_l, clicks.clicked_l, self.dark, &mut rng)
            + detected_photons(mean_r, clicks.clicked_r, self.dark, &mut rng);
        let k_a = if k > 0 {
            Binomial::new(k, ka / (ka + kb))
                .map_err(|e| SimError::Domain(e.to_string()))?
                .sample(&mut rng)
        } else {
            0
        };
        let n_a = k_a + poisson(self.tau_a[ia] - ka, &mut rng);
        let n_b = (k - k_a) + poisson(self.tau_b[ib] - kb, &mut rng);
        Ok(Some(ClickEvent {
            round: j,
            tag: RoundTag {
                intensity_a: ca,
                intensity_b: cb,
                phase_a,
                phase_b,
            },
            clicks,
            truth: GroundTruth {
                photon_count_a: to_u16(n_a),
                photon_count_b: to_u16(n_b),
            },
        }))
    }

    /// Photon numbers of a round in which nothing was detected.
    fn silent_truth(&self, j: u64, ca: IntensityClass, cb: IntensityClass) -> GroundTruth {
        let mut rng = self.truth_rng.clone();
        rng.set_stream(j);
        let (ia, ib) = (ca.code() as usize, cb.code() as usize);
        GroundTruth {
            photon_count_a: to_u16(poisson(self.tau_a[ia] - self.kappa_a[ia], &mut rng)),
            photon_count_b: to_u16(poisson(self.tau_b[ib] - self.kappa_b[ib], &mut rng)),
        }
    }
}

/// Click events of one simulated block, in round order.
#[derive(Debug, Clone)]
pub struct SimEvents {
    pub seed: u64,
    pub n_rounds: u64,
    pub clock_hz: f64,
    pub events: Vec<ClickEvent>,
    pub trace: ChannelTrace,
    pub options: SimOptions,
}

fn chunks(n: u64) -> Vec<(u64, u64, u64)> {
    (0..n.div_ceil(CHUNK_ROUNDS))
        .map(|c| (c, c * CHUNK_ROUNDS, ((c + 1) * CHUNK_ROUNDS).min(n)))
        .collect()
}

/// Simulates `cfg.n_rounds` rounds and keeps only the rounds with a click.
pub fn simulate_events(cfg: &SystemConfig, seed: u64, opts: SimOptions) -> Result<SimEvents, SimError> {
    let cfg = validate_config(cfg.clone())?;
    let n = cfg.n_rounds;
    let duration = n as f64 / cfg.clock_hz;
    // The trace also covers the reference windows overlapping the block.
    let cover = (duration / cfg.t_r_s()).ceil().max(1.0) * cfg.t_r_s();
    let mut channel_rng = stream(seed, STREAM_CHANNEL);
    let trace = ChannelTrace::generate(&cfg, cover, &mut channel_rng);
    let source = RoundSource::new(&cfg, seed, opts);
    let p_max = source.max_click_probability();
    let skip_base = stream(seed, STREAM_SKIP);
    let parts: Result<Vec<Vec<ClickEvent>>, SimError> = chunks(n)
        .into_par_iter()
        .map(|(c, start, end)| {
            let mut events = Vec::new();
            if p_max <= 0.0 {
                return Ok(events);
            }
            let mut src = source.clone();
            let mut skip = skip_base.clone();
            skip.set_stream(c);
            let geo = Geometric::new(p_max).map_err(|e| SimError::Domain(e.to_string()))?;
            let mut j = start;
            loop {
                j = j.saturating_add(geo.sample(&mut skip));
                if j >= end {
                    break;
                }
                if let Some(ev) = src.candidate(j, p_max, &trace)? {
                    events.push(ev);
                }
                j += 1;
            }
            Ok(events)
        })
        .collect();
    Ok(SimEvents {
        seed,
        n_rounds: n,
        clock_hz: cfg.clock_hz,
        events: parts?.concat(),
        trace,
        options: opts,
    })
}

/// A fully materialised block: one packed byte per round (see
/// [`crate::sim::record::pack_round`]) plus the click events carrying
/// phases and photon numbers.
#[derive(Debug, Clone)]
pub struct SimBlock {
    pub events: SimEvents,
    pub packed: Vec<u8>,
    source: RoundSource,
}

/// Simulates a block and materialises every round.
pub fn simulate_block(cfg: &SystemConfig, seed: u64, opts: SimOptions) -> Result<SimBlock, SimError> {
    let events = simulate_events(cfg, seed, opts)?;
    let source = RoundSource::new(cfg, seed, opts);
    let mut packed = vec![0u8; events.n_rounds as usize];
    packed
        .par_chunks_mut(CHUNK_ROUNDS as usize)
        .enumerate()
        .for_each(|(c, out)| {
            let mut rng = source.class_rng.clone();
            rng.set_word_pos(4 * (c as u128) * CHUNK_ROUNDS as u128);
            for b in out.iter_mut() {
                let (ca, cb) = source.next_classes(&mut rng);
                *b = super::record::pack_round(ca, cb, DetectionRecord::default());
            }
        });
    for ev in &events.events {
        packed[ev.round as usize] =
            super::record::pack_round(ev.tag.intensity_a, ev.tag.intensity_b, ev.clicks);
    }
    Ok(SimBlock {
        events,
        packed,
        source,
    })
}

impl SimBlock {
    pub fn n_rounds(&self) -> u64 {
        self.events.n_rounds
    }

    fn event(&self, j: u64) -> Option<&ClickEvent> {
        self.events
            .events
            .binary_search_by_key(&j, |e| e.round)
            .ok()
            .map(|i| &self.events.events[i])
    }

    pub fn round_tag(&self, j: u64) -> RoundTag {
        match self.event(j) {
            Some(e) => e.tag,
            None => self.source.clone().tag(j),
        }
    }

    pub fn detection(&self, j: u64) -> DetectionRecord {
        self.event(j).map(|e| e.clicks).unwrap_or_default()
    }

    pub fn truth(&self, j: u64) -> GroundTruth {
        match self.event(j) {
            Some(e) => e.truth,
            None => {
                let t = self.round_tag(j);
                self.source.silent_truth(j, t.intensity_a, t.intensity_b)
            }
        }
    }

    pub fn round_tags(&self) -> Vec<RoundTag> {
        let mut src = self.source.clone();
        (0..self.n_rounds())
            .map(|j| match self.event(j) {
                Some(e) => e.tag,
                None => src.tag(j),
            })
            .collect()
    }

    pub fn detections(&self) -> Vec<DetectionRecord> {
        let mut out = vec![DetectionRecord::default(); self.n_rounds() as usize];
        for e in &self.events.events {
            out[e.round as usize] = e.clicks;
        }
        out
    }

    pub fn ground_truth(&self) -> Vec<GroundTruth> {
        (0..self.n_rounds()).map(|j| self.truth(j)).collect()
    }
}
