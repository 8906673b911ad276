//! End-to-end runs: simulate or load blocks, estimate the beat frequency,
//! pair, sift, tally, and turn the accumulated tallies into a report.
//!
//! Blocks are independent. Pairing restarts at every block boundary, so the
//! tallies of a run are the sum of the tallies of its blocks and blocks can
//! be processed on any number of threads.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimate::{estimate_key_rate, EstimateError, EstimationResult, Mode};
use crate::freqref::BeatEstimator;
use crate::model::{validate_config, ConfigError, Epsilons, PairRecord, RoundTag, SystemConfig};
use crate::pairing::{is_effective, Pairer};
use crate::siftmap::{process_pair, TallyTable};
use crate::sim::channel::ChannelTrace;
use crate::sim::record::{
    BlockFiles, BlockPaths, PhaseEntry, RecordError, RecordFile, ReferenceStream, TruthEntry,
};
use crate::sim::reference::{bin_photons, reference_photon_bins, windows_covering, ReferenceParams};
use crate::sim::source::{block_seed, reference_seed, simulate_block, simulate_events, ClickEvent, SimEvents, SimOptions};
use crate::sim::SimError;

pub const THREADS_ENV: &str = "MPQKD_THREADS";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
}

impl PipelineError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Where the beat frequency used to correct test pairs comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencySource {
    /// FFT of the reference light in the window before the closing round.
    Reference,
    /// A constant, in Hz.
    Fixed(f64),
    /// The simulated channel's instantaneous value (no estimation error).
    ChannelTruth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub frequency: FrequencySource,
    pub sim: SimOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            frequency: FrequencySource::Reference,
            sim: SimOptions::default(),
        }
    }
}

/// What one block contributes to a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockResult {
    pub n_rounds: u64,
    pub tallies: TallyTable,
    /// Z pairs in which each party emitted exactly one photon in total.
    pub true_n11_z: Option<u64>,
    /// Beat frequency estimates by reference window.
    pub delta_f_estimates: BTreeMap<u64, f64>,
    pub delta_f_failures: u64,
}

enum Photons<'a> {
    Generated {
        trace: &'a ChannelTrace,
        params: ReferenceParams,
        seed: u64,
    },
    Stored(&'a [u64]),
}

struct ReferenceOracle<'a> {
    photons: Photons<'a>,
    bins_per_window: usize,
    window_s: f64,
    estimator: BeatEstimator,
    fallback_hz: f64,
    cache: BTreeMap<u64, Option<f64>>,
}

impl ReferenceOracle<'_> {
    fn window_photons(&self, w: u64) -> Vec<u64> {
        match &self.photons {
            Photons::Generated { trace, params, seed } => reference_photon_bins(trace, params, *seed, w),
            Photons::Stored(all) => {
                let lo = w * self.bins_per_window as u64;
                let hi = lo + self.bins_per_window as u64;
                let a = all.partition_point(|&p| p < lo);
                let b = all.partition_point(|&p| p < hi);
                all[a..b].to_vec()
            }
        }
    }

    fn window(&mut self, w: u64) -> Option<f64> {
        if let Some(v) = self.cache.get(&w) {
            return *v;
        }
        let bins = bin_photons(&self.window_photons(w), w, self.bins_per_window);
        let v = self
            .estimator
            .estimate(&bins, w as f64 * self.window_s)
            .ok()
            .map(|e| e.delta_f_hz);
        self.cache.insert(w, v);
        v
    }

    /// Estimate from the last complete window before `t`; the first window
    /// stands in for itself.
    fn at(&mut self, t: f64) -> f64 {
        let w = ((t / self.window_s).floor() as u64).saturating_sub(1);
        self.window(w).unwrap_or(self.fallback_hz)
    }
}

enum FrequencyOracle<'a> {
    Fixed(f64),
    Channel(&'a ChannelTrace),
    Reference(Box<ReferenceOracle<'a>>),
}

impl FrequencyOracle<'_> {
    fn at(&mut self, t: f64) -> f64 {
        match self {
            Self::Fixed(f) => *f,
            Self::Channel(trace) => trace.state_at(t).delta_f_hz,
            Self::Reference(r) => r.at(t),
        }
    }
}

fn reference_oracle<'a>(
    photons: Photons<'a>,
    bin_ns: f64,
    t_r_us: f64,
    cfg: &SystemConfig,
) -> Result<ReferenceOracle<'a>, PipelineError> {
    let bins_per_window = (t_r_us * 1e3 / bin_ns).round() as usize;
    let estimator = BeatEstimator::new(bins_per_window, bin_ns, cfg.fft_pad_factor)
        .map_err(|e| PipelineError::Input(format!("reference stream: {e}")))?;
    Ok(ReferenceOracle {
        photons,
        bins_per_window,
        window_s: t_r_us * 1e-6,
        estimator,
        fallback_hz: cfg.beat_center_hz,
        cache: BTreeMap::new(),
    })
}

/// Filters, pairs, sifts and tallies the click events of one block.
/// `events` must be in round order; rounds without a click may be absent.
fn tally_events(
    events: &[ClickEvent],
    have_truth: bool,
    n_rounds: u64,
    cfg: &SystemConfig,
    mut freq: FrequencyOracle<'_>,
) -> BlockResult {
    let mut pairer = Pairer::new(cfg.l_max);
    let mut opener: Option<&ClickEvent> = None;
    let mut tallies = TallyTable::default();
    let mut true_n11 = 0u64;
    for ev in events {
        if !is_effective(ev.tag.intensity_a, ev.tag.intensity_b, ev.clicks) {
            continue;
        }
        match pairer.push(ev.round) {
            None => opener = Some(ev),
            Some((j, k)) => {
                let first = opener.take().expect("a closed pair has an opener");
                debug_assert_eq!((first.round, ev.round), (j, k));
                let pair = PairRecord {
                    j,
                    k,
                    tag_j: first.tag,
                    tag_k: ev.tag,
                    click_j: first.clicks,
                    click_k: ev.clicks,
                };
                let df = if crate::siftmap::assign_basis(&pair).is_x() {
                    freq.at(k as f64 / cfg.clock_hz)
                } else {
                    0.0
                };
                let outcome = process_pair(&pair, df, cfg.clock_hz, cfg.m_slices);
                tallies.record(&outcome);
                if outcome.basis.is_z() {
                    let na = u32::from(first.truth.photon_count_a) + u32::from(ev.truth.photon_count_a);
                    let nb = u32::from(first.truth.photon_count_b) + u32::from(ev.truth.photon_count_b);
                    if na == 1 && nb == 1 {
                        true_n11 += 1;
                    }
                }
            }
        }
    }
    let (delta_f_estimates, delta_f_failures) = match &mut freq {
        FrequencyOracle::Reference(r) => {
            r.window(0);
            let ok = r.cache.iter().filter_map(|(&w, v)| v.map(|f| (w, f))).collect();
            let failed = r.cache.values().filter(|v| v.is_none()).count() as u64;
            (ok, failed)
        }
        _ => (BTreeMap::new(), 0),
    };
    BlockResult {
        n_rounds,
        tallies,
        true_n11_z: have_truth.then_some(true_n11),
        delta_f_estimates,
        delta_f_failures,
    }
}

/// Processes a simulated block held in memory.
pub fn process_sim_block(sim: &SimEvents, cfg: &SystemConfig, frequency: FrequencySource) -> Result<BlockResult, PipelineError> {
    let freq = match frequency {
        FrequencySource::Fixed(f) => FrequencyOracle::Fixed(f),
        FrequencySource::ChannelTruth => FrequencyOracle::Channel(&sim.trace),
        FrequencySource::Reference => {
            let params = ReferenceParams::from_config(cfg);
            let photons = Photons::Generated {
                trace: &sim.trace,
                params,
                seed: reference_seed(sim.seed),
            };
            FrequencyOracle::Reference(Box::new(reference_oracle(photons, params.bin_ns, params.t_r_us, cfg)?))
        }
    };
    Ok(tally_events(&sim.events, true, sim.n_rounds, cfg, freq))
}

/// Click events of a stored block, rebuilt from the record file and the
/// phase and truth sidecars.
fn events_from_files(files: &BlockFiles) -> Result<(Vec<ClickEvent>, bool), PipelineError> {
    let phases = files
        .phases
        .as_ref()
        .ok_or_else(|| PipelineError::Input("phase sidecar is missing".into()))?;
    let phase_of: BTreeMap<u64, &PhaseEntry> = phases.iter().map(|p| (p.round, p)).collect();
    let truth_of: Option<BTreeMap<u64, &TruthEntry>> =
        files.truth.as_ref().map(|t| t.iter().map(|e| (e.round, e)).collect());
    let mut events = Vec::new();
    for j in 0..files.records.n_rounds {
        let (ca, cb, clicks) = files.records.round(j);
        if !clicks.any() {
            continue;
        }
        let p = phase_of
            .get(&j)
            .ok_or_else(|| PipelineError::Input(format!("no phase entry for clicked round {j}")))?;
        let truth = match &truth_of {
            Some(m) => m.get(&j).map(|t| t.truth).unwrap_or_default(),
            None => Default::default(),
        };
        events.push(ClickEvent {
            round: j,
            tag: RoundTag {
                intensity_a: ca,
                intensity_b: cb,
                phase_a: p.phase_a,
                phase_b: p.phase_b,
            },
            clicks,
            truth,
        });
    }
    Ok((events, truth_of.is_some()))
}

/// Processes a stored block. The beat frequency comes from the reference
/// sidecar when there is one and `fixed_hz` is `None`.
pub fn process_files(files: &BlockFiles, cfg: &SystemConfig, fixed_hz: Option<f64>) -> Result<BlockResult, PipelineError> {
    if files.records.clock_hz as f64 != cfg.clock_hz {
        return Err(PipelineError::Record(RecordError::Mismatch(format!(
            "records were taken at {} Hz but the configuration says {} Hz",
            files.records.clock_hz, cfg.clock_hz
        ))));
    }
    let (events, have_truth) = events_from_files(files)?;
    let freq = match (fixed_hz, &files.reference) {
        (Some(f), _) => FrequencyOracle::Fixed(f),
        (None, Some(r)) => FrequencyOracle::Reference(Box::new(reference_oracle(
            Photons::Stored(&r.photons),
            r.bin_ns,
            r.t_r_us,
            cfg,
        )?)),
        (None, None) => FrequencyOracle::Fixed(cfg.beat_center_hz),
    };
    Ok(tally_events(&events, have_truth, files.records.n_rounds, cfg, freq))
}

/// The stored form of a simulated block, sidecars included.
pub fn block_files(sim: &SimEvents, packed: Vec<u8>, cfg: &SystemConfig) -> BlockFiles {
    let params = ReferenceParams::from_config(cfg);
    let duration = sim.n_rounds as f64 / cfg.clock_hz;
    let seed = reference_seed(sim.seed);
    let photons = (0..windows_covering(duration, &params))
        .flat_map(|w| reference_photon_bins(&sim.trace, &params, seed, w))
        .collect();
    BlockFiles {
        records: RecordFile {
            n_rounds: sim.n_rounds,
            clock_hz: cfg.clock_hz as u64,
            packed,
        },
        phases: Some(
            sim.events
                .iter()
                .map(|e| PhaseEntry {
                    round: e.round,
                    phase_a: e.tag.phase_a,
                    phase_b: e.tag.phase_b,
                })
                .collect(),
        ),
        truth: Some(
            sim.events
                .iter()
                .map(|e| TruthEntry {
                    round: e.round,
                    truth: e.truth,
                })
                .collect(),
        ),
        reference: Some(ReferenceStream {
            bin_ns: params.bin_ns,
            t_r_us: params.t_r_us,
            photons,
        }),
    }
}

/// Run inputs echoed in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportInputs {
    pub config: SystemConfig,
    pub n_blocks: u64,
    pub frequency_source: FrequencySource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assumptions {
    pub epsilons: Epsilons,
    pub f_ec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySummary {
    /// Mean over all reference windows that were analysed, or the fixed value.
    pub mean_estimated_delta_f_hz: Option<f64>,
    pub windows_estimated: u64,
    pub windows_failed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub inputs: ReportInputs,
    pub n_rounds: u64,
    pub tallies: TallyTable,
    pub e_z: f64,
    pub e_x: f64,
    /// Finite-key result, security grade.
    pub finite_key: EstimationResult,
    /// Counts taken as expectations. Meaningful at scaled-down block sizes
    /// where the finite-key rate is zero; not a security claim.
    pub statistical: EstimationResult,
    pub plob: f64,
    pub skr_over_plob: f64,
    pub frequency: FrequencySummary,
    /// Known from simulation truth only.
    pub true_n11_z: Option<u64>,
    pub warnings: Vec<String>,
    pub assumptions: Assumptions,
}

impl Report {
    /// Pretty JSON with a trailing newline. Equal reports give equal bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

/// Builds the report from merged block results.
pub fn build_report(
    cfg: &SystemConfig,
    blocks: &[BlockResult],
    frequency: FrequencySource,
) -> Result<Report, PipelineError> {
    let tallies: TallyTable = blocks.iter().map(|b| b.tallies).sum();
    let n_rounds: u64 = blocks.iter().map(|b| b.n_rounds).sum();
    let finite_key = estimate_key_rate(&tallies, cfg, n_rounds as f64, Mode::FiniteKey)?;
    let statistical = estimate_key_rate(&tallies, cfg, n_rounds as f64, Mode::Statistical)?;
    let estimates: Vec<f64> = blocks.iter().flat_map(|b| b.delta_f_estimates.values().copied()).collect();
    let failed: u64 = blocks.iter().map(|b| b.delta_f_failures).sum();
    let mean = match frequency {
        FrequencySource::Fixed(f) => Some(f),
        _ if estimates.is_empty() => None,
        _ => Some(estimates.iter().sum::<f64>() / estimates.len() as f64),
    };
    let true_n11_z = blocks
        .iter()
        .map(|b| b.true_n11_z)
        .try_fold(0u64, |acc, v| v.map(|x| acc + x))
        .filter(|_| !blocks.is_empty());
    let mut warnings = Vec::new();
    if failed > 0 {
        warnings.push(format!(
            "{failed} reference windows had no usable beat peak; the configured centre frequency was used"
        ));
    }
    if blocks.is_empty() {
        warnings.push("no blocks were processed".into());
    }
    for w in finite_key.warnings.iter().chain(&statistical.warnings) {
        if !warnings.contains(w) {
            warnings.push(w.clone());
        }
    }
    Ok(Report {
        inputs: ReportInputs {
            config: cfg.clone(),
            n_blocks: blocks.len() as u64,
            frequency_source: frequency,
        },
        n_rounds,
        tallies,
        e_z: tallies.e_z(),
        e_x: tallies.e_x(),
        plob: finite_key.plob,
        skr_over_plob: finite_key.skr_over_plob,
        finite_key,
        statistical,
        frequency: FrequencySummary {
            mean_estimated_delta_f_hz: mean,
            windows_estimated: estimates.len() as u64,
            windows_failed: failed,
        },
        true_n11_z,
        warnings,
        assumptions: Assumptions {
            epsilons: cfg.epsilons,
            f_ec: cfg.f_ec,
        },
    })
}

/// Reproducibility record of a run. Timestamps live here and not in the
/// report, so reports of equal runs compare equal byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub seed: u64,
    pub n_blocks: u64,
    pub n_rounds_accumulated: u64,
    pub version: String,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

pub fn config_hash(cfg: &SystemConfig) -> String {
    Sha256::digest(cfg.to_config_text().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Worker count from `MPQKD_THREADS`, if set to a positive integer.
pub fn thread_override() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs `f` on a pool sized by `MPQKD_THREADS`, or on the global pool.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match thread_override().and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Simulates `n_blocks` blocks of `cfg.n_rounds` rounds each and runs the
/// whole chain on them.
pub fn run_experiment(
    cfg: &SystemConfig,
    seed: u64,
    n_blocks: u64,
    opts: RunOptions,
) -> Result<(Report, TallyTable, RunManifest), PipelineError> {
    let cfg = validate_config(cfg.clone())?;
    let started = now();
    let blocks: Result<Vec<BlockResult>, PipelineError> = with_workers(|| {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let sim = simulate_events(&cfg, block_seed(seed, b), opts.sim)?;
                process_sim_block(&sim, &cfg, opts.frequency)
            })
            .collect()
    });
    finish(&cfg, seed, blocks?, opts.frequency, started)
}

/// Like [`run_experiment`], also writing every block and its sidecars to
/// `dir` as `block_NNNNN.*`.
pub fn simulate_to_dir(
    cfg: &SystemConfig,
    seed: u64,
    n_blocks: u64,
    opts: RunOptions,
    dir: &Path,
) -> Result<(Report, TallyTable, RunManifest), PipelineError> {
    let cfg = validate_config(cfg.clone())?;
    let started = now();
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let blocks: Result<Vec<BlockResult>, PipelineError> = with_workers(|| {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let block = simulate_block(&cfg, block_seed(seed, b), opts.sim)?;
                let files = block_files(&block.events, block.packed.clone(), &cfg);
                files.write(&BlockPaths::in_dir(dir, b))?;
                process_sim_block(&block.events, &cfg, opts.frequency)
            })
            .collect()
    });
    finish(&cfg, seed, blocks?, opts.frequency, started)
}

fn finish(
    cfg: &SystemConfig,
    seed: u64,
    blocks: Vec<BlockResult>,
    frequency: FrequencySource,
    started: f64,
) -> Result<(Report, TallyTable, RunManifest), PipelineError> {
    let report = build_report(cfg, &blocks, frequency)?;
    let manifest = RunManifest {
        config_sha256: config_hash(cfg),
        seed,
        n_blocks: blocks.len() as u64,
        n_rounds_accumulated: report.n_rounds,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_s: started,
        finished_unix_s: now(),
    };
    let tallies = report.tallies;
    Ok((report, tallies, manifest))
}

/// Record files to replay: `path` itself, or every `*.mpqk` in it, sorted.
pub fn record_paths(path: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| PipelineError::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mpqk"))
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(PipelineError::Input(format!("no .mpqk files in {}", path.display())));
    }
    Ok(out)
}

/// Runs the chain on stored blocks. With `fixed_hz` the reference sidecars
/// are ignored.
pub fn replay_records(paths: &[PathBuf], cfg: &SystemConfig, fixed_hz: Option<f64>) -> Result<Report, PipelineError> {
    let cfg = validate_config(cfg.clone())?;
    let blocks: Result<Vec<BlockResult>, PipelineError> = with_workers(|| {
        paths
            .par_iter()
            .map(|p| {
                let files = BlockFiles::read(&BlockPaths::for_records(p))?;
                process_files(&files, &cfg, fixed_hz)
            })
            .collect()
    });
    let blocks = blocks?;
    let frequency = match fixed_hz {
        Some(f) => FrequencySource::Fixed(f),
        None => {
            let all_ref = paths.iter().all(|p| BlockPaths::for_records(p).reference.exists());
            if all_ref {
                FrequencySource::Reference
            } else {
                FrequencySource::Fixed(cfg.beat_center_hz)
            }
        }
    };
    build_report(&cfg, &blocks, frequency)
}
