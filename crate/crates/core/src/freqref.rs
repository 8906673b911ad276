//! Beat-frequency estimation from binned reference-light counts, and the
//! phase-error relations that follow from it.

use std::f64::consts::{PI, TAU};
use std::io::{self, BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;
use realfft::{RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreqError {
    #[error("no signal: the input has no component away from DC")]
    NoSignal,
    #[error("input is empty or shorter than one window")]
    Empty,
    #[error("insufficient counts: c0 + c1 = {sum} is below {min}")]
    InsufficientCounts { sum: u64, min: u64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Minimum number of counts for [`phase_from_counts`].
pub const MIN_PHASE_COUNTS: u64 = 600;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatEstimate {
    pub delta_f_hz: f64,
    /// Start of the analysed window in seconds.
    pub window_start: f64,
    pub resolution_hz: f64,
    pub peak_magnitude: f64,
}

/// FFT peak finder for windows of a fixed length. The plan is built once
/// and shared between threads.
#[derive(Clone)]
pub struct BeatEstimator {
    n_bins: usize,
    bin_s: f64,
    pad_factor: usize,
    interpolate: bool,
    plan: Arc<dyn RealToComplex<f64>>,
}

impl std::fmt::Debug for BeatEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BeatEstimator")
            .field("n_bins", &self.n_bins)
            .field("bin_s", &self.bin_s)
            .field("pad_factor", &self.pad_factor)
            .field("interpolate", &self.interpolate)
            .finish()
    }
}

impl BeatEstimator {
    pub fn new(n_bins: usize, bin_ns: f64, pad_factor: u32) -> Result<Self, FreqError> {
        if n_bins < 2 {
            return Err(FreqError::Empty);
        }
        if pad_factor < 1 || !(bin_ns > 0.0) {
            return Err(FreqError::Parameter(format!(
                "pad_factor = {pad_factor}, bin_ns = {bin_ns}"
            )));
        }
        let n = n_bins * pad_factor as usize;
        Ok(Self {
            n_bins,
            bin_s: bin_ns * 1e-9,
            pad_factor: pad_factor as usize,
            interpolate: false,
            plan: RealFftPlanner::<f64>::new().plan_fft_forward(n),
        })
    }

    /// Refines the peak with a parabola through the neighbouring bins.
    pub fn with_interpolation(mut self, on: bool) -> Self {
        self.interpolate = on;
        self
    }

    pub fn resolution_hz(&self) -> f64 {
        1.0 / (self.fft_len() as f64 * self.bin_s)
    }

    fn fft_len(&self) -> usize {
        self.n_bins * self.pad_factor
    }

    /// Mean-subtracted, zero-padded spectrum magnitudes.
    pub fn spectrum<T: Copy + Into<f64>>(&self, bins: &[T]) -> Vec<f64> {
        assert_eq!(bins.len(), self.n_bins, "window length");
        let mean = bins.iter().map(|&b| b.into()).sum::<f64>() / self.n_bins as f64;
        let mut input = self.plan.make_input_vec();
        for (x, &b) in input.iter_mut().zip(bins) {
            *x = b.into() - mean;
        }
        let mut out = self.plan.make_output_vec();
        self.plan.process(&mut input, &mut out).expect("buffer sizes from plan");
        out.iter().map(|c| c.norm()).collect()
    }

    pub fn estimate<T: Copy + Into<f64>>(&self, bins: &[T], window_start: f64) -> Result<BeatEstimate, FreqError> {
        let mag = self.spectrum(bins);
        let nyquist = self.fft_len() / 2;
        let (mut best, mut peak) = (0usize, 0.0f64);
        for (i, &m) in mag.iter().enumerate().take(nyquist).skip(1) {
            if m > peak {
                best = i;
                peak = m;
            }
        }
        let scale = self.n_bins as f64;
        if best == 0 || peak <= 1e-9 * scale.sqrt() {
            return Err(FreqError::NoSignal);
        }
        let mut index = best as f64;
        if self.interpolate && best + 1 < mag.len() {
            let (a, b, c) = (mag[best - 1], mag[best], mag[best + 1]);
            let denom = a - 2.0 * b + c;
            if denom != 0.0 {
                index += 0.5 * (a - c) / denom;
            }
        }
        Ok(BeatEstimate {
            delta_f_hz: index * self.resolution_hz(),
            window_start,
            resolution_hz: self.resolution_hz(),
            peak_magnitude: peak,
        })
    }
}

/// Peak frequency of counts sampled in 1 ns bins.
pub fn estimate_beat<T: Copy + Into<f64>>(bins: &[T], pad_factor: u32) -> Result<BeatEstimate, FreqError> {
    BeatEstimator::new(bins.len(), 1.0, pad_factor)?.estimate(bins, 0.0)
}

/// One estimate per complete window of `window_us`. Windows are analysed in
/// parallel; the result is in time order.
pub fn sliding_estimates<T: Copy + Into<f64> + Sync>(
    bins: &[T],
    bin_ns: f64,
    window_us: f64,
    pad_factor: u32,
) -> Result<Vec<BeatEstimate>, FreqError> {
    let per_window = (window_us * 1e3 / bin_ns).round() as usize;
    if per_window < 2 || bins.len() < per_window {
        return Err(FreqError::Empty);
    }
    let est = BeatEstimator::new(per_window, bin_ns, pad_factor)?;
    bins.par_chunks_exact(per_window)
        .enumerate()
        .map(|(w, chunk)| est.estimate(chunk, w as f64 * window_us * 1e-6))
        .collect()
}

/// Test-basis error rate caused by a constant residual phase.
pub fn residual_phase_error_rate(delta: f64) -> f64 {
    (2.0 - delta.cos()) / 4.0
}

/// Largest residual phase over a pairing gap: half an FFT bin of frequency
/// error plus the drift expected during the gap.
pub fn worst_case_residual_phase(gap_s: f64, resolution_hz: f64, jitter_hz: f64, window_s: f64) -> f64 {
    TAU * gap_s * (resolution_hz / 2.0 + jitter_hz * gap_s / window_s)
}

/// Interferometer phase in `[0, pi]` from the counts at its two outputs.
pub fn phase_from_counts(c0: u64, c1: u64) -> Result<f64, FreqError> {
    let sum = c0 + c1;
    if sum < MIN_PHASE_COUNTS {
        return Err(FreqError::InsufficientCounts {
            sum,
            min: MIN_PHASE_COUNTS,
        });
    }
    Ok(((c0 as f64 - c1 as f64) / sum as f64).clamp(-1.0, 1.0).acos().min(PI))
}

pub fn write_estimates_csv<W: Write>(mut w: W, estimates: &[BeatEstimate]) -> io::Result<()> {
    writeln!(w, "window_start_s,delta_f_hz,peak_magnitude")?;
    for e in estimates {
        writeln!(w, "{},{},{}", e.window_start, e.delta_f_hz, e.peak_magnitude)?;
    }
    Ok(())
}

/// Reads bin counts, one per line (the last comma-separated field is
/// used). Non-numeric header lines are skipped.
pub fn read_bins_csv<R: BufRead>(r: R) -> io::Result<Vec<f64>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let field = line.rsplit(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if out.is_empty() => {}
            Err(_) => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("line {}: cannot parse `{field}`", n + 1),
                ))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cosine(f: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| 1.0 + (TAU * f * i as f64 * 1e-9).cos()).collect()
    }

    #[test]
    fn pure_cosine_at_34_mhz() {
        let e = estimate_beat(&cosine(34e6, 500_000), 2).unwrap();
        assert!((e.delta_f_hz - 34e6).abs() <= 1e3, "{}", e.delta_f_hz);
        assert!((e.resolution_hz - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn dc_only_is_no_signal() {
        assert_eq!(estimate_beat(&vec![3.0f64; 1000], 2), Err(FreqError::NoSignal));
        assert_eq!(estimate_beat(&vec![0u32; 1000], 2), Err(FreqError::NoSignal));
    }

    #[test]
    fn interpolation_refines_off_grid_peak() {
        let f = 12.3456e6;
        let x = cosine(f, 20_000);
        let est = BeatEstimator::new(20_000, 1.0, 2).unwrap();
        let plain = est.estimate(&x, 0.0).unwrap();
        let fine = est.clone().with_interpolation(true).estimate(&x, 0.0).unwrap();
        assert!((fine.delta_f_hz - f).abs() < (plain.delta_f_hz - f).abs());
    }

    #[test]
    fn parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 4096;
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let est = BeatEstimator::new(n, 1.0, 2).unwrap();
        let mag = est.spectrum(&x);
        let mean = x.iter().sum::<f64>() / n as f64;
        let time: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let m = 2 * n;
        let mut freq = mag[0].powi(2) + mag[m / 2].powi(2);
        freq += 2.0 * mag[1..m / 2].iter().map(|v| v * v).sum::<f64>();
        freq /= m as f64;
        assert!((freq / time - 1.0).abs() < 1e-9, "{freq} {time}");
    }

    #[test]
    fn sliding_windows() {
        let x = cosine(20e6, 2 * 50_000);
        let est = sliding_estimates(&x, 1.0, 50.0, 2).unwrap();
        assert_eq!(est.len(), 2);
        assert_eq!(est[0].delta_f_hz, est[1].delta_f_hz);
        assert!((est[1].window_start - 50e-6).abs() < 1e-15);
        assert_eq!(sliding_estimates(&x[..10], 1.0, 50.0, 2), Err(FreqError::Empty));
    }

    #[test]
    fn residual_error_law() {
        assert!((residual_phase_error_rate(0.0) - 0.25).abs() < 1e-15);
        assert!((residual_phase_error_rate(0.3961) - 0.2694).abs() < 5e-5);
        assert!((residual_phase_error_rate(0.1489) - 0.2528).abs() < 5e-5);
    }

    #[test]
    fn worst_case_bound_at_longest_gap() {
        let d = worst_case_residual_phase(50_000.0 / 5e8, 1000.0, 652.282, 500e-6);
        assert!((d - 0.3961).abs() < 5e-5, "{d}");
        for l_max in [10_000.0, 20_000.0, 40_000.0] {
            assert!(worst_case_residual_phase(l_max / 5e8, 1000.0, 652.282, 500e-6) <= d);
        }
    }

    #[test]
    fn phase_from_counts_cases() {
        assert_eq!(phase_from_counts(600, 0).unwrap(), 0.0);
        assert!((phase_from_counts(300, 300).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!(matches!(phase_from_counts(100, 99), Err(FreqError::InsufficientCounts { sum: 199, .. })));
    }

    #[test]
    fn phase_from_binomial_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta: f64 = 1.0;
        let p0 = (1.0 + theta.cos()) / 2.0;
        let trials = 1000;
        let mut good = 0;
        for _ in 0..trials {
            let c0 = (0..600).filter(|_| rng.random::<f64>() < p0).count() as u64;
            let est = phase_from_counts(c0, 600 - c0).unwrap();
            good += usize::from((est - theta).abs() < 0.1);
        }
        assert!(good as f64 >= 0.95 * trials as f64, "{good}");
    }

    #[test]
    fn csv_round_trip() {
        let bins = read_bins_csv("count\n1\n0\n2\n".as_bytes()).unwrap();
        assert_eq!(bins, vec![1.0, 0.0, 2.0]);
        let bins = read_bins_csv("t,count\n0,4\n1,5\n".as_bytes()).unwrap();
        assert_eq!(bins, vec![4.0, 5.0]);
        assert!(read_bins_csv("1\nx\n".as_bytes()).is_err());
        let mut out = Vec::new();
        let e = BeatEstimate {
            delta_f_hz: 34e6,
            window_start: 0.0,
            resolution_hz: 1e3,
            peak_magnitude: 2.0,
        };
        write_estimates_csv(&mut out, &[e]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "window_start_s,delta_f_hz,peak_magnitude\n0,34000000,2\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn argmax_invariant_under_scaling(f in 1e6..4e8f64, scale in 0.01..100.0f64, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = cosine(f, 4096).into_iter().map(|v| v + 0.3 * rng.random::<f64>()).collect();
            let y: Vec<f64> = x.iter().map(|v| v * scale).collect();
            let a = estimate_beat(&x, 2).unwrap();
            let b = estimate_beat(&y, 2).unwrap();
            prop_assert_eq!(a.delta_f_hz, b.delta_f_hz);
        }
    }
}
