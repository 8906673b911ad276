//! Threshold-detector response behind a 50:50 beam splitter.

use super::SimError;

/// Click probabilities of detectors L and R when coherent pulses with
/// detected mean photon numbers `kappa_a` and `kappa_b` meet at relative
/// phase `relative_phase`. Each detector also fires on its own with
/// probability `dark_prob`.
pub fn click_probabilities(
    kappa_a: f64,
    kappa_b: f64,
    relative_phase: f64,
    dark_prob: f64,
) -> Result<(f64, f64), SimError> {
    let (l, r) = detector_means(kappa_a, kappa_b, relative_phase)?;
    if !(0.0..1.0).contains(&dark_prob) {
        return Err(SimError::Domain(format!("dark probability {dark_prob} outside [0, 1)")));
    }
    let p = |mean: f64| (1.0 - (1.0 - dark_prob) * (-mean).exp()).clamp(0.0, 1.0);
    Ok((p(l), p(r)))
}

/// Mean photon numbers arriving at detectors L and R.
pub fn detector_means(kappa_a: f64, kappa_b: f64, relative_phase: f64) -> Result<(f64, f64), SimError> {
    if !(kappa_a >= 0.0 && kappa_b >= 0.0) {
        return Err(SimError::Domain(format!(
            "negative intensity (kappa_a = {kappa_a}, kappa_b = {kappa_b})"
        )));
    }
    let cross = 2.0 * (kappa_a * kappa_b).sqrt() * relative_phase.cos();
    let sum = kappa_a + kappa_b;
    Ok((((sum + cross) / 2.0).max(0.0), ((sum - cross) / 2.0).max(0.0)))
}

/// Probability that at least one detector fires. The interference term
/// cancels, so this does not depend on the phase.
pub fn any_click_probability(kappa_a: f64, kappa_b: f64, dark_prob: f64) -> f64 {
    1.0 - (1.0 - dark_prob).powi(2) * (-(kappa_a + kappa_b)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn vacuum_gives_dark_counts() {
        for phi in [0.0, 1.0, PI] {
            let (l, r) = click_probabilities(0.0, 0.0, phi, 3e-5).unwrap();
            assert!((l - 3e-5).abs() < 1e-15 && (r - 3e-5).abs() < 1e-15);
        }
    }

    #[test]
    fn constructive_interference_routes_to_l() {
        let k = 0.3;
        let (l, r) = click_probabilities(k, k, 0.0, 0.0).unwrap();
        assert!((l - (1.0 - (-2.0 * k).exp())).abs() < 1e-15);
        assert!(r.abs() < 1e-15);
    }

    #[test]
    fn matches_explicit_output_amplitudes() {
        // Output modes of the splitter: (a e^{i phi} +/- b) / sqrt(2).
        let (ka, kb, phi, d) = (0.01f64, 0.02f64, PI / 3.0, 1e-5);
        let (ar, ai) = (ka.sqrt() * phi.cos(), ka.sqrt() * phi.sin());
        let b = kb.sqrt();
        let mean_l = ((ar + b).powi(2) + ai.powi(2)) / 2.0;
        let mean_r = ((ar - b).powi(2) + ai.powi(2)) / 2.0;
        let want_l = 1.0 - (1.0 - d) * (-mean_l).exp();
        let want_r = 1.0 - (1.0 - d) * (-mean_r).exp();
        let (l, r) = click_probabilities(ka, kb, phi, d).unwrap();
        assert!((l - want_l).abs() < 1e-15, "{l} {want_l}");
        assert!((r - want_r).abs() < 1e-15, "{r} {want_r}");
    }

    #[test]
    fn any_click_is_phase_free() {
        let (ka, kb, d) = (0.2, 0.05, 1e-3);
        for phi in [0.0, 0.4, 2.0, 5.5] {
            let (l, r) = click_probabilities(ka, kb, phi, d).unwrap();
            let any = 1.0 - (1.0 - l) * (1.0 - r);
            assert!((any - any_click_probability(ka, kb, d)).abs() < 1e-14);
        }
    }

    #[test]
    fn negative_intensity_rejected() {
        assert!(matches!(click_probabilities(-0.1, 0.0, 0.0, 0.0), Err(SimError::Domain(_))));
    }
}
