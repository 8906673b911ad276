//! Finite-key estimation: from pair tallies to a bound on the single-photon
//! key pairs, their phase error rate, and the secret key rate.

pub mod chernoff;
pub mod decoy;
pub mod rate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SystemConfig;
use crate::siftmap::TallyTable;

pub use chernoff::{chernoff_bounds, chi_lower, chi_upper, BoundPair};
pub use decoy::{
    estimate_e11_ph, estimate_n11_z, gamma, pair_class_probability, poisson_weight, N11Estimate,
    PhaseErrorEstimate,
};
pub use rate::{binary_entropy, error_correction_leakage, plob_bound, secret_key_rate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("estimation failure: {0}")]
    EstimationFailure(String),
}

/// `FiniteKey` applies the concentration bounds, the sampling correction and
/// the security penalty. `Statistical` uses the observed counts as if they
/// were expectations, which is what a scaled-down run can meaningfully
/// report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FiniteKey,
    Statistical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intermediates {
    pub n_mu: f64,
    pub n_nu: f64,
    pub alpha_11: f64,
    pub m_2nu: Option<f64>,
    pub m11_upper: Option<f64>,
    pub n11_x_lower: Option<f64>,
    pub e11_x_upper: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub mode: Mode,
    pub n_rounds: f64,
    pub n11_z_lower: f64,
    /// `None` when the phase error rate could not be bounded.
    pub e11_ph_upper: Option<f64>,
    pub intermediates: Intermediates,
    pub e_z: f64,
    pub e_x: f64,
    pub lambda_ec: f64,
    pub skr_bpp: f64,
    pub skr_bps: f64,
    pub plob: f64,
    pub skr_over_plob: f64,
    pub warnings: Vec<String>,
    pub failure: Option<String>,
}

/// Runs the whole chain over `n_rounds` rounds. Problems that still leave a
/// well-defined (zero) rate are reported in `warnings` or `failure` rather
/// than as errors.
pub fn estimate_key_rate(
    tallies: &TallyTable,
    cfg: &SystemConfig,
    n_rounds: f64,
    mode: Mode,
) -> Result<EstimationResult, EstimateError> {
    if !tallies.is_consistent() {
        return Err(EstimateError::InvalidInput(
            "error counts exceed pair counts in the tally table".into(),
        ));
    }
    let mut warnings = Vec::new();
    let n11 = estimate_n11_z(tallies, cfg, mode)?;
    if n11.clamped {
        warnings.push("single-photon pair bound was negative and clamped to zero".to_string());
    }
    let e_z = tallies.e_z();
    let lambda_ec = error_correction_leakage(tallies.n_mu_mu as f64, e_z, cfg.f_ec);
    let plob = plob_bound(cfg.total_loss_db());
    let (phase, failure) = match estimate_e11_ph(tallies, cfg, n11.n11_z_lower, mode) {
        Ok(p) => (Some(p), None),
        Err(EstimateError::EstimationFailure(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    if let Some(p) = &phase {
        if p.m11_upper / p.n11_x_lower > 0.5 || p.m11_upper < 0.0 {
            warnings.push("test-basis single-photon error rate clamped into [0, 0.5]".to_string());
        }
    }
    let skr_bpp = match &phase {
        Some(p) => secret_key_rate(n11.n11_z_lower, p.e11_ph_upper, lambda_ec, n_rounds, &cfg.epsilons, mode),
        None => 0.0,
    };
    Ok(EstimationResult {
        mode,
        n_rounds,
        n11_z_lower: n11.n11_z_lower,
        e11_ph_upper: phase.map(|p| p.e11_ph_upper),
        intermediates: Intermediates {
            n_mu: n11.n_mu,
            n_nu: n11.n_nu,
            alpha_11: n11.alpha_11,
            m_2nu: phase.map(|p| p.m_2nu),
            m11_upper: phase.map(|p| p.m11_upper),
            n11_x_lower: phase.map(|p| p.n11_x_lower),
            e11_x_upper: phase.map(|p| p.e11_x_upper),
            gamma: phase.map(|p| p.gamma),
        },
        e_z,
        e_x: tallies.e_x(),
        lambda_ec,
        skr_bpp,
        skr_bps: skr_bpp * cfg.clock_hz,
        plob,
        skr_over_plob: if plob > 0.0 && plob.is_finite() { skr_bpp / plob } else { 0.0 },
        warnings,
        failure,
    })
}
