//! Decoy-state bounds on the single-photon pairs of the key basis and on
//! their phase error rate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::chernoff::chernoff_bounds;
use super::{EstimateError, Mode};
use crate::model::{Epsilons, SystemConfig};
use crate::siftmap::{TallyKey, TallyTable};

/// Lower limit applied to the error rate inside [`gamma`].
pub const GAMMA_B_MIN: f64 = 1e-12;

/// Poisson weight `e^-tau tau^i / i!`, evaluated in log space.
pub fn poisson_weight(i: u32, tau: f64) -> f64 {
    if tau == 0.0 {
        return if i == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact: f64 = (2..=i).map(|k| (k as f64).ln()).sum();
    (-tau + i as f64 * tau.ln() - ln_fact).exp()
}

/// Relative probability of a pair landing in `key`, with the common
/// normalisation dropped.
pub fn pair_class_probability(key: TallyKey, cfg: &SystemConfig) -> f64 {
    let (a, b) = (&cfg.alice, &cfg.bob);
    match key {
        TallyKey::MuMu => 4.0 * a.p_mu * a.p_o * b.p_mu * b.p_o,
        TallyKey::MuO => 2.0 * a.p_mu * a.p_o * b.p_o * b.p_o,
        TallyKey::OMu => 2.0 * b.p_mu * b.p_o * a.p_o * a.p_o,
        TallyKey::NuNu => 4.0 * a.p_nu * a.p_o * b.p_nu * b.p_o,
        TallyKey::NuO => 2.0 * a.p_nu * a.p_o * b.p_o * b.p_o,
        TallyKey::ONu => 2.0 * b.p_nu * b.p_o * a.p_o * a.p_o,
        TallyKey::OO => a.p_o * a.p_o * b.p_o * b.p_o,
        TallyKey::TwoNuTwoNu => 2.0 / cfg.m_slices as f64 * a.p_nu * a.p_nu * b.p_nu * b.p_nu,
        TallyKey::TwoNuO => a.p_nu * a.p_nu * b.p_o * b.p_o,
        TallyKey::OTwoNu => b.p_nu * b.p_nu * a.p_o * a.p_o,
    }
}

/// Expected-value bounds of the observed counts, or the counts themselves
/// in statistical mode.
#[derive(Debug, Clone, Copy)]
struct Bounds {
    mode: Mode,
    eps_u: f64,
    eps_l: f64,
}

impl Bounds {
    fn new(mode: Mode, eps: &Epsilons) -> Self {
        Self {
            mode,
            eps_u: eps.eps_u,
            eps_l: eps.eps_l,
        }
    }

    fn upper(&self, n: u64) -> Result<f64, EstimateError> {
        match self.mode {
            Mode::FiniteKey => Ok(chernoff_bounds(n as f64, self.eps_u, self.eps_l)?.upper),
            Mode::Statistical => Ok(n as f64),
        }
    }

    fn lower(&self, n: u64) -> Result<f64, EstimateError> {
        match self.mode {
            Mode::FiniteKey => Ok(chernoff_bounds(n as f64, self.eps_u, self.eps_l)?.lower),
            Mode::Statistical => Ok(n as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct N11Estimate {
    pub n11_z_lower: f64,
    pub n_mu: f64,
    pub n_nu: f64,
    pub alpha_11: f64,
    /// The raw combination was negative and has been clamped to zero.
    pub clamped: bool,
}

/// Lower bound on the number of key-basis pairs in which both senders
/// emitted exactly one photon.
pub fn estimate_n11_z(t: &TallyTable, cfg: &SystemConfig, mode: Mode) -> Result<N11Estimate, EstimateError> {
    let b = Bounds::new(mode, &cfg.epsilons);
    let p = |k| pair_class_probability(k, cfg);
    let (mu_a, mu_b, nu_a, nu_b) = (cfg.alice.mu, cfg.bob.mu, cfg.alice.nu, cfg.bob.nu);
    let w = poisson_weight;

    let n_mu = b.upper(t.n_mu_mu)? / (w(0, mu_a) * w(0, mu_b) * p(TallyKey::MuMu))
        - b.lower(t.n_o_mu)? / (w(0, mu_b) * p(TallyKey::OMu))
        - b.lower(t.n_mu_o)? / (w(0, mu_a) * p(TallyKey::MuO))
        + b.upper(t.n_o_o)? / p(TallyKey::OO);
    let n_nu = b.lower(t.n_nu_nu)? / (w(0, nu_a) * w(0, nu_b) * p(TallyKey::NuNu))
        - b.upper(t.n_o_nu)? / (w(0, nu_b) * p(TallyKey::ONu))
        - b.upper(t.n_nu_o)? / (w(0, nu_a) * p(TallyKey::NuO))
        + b.lower(t.n_o_o)? / p(TallyKey::OO);

    let (sa, sb) = if nu_a * mu_b <= nu_b * mu_a { (1, 2) } else { (2, 1) };
    let alpha_11 = (w(1, nu_a) * w(1, nu_b) / (w(sa, nu_a) * w(sb, nu_b) * w(1, mu_a) * w(1, mu_b))
        - 1.0 / (w(sa, mu_a) * w(sb, mu_b)))
        / p(TallyKey::MuMu);
    let raw = (w(0, nu_a) * w(0, nu_b) / (w(sa, nu_a) * w(sb, nu_b)) * n_nu
        - w(0, mu_a) * w(0, mu_b) / (w(sa, mu_a) * w(sb, mu_b)) * n_mu)
        / alpha_11;
    if !raw.is_finite() {
        return Err(EstimateError::Numeric(format!("single-photon bound is not finite ({raw})")));
    }
    Ok(N11Estimate {
        n11_z_lower: raw.max(0.0),
        n_mu,
        n_nu,
        alpha_11,
        clamped: raw < 0.0,
    })
}

/// Sampling-without-replacement correction from a test-basis error rate
/// `b` over `d` test pairs to the phase error rate over `c` key pairs, at
/// failure probability `a`.
pub fn gamma(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let b = b.clamp(GAMMA_B_MIN, 0.5);
    let spread = (1.0 - b) * b;
    let log = ((c + d) / (2.0 * PI * c * d * spread * a * a)).ln();
    if !(log > 0.0) || c <= 0.0 || d <= 0.0 {
        return 0.0;
    }
    ((c + d) * spread / (c * d) * log).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseErrorEstimate {
    pub e11_ph_upper: f64,
    pub m_2nu: f64,
    pub m11_upper: f64,
    pub n11_x_lower: f64,
    pub e11_x_upper: f64,
    pub gamma: f64,
}

/// Upper bound on the phase error rate of the single-photon key pairs.
pub fn estimate_e11_ph(
    t: &TallyTable,
    cfg: &SystemConfig,
    n11_z: f64,
    mode: Mode,
) -> Result<PhaseErrorEstimate, EstimateError> {
    let b = Bounds::new(mode, &cfg.epsilons);
    let p = |k| pair_class_probability(k, cfg);
    let w = poisson_weight;
    let (two_nu_a, two_nu_b) = (2.0 * cfg.alice.nu, 2.0 * cfg.bob.nu);
    let (mu_a, mu_b) = (cfg.alice.mu, cfg.bob.mu);

    let m_2nu = t.m_2nu_2nu as f64 / (w(0, two_nu_a) * w(0, two_nu_b) * p(TallyKey::TwoNuTwoNu))
        - b.lower(t.n_o_2nu)? / (2.0 * w(0, two_nu_b) * p(TallyKey::OTwoNu))
        - b.lower(t.n_2nu_o)? / (2.0 * w(0, two_nu_a) * p(TallyKey::TwoNuO))
        + b.upper(t.n_o_o)? / (2.0 * p(TallyKey::OO));
    let m11_upper = w(0, two_nu_a) * w(0, two_nu_b) * p(TallyKey::TwoNuTwoNu) * m_2nu;
    let n11_x_lower = w(1, two_nu_a) * w(1, two_nu_b) * p(TallyKey::TwoNuTwoNu)
        / (w(1, mu_a) * w(1, mu_b) * p(TallyKey::MuMu))
        * n11_z;
    if !(n11_x_lower > 0.0) {
        return Err(EstimateError::EstimationFailure(
            "no single-photon test pairs can be inferred (lower bound is zero)".into(),
        ));
    }
    let e11_x_upper = (m11_upper / n11_x_lower).clamp(0.0, 0.5);
    let g = match mode {
        Mode::FiniteKey => gamma(cfg.epsilons.eps_e, e11_x_upper, n11_z, n11_x_lower),
        Mode::Statistical => 0.0,
    };
    Ok(PhaseErrorEstimate {
        e11_ph_upper: (e11_x_upper + g).clamp(0.0, 1.0),
        m_2nu,
        m11_upper,
        n11_x_lower,
        e11_x_upper,
        gamma: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::Link;
    use proptest::prelude::*;

    #[test]
    fn poisson_weights() {
        assert!((poisson_weight(0, 0.5) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((poisson_weight(2, 0.5) - 0.125 * (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(poisson_weight(0, 0.0), 1.0);
        assert_eq!(poisson_weight(1, 0.0), 0.0);
    }

    #[test]
    fn class_probabilities() {
        let cfg = Link::Km202.config();
        let (a, b) = (cfg.alice, cfg.bob);
        let x = pair_class_probability(TallyKey::TwoNuTwoNu, &cfg);
        assert!((x / (2.0 / 16.0 * a.p_nu.powi(2) * b.p_nu.powi(2)) - 1.0).abs() < 1e-14);
        let z = pair_class_probability(TallyKey::MuMu, &cfg);
        assert!((z / ((2.0 * a.p_mu * a.p_o) * (2.0 * b.p_mu * b.p_o)) - 1.0).abs() < 1e-14);
        let o = pair_class_probability(TallyKey::OO, &cfg);
        assert!((o / (a.p_o.powi(2) * b.p_o.powi(2)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn class_probabilities_by_enumeration() {
        use crate::model::IntensityClass;
        use crate::siftmap::{BasisClass, PartyPairClass};
        let cfg = Link::Km303.config();
        let mut sums = std::collections::HashMap::new();
        for aj in IntensityClass::ALL {
            for ak in IntensityClass::ALL {
                for bj in IntensityClass::ALL {
                    for bk in IntensityClass::ALL {
                        let key = BasisClass {
                            class_a: PartyPairClass::of(aj, ak),
                            class_b: PartyPairClass::of(bj, bk),
                        }
                        .tally_key();
                        if let Some(key) = key {
                            let pr = cfg.alice.probability(aj)
                                * cfg.alice.probability(ak)
                                * cfg.bob.probability(bj)
                                * cfg.bob.probability(bk);
                            *sums.entry(key).or_insert(0.0) += pr;
                        }
                    }
                }
            }
        }
        for key in TallyKey::ALL {
            let mut want = sums[&key];
            if key == TallyKey::TwoNuTwoNu {
                want *= 2.0 / cfg.m_slices as f64;
            }
            let got = pair_class_probability(key, &cfg);
            assert!((got / want - 1.0).abs() < 1e-12, "{key:?}");
        }
    }

    #[test]
    fn zero_tallies_clamp_with_flag() {
        let cfg = Link::Km202.config();
        let e = estimate_n11_z(&TallyTable::default(), &cfg, Mode::FiniteKey).unwrap();
        assert_eq!(e.n11_z_lower, 0.0);
        assert!(e.clamped);
        assert!(matches!(
            estimate_e11_ph(&TallyTable::default(), &cfg, 0.0, Mode::FiniteKey),
            Err(EstimateError::EstimationFailure(_))
        ));
    }

    #[test]
    fn gamma_guard() {
        let g = gamma(1e-10, 0.0, 1e6, 1e4);
        assert!(g.is_finite() && g >= 0.0);
        assert_eq!(gamma(0.9, 0.4, 1e12, 1e12), 0.0);
    }

    proptest! {
        #[test]
        fn gamma_nonnegative_and_decreasing(
            b in 0.001..0.5f64,
            c in 10.0..1e9f64,
            d in 10.0..1e9f64,
            f in 1.01..10.0f64,
        ) {
            let g = gamma(1e-10, b, c, d);
            prop_assert!(g >= 0.0);
            prop_assert!(gamma(1e-10, b, c * f, d) <= g * (1.0 + 1e-12));
            prop_assert!(gamma(1e-10, b, c, d * f) <= g * (1.0 + 1e-12));
        }

        #[test]
        fn n11_monotone(which in 0usize..3, extra in 1u64..100_000, grow in 1u64..100_000) {
            let cfg = Link::Km303.config();
            let base = Link::Km303.tallies();
            let n0 = estimate_n11_z(&base, &cfg, Mode::FiniteKey).unwrap().n11_z_lower;
            let mut t = base;
            match which {
                0 => t.n_mu_mu += extra,
                1 => t.n_o_nu += extra,
                _ => t.n_nu_o += extra,
            }
            prop_assert!(estimate_n11_z(&t, &cfg, Mode::FiniteKey).unwrap().n11_z_lower <= n0);
            let mut t = base;
            t.n_nu_nu += grow;
            prop_assert!(estimate_n11_z(&t, &cfg, Mode::FiniteKey).unwrap().n11_z_lower >= n0);
        }
    }
}
