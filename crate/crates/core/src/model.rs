//! Shared domain types and configuration.
//!
//! Everything here is a plain value type. [`SystemConfig`] carries every
//! physical and protocol parameter of a link; [`validate_config`] checks the
//! invariants the rest of the crate relies on. Configuration files are flat
//! `key = value` text with `#` comments, keys named after the struct fields
//! (nested fields joined with `.`, e.g. `alice.mu`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Intensity class chosen by one party for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntensityClass {
    Signal,
    Decoy,
    Vacuum,
}

impl IntensityClass {
    pub const ALL: [IntensityClass; 3] = [Self::Signal, Self::Decoy, Self::Vacuum];

    /// Two-bit code used by the detection-record format.
    pub fn code(self) -> u8 {
        match self {
            Self::Signal => 0,
            Self::Decoy => 1,
            Self::Vacuum => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Signal),
            1 => Some(Self::Decoy),
            2 => Some(Self::Vacuum),
            _ => None,
        }
    }
}

impl fmt::Display for IntensityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Signal => "mu",
            Self::Decoy => "nu",
            Self::Vacuum => "o",
        })
    }
}

/// Source settings of one sender.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartyParams {
    pub mu: f64,
    pub nu: f64,
    pub p_mu: f64,
    pub p_nu: f64,
    pub p_o: f64,
    /// Fibre loss between the sender and the measurement node.
    pub loss_to_charlie_db: f64,
}

impl PartyParams {
    /// Mean photon number emitted for `class`. Vacuum is exactly zero.
    pub fn intensity(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.mu,
            IntensityClass::Decoy => self.nu,
            IntensityClass::Vacuum => 0.0,
        }
    }

    pub fn probability(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.p_mu,
            IntensityClass::Decoy => self.p_nu,
            IntensityClass::Vacuum => self.p_o,
        }
    }

    /// Channel transmittance to the measurement node.
    pub fn transmittance(&self) -> f64 {
        10f64.powf(-self.loss_to_charlie_db / 10.0)
    }

    /// Maps a uniform draw in `[0, 1)` onto an intensity class.
    pub fn class_from_uniform(&self, u: f64) -> IntensityClass {
        if u < self.p_mu {
            IntensityClass::Signal
        } else if u < self.p_mu + self.p_nu {
            IntensityClass::Decoy
        } else {
            IntensityClass::Vacuum
        }
    }
}

/// Security parameters of the finite-key analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epsilons {
    pub eps_cor: f64,
    pub eps_prime: f64,
    pub eps_hat: f64,
    pub eps_pa: f64,
    pub eps_u: f64,
    pub eps_l: f64,
    pub eps_e: f64,
}

impl Epsilons {
    pub fn uniform(eps: f64) -> Self {
        Self {
            eps_cor: eps,
            eps_prime: eps,
            eps_hat: eps,
            eps_pa: eps,
            eps_u: eps,
            eps_l: eps,
            eps_e: eps,
        }
    }
}

impl Default for Epsilons {
    fn default() -> Self {
        Self::uniform(1e-10)
    }
}

/// Every parameter of one link: sources, channel, detectors, clock and
/// post-processing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub alice: PartyParams,
    pub bob: PartyParams,
    pub clock_hz: f64,
    /// Rounds per block.
    pub n_rounds: u64,
    pub l_max: u64,
    pub m_slices: u32,
    pub det_efficiency: f64,
    pub dark_rate_hz: f64,
    /// Initial laser beat frequency.
    pub beat_center_hz: f64,
    /// Random-walk step of the beat frequency per reference window.
    pub beat_jitter_std_hz: f64,
    /// Random-walk step of the channel phase per 100 us.
    pub phase_drift_std_rad: f64,
    /// Reference window length.
    pub t_r_us: f64,
    pub epsilons: Epsilons,
    /// Error-correction efficiency factor.
    pub f_ec: f64,
    /// Mean detected count rate of the reference light.
    pub ref_rate_hz: f64,
    /// Interference visibility of the reference beat.
    pub ref_visibility: f64,
    /// Zero-padding factor applied before the reference FFT.
    pub fft_pad_factor: u32,
    /// Time-bin width of the reference count stream.
    pub ref_bin_ns: f64,
}

impl SystemConfig {
    /// A link where Bob mirrors Alice.
    pub fn symmetric(party: PartyParams) -> Self {
        Self {
            alice: party,
            bob: party,
            ..Self::default()
        }
    }

    /// Per-gate dark-count probability of one detector.
    pub fn dark_prob(&self) -> f64 {
        self.dark_rate_hz / self.clock_hz
    }

    pub fn total_loss_db(&self) -> f64 {
        self.alice.loss_to_charlie_db + self.bob.loss_to_charlie_db
    }

    pub fn t_r_s(&self) -> f64 {
        self.t_r_us * 1e-6
    }

    pub fn party(&self, side: Party) -> &PartyParams {
        match side {
            Party::Alice => &self.alice,
            Party::Bob => &self.bob,
        }
    }

    /// Renders the configuration as `key = value` text. Floats use the
    /// shortest representation that parses back to the same bits.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.entries() {
            out.push_str(&key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        }
        out
    }

    fn entries(&self) -> Vec<(String, String)> {
        let mut e = Vec::new();
        for (name, p) in [("alice", &self.alice), ("bob", &self.bob)] {
            e.push((format!("{name}.mu"), fmt_f64(p.mu)));
            e.push((format!("{name}.nu"), fmt_f64(p.nu)));
            e.push((format!("{name}.p_mu"), fmt_f64(p.p_mu)));
            e.push((format!("{name}.p_nu"), fmt_f64(p.p_nu)));
            e.push((format!("{name}.p_o"), fmt_f64(p.p_o)));
            e.push((format!("{name}.loss_to_charlie_db"), fmt_f64(p.loss_to_charlie_db)));
        }
        e.push(("clock_hz".into(), fmt_f64(self.clock_hz)));
        e.push(("n_rounds".into(), self.n_rounds.to_string()));
        e.push(("l_max".into(), self.l_max.to_string()));
        e.push(("m_slices".into(), self.m_slices.to_string()));
        e.push(("det_efficiency".into(), fmt_f64(self.det_efficiency)));
        e.push(("dark_rate_hz".into(), fmt_f64(self.dark_rate_hz)));
        e.push(("beat_center_hz".into(), fmt_f64(self.beat_center_hz)));
        e.push(("beat_jitter_std_hz".into(), fmt_f64(self.beat_jitter_std_hz)));
        e.push(("phase_drift_std_rad".into(), fmt_f64(self.phase_drift_std_rad)));
        e.push(("t_r_us".into(), fmt_f64(self.t_r_us)));
        let eps = &self.epsilons;
        e.push(("epsilons.eps_cor".into(), fmt_f64(eps.eps_cor)));
        e.push(("epsilons.eps_prime".into(), fmt_f64(eps.eps_prime)));
        e.push(("epsilons.eps_hat".into(), fmt_f64(eps.eps_hat)));
        e.push(("epsilons.eps_pa".into(), fmt_f64(eps.eps_pa)));
        e.push(("epsilons.eps_u".into(), fmt_f64(eps.eps_u)));
        e.push(("epsilons.eps_l".into(), fmt_f64(eps.eps_l)));
        e.push(("epsilons.eps_e".into(), fmt_f64(eps.eps_e)));
        e.push(("f_ec".into(), fmt_f64(self.f_ec)));
        e.push(("ref_rate_hz".into(), fmt_f64(self.ref_rate_hz)));
        e.push(("ref_visibility".into(), fmt_f64(self.ref_visibility)));
        e.push(("fft_pad_factor".into(), self.fft_pad_factor.to_string()));
        e.push(("ref_bin_ns".into(), fmt_f64(self.ref_bin_ns)));
        e
    }

    /// Parses `key = value` text on top of the defaults. Unknown keys are
    /// rejected so that typos do not silently fall back to a default.
    pub fn from_config_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
                line: lineno + 1,
                message: "expected `key = value`".into(),
            })?;
            cfg.set(key.trim(), value.trim(), lineno + 1)?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        fn num<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::Syntax {
                line,
                message: format!("cannot parse `{value}` for `{key}`"),
            })
        }
        if let Some((party, field)) = key.split_once('.') {
            let p = match party {
                "alice" => &mut self.alice,
                "bob" => &mut self.bob,
                "epsilons" => {
                    let v: f64 = num(key, value, line)?;
                    let eps = &mut self.epsilons;
                    match field {
                        "eps_cor" => eps.eps_cor = v,
                        "eps_prime" => eps.eps_prime = v,
                        "eps_hat" => eps.eps_hat = v,
                        "eps_pa" => eps.eps_pa = v,
                        "eps_u" => eps.eps_u = v,
                        "eps_l" => eps.eps_l = v,
                        "eps_e" => eps.eps_e = v,
                        _ => return Err(ConfigError::UnknownKey(key.into())),
                    }
                    return Ok(());
                }
                _ => return Err(ConfigError::UnknownKey(key.into())),
            };
            let v: f64 = num(key, value, line)?;
            match field {
                "mu" => p.mu = v,
                "nu" => p.nu = v,
                "p_mu" => p.p_mu = v,
                "p_nu" => p.p_nu = v,
                "p_o" => p.p_o = v,
                "loss_to_charlie_db" => p.loss_to_charlie_db = v,
                _ => return Err(ConfigError::UnknownKey(key.into())),
            }
            return Ok(());
        }
        match key {
            "clock_hz" => self.clock_hz = num(key, value, line)?,
            "n_rounds" => self.n_rounds = parse_count(key, value, line)?,
            "l_max" => self.l_max = parse_count(key, value, line)?,
            "m_slices" => self.m_slices = num(key, value, line)?,
            "det_efficiency" => self.det_efficiency = num(key, value, line)?,
            "dark_rate_hz" => self.dark_rate_hz = num(key, value, line)?,
            "beat_center_hz" => self.beat_center_hz = num(key, value, line)?,
            "beat_jitter_std_hz" => self.beat_jitter_std_hz = num(key, value, line)?,
            "phase_drift_std_rad" => self.phase_drift_std_rad = num(key, value, line)?,
            "t_r_us" => self.t_r_us = num(key, value, line)?,
            "f_ec" => self.f_ec = num(key, value, line)?,
            "ref_rate_hz" => self.ref_rate_hz = num(key, value, line)?,
            "ref_visibility" => self.ref_visibility = num(key, value, line)?,
            "fft_pad_factor" => self.fft_pad_factor = num(key, value, line)?,
            "ref_bin_ns" => self.ref_bin_ns = num(key, value, line)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }
}

/// Accepts plain integers as well as exact scientific notation like `1e8`.
fn parse_count(key: &str, value: &str, line: usize) -> Result<u64, ConfigError> {
    if let Ok(v) = value.parse::<u64>() {
        return Ok(v);
    }
    match value.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64 => Ok(v as u64),
        _ => Err(ConfigError::Syntax {
            line,
            message: format!("`{key}` must be a non-negative integer, got `{value}`"),
        }),
    }
}

fn fmt_f64(v: f64) -> String {
    // `{:?}` is the shortest round-trip form and always keeps a decimal point
    // or exponent, so the value re-parses as f64.
    format!("{v:?}")
}

impl Default for SystemConfig {
    fn default() -> Self {
        let party = PartyParams {
            mu: 0.5216,
            nu: 0.0487,
            p_mu: 0.2844,
            p_nu: 0.2572,
            p_o: 0.4584,
            loss_to_charlie_db: 20.65,
        };
        Self {
            alice: party,
            bob: party,
            clock_hz: 5e8,
            n_rounds: 100_000_000,
            l_max: 10_000,
            m_slices: 16,
            det_efficiency: 0.55,
            dark_rate_hz: 30.0,
            beat_center_hz: 34e6,
            beat_jitter_std_hz: 652.282,
            phase_drift_std_rad: 0.0987,
            t_r_us: 500.0,
            epsilons: Epsilons::default(),
            f_ec: 1.16,
            ref_rate_hz: 1e6,
            ref_visibility: 1.0,
            fft_pad_factor: 2,
            ref_bin_ns: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field}: intensity ordering requires 0 < nu < mu (got nu = {nu}, mu = {mu})")]
    IntensityOrdering { field: String, mu: f64, nu: f64 },
    #[error("{field}: probability sum p_mu + p_nu + p_o = {sum} differs from 1")]
    ProbabilitySum { field: String, sum: f64 },
    #[error("{field}: value {value} outside {range}")]
    OutOfRange {
        field: String,
        value: f64,
        range: &'static str,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
}

impl ConfigError {
    /// Name of the offending field, where there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::IntensityOrdering { field, .. }
            | Self::ProbabilitySum { field, .. }
            | Self::OutOfRange { field, .. } => Some(field),
            Self::UnknownKey(key) => Some(key),
            Self::Syntax { .. } => None,
        }
    }
}

fn open_unit(field: impl Into<String>, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange {
            field: field.into(),
            value: v,
            range: "(0, 1)",
        })
    }
}

fn validate_party(name: &str, p: &PartyParams) -> Result<(), ConfigError> {
    if !(p.nu > 0.0 && p.nu < p.mu && p.mu.is_finite()) {
        return Err(ConfigError::IntensityOrdering {
            field: format!("{name}.nu"),
            mu: p.mu,
            nu: p.nu,
        });
    }
    open_unit(format!("{name}.p_mu"), p.p_mu)?;
    open_unit(format!("{name}.p_nu"), p.p_nu)?;
    open_unit(format!("{name}.p_o"), p.p_o)?;
    let sum = p.p_mu + p.p_nu + p.p_o;
    if (sum - 1.0).abs() > 1e-12 {
        return Err(ConfigError::ProbabilitySum {
            field: format!("{name}.p_o"),
            sum,
        });
    }
    if !(p.loss_to_charlie_db >= 0.0 && p.loss_to_charlie_db.is_finite()) {
        return Err(ConfigError::OutOfRange {
            field: format!("{name}.loss_to_charlie_db"),
            value: p.loss_to_charlie_db,
            range: "[0, inf)",
        });
    }
    Ok(())
}

/// Checks every configuration invariant and hands the config back unchanged.
/// The first violation is reported with the field name.
pub fn validate_config(cfg: SystemConfig) -> Result<SystemConfig, ConfigError> {
    validate_party("alice", &cfg.alice)?;
    validate_party("bob", &cfg.bob)?;
    let range_err = |field: &str, value: f64, range: &'static str| ConfigError::OutOfRange {
        field: field.into(),
        value,
        range,
    };
    if !(cfg.clock_hz > 0.0 && cfg.clock_hz.is_finite()) {
        return Err(range_err("clock_hz", cfg.clock_hz, "(0, inf)"));
    }
    if cfg.l_max < 1 {
        return Err(range_err("l_max", cfg.l_max as f64, "[1, inf)"));
    }
    if cfg.m_slices < 2 {
        return Err(range_err("m_slices", cfg.m_slices as f64, "[2, inf)"));
    }
    if !(cfg.det_efficiency > 0.0 && cfg.det_efficiency <= 1.0) {
        return Err(range_err("det_efficiency", cfg.det_efficiency, "(0, 1]"));
    }
    if !(cfg.dark_rate_hz >= 0.0 && cfg.dark_rate_hz < cfg.clock_hz) {
        return Err(range_err("dark_rate_hz", cfg.dark_rate_hz, "[0, clock_hz)"));
    }
    for (field, v) in [
        ("beat_jitter_std_hz", cfg.beat_jitter_std_hz),
        ("phase_drift_std_rad", cfg.phase_drift_std_rad),
        ("ref_rate_hz", cfg.ref_rate_hz),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(range_err(field, v, "[0, inf)"));
        }
    }
    if !cfg.beat_center_hz.is_finite() {
        return Err(range_err("beat_center_hz", cfg.beat_center_hz, "finite"));
    }
    if !(cfg.t_r_us > 0.0 && cfg.t_r_us.is_finite()) {
        return Err(range_err("t_r_us", cfg.t_r_us, "(0, inf)"));
    }
    let eps = &cfg.epsilons;
    for (field, v) in [
        ("epsilons.eps_cor", eps.eps_cor),
        ("epsilons.eps_prime", eps.eps_prime),
        ("epsilons.eps_hat", eps.eps_hat),
        ("epsilons.eps_pa", eps.eps_pa),
        ("epsilons.eps_u", eps.eps_u),
        ("epsilons.eps_l", eps.eps_l),
        ("epsilons.eps_e", eps.eps_e),
    ] {
        open_unit(field, v)?;
    }
    if !(cfg.f_ec >= 1.0 && cfg.f_ec.is_finite()) {
        return Err(range_err("f_ec", cfg.f_ec, "[1, inf)"));
    }
    if !(cfg.ref_visibility >= 0.0 && cfg.ref_visibility <= 1.0) {
        return Err(range_err("ref_visibility", cfg.ref_visibility, "[0, 1]"));
    }
    if cfg.fft_pad_factor < 1 {
        return Err(range_err("fft_pad_factor", cfg.fft_pad_factor as f64, "[1, inf)"));
    }
    if !(cfg.ref_bin_ns > 0.0 && cfg.ref_bin_ns.is_finite()) {
        return Err(range_err("ref_bin_ns", cfg.ref_bin_ns, "(0, inf)"));
    }
    let bins = cfg.t_r_us * 1e3 / cfg.ref_bin_ns;
    if (bins - bins.round()).abs() > 1e-9 * bins.max(1.0) {
        return Err(range_err("ref_bin_ns", cfg.ref_bin_ns, "a divisor of t_r_us"));
    }
    Ok(cfg)
}

/// Intensity classes and random phases chosen by both senders in one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTag {
    pub intensity_a: IntensityClass,
    pub intensity_b: IntensityClass,
    pub phase_a: f64,
    pub phase_b: f64,
}

/// Announced clicks of the two detectors in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub clicked_l: bool,
    pub clicked_r: bool,
}

impl DetectionRecord {
    pub fn new(clicked_l: bool, clicked_r: bool) -> Self {
        Self {
            clicked_l,
            clicked_r,
        }
    }

    /// Exactly one detector fired.
    pub fn is_effective(self) -> bool {
        self.clicked_l ^ self.clicked_r
    }

    pub fn any(self) -> bool {
        self.clicked_l || self.clicked_r
    }
}

/// Two paired rounds `j < k` with everything announced about them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub j: u64,
    pub k: u64,
    pub tag_j: RoundTag,
    pub tag_k: RoundTag,
    pub click_j: DetectionRecord,
    pub click_k: DetectionRecord,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::Link;
    use proptest::prelude::*;

    #[test]
    fn table_columns_validate() {
        for link in Link::ALL {
            let cfg = link.config();
            assert_eq!(validate_config(cfg.clone()), Ok(cfg));
        }
    }

    #[test]
    fn equal_intensities_rejected() {
        let mut cfg = Link::Km202.config();
        cfg.alice.nu = cfg.alice.mu;
        let err = validate_config(cfg).unwrap_err();
        assert!(err.to_string().contains("intensity ordering"), "{err}");
        assert_eq!(err.field(), Some("alice.nu"));
    }

    #[test]
    fn probability_sum_rejected() {
        let mut cfg = Link::Km202.config();
        cfg.bob.p_o -= 0.01;
        let err = validate_config(cfg).unwrap_err();
        assert!(err.to_string().contains("probability sum"), "{err}");
        assert_eq!(err.field(), Some("bob.p_o"));
    }

    #[test]
    fn scalar_ranges() {
        let base = Link::Km202.config();
        let mut c = base.clone();
        c.l_max = 0;
        assert_eq!(validate_config(c).unwrap_err().field(), Some("l_max"));
        let mut c = base.clone();
        c.m_slices = 1;
        assert_eq!(validate_config(c).unwrap_err().field(), Some("m_slices"));
        let mut c = base.clone();
        c.det_efficiency = 1.2;
        assert_eq!(validate_config(c).unwrap_err().field(), Some("det_efficiency"));
        let mut c = base.clone();
        c.epsilons.eps_pa = 1.0;
        assert_eq!(validate_config(c).unwrap_err().field(), Some("epsilons.eps_pa"));
        let mut c = base;
        c.ref_bin_ns = 0.3;
        assert_eq!(validate_config(c).unwrap_err().field(), Some("ref_bin_ns"));
    }

    #[test]
    fn config_text_round_trip_is_bit_exact() {
        for link in Link::ALL {
            let cfg = link.config();
            let text = cfg.to_config_text();
            let back = SystemConfig::from_config_text(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_config_text(), text);
            assert_eq!(back.alice.mu.to_bits(), cfg.alice.mu.to_bits());
        }
    }

    #[test]
    fn config_text_comments_and_errors() {
        let cfg = SystemConfig::from_config_text(
            "# link\nalice.mu = 0.6   # signal\n\nn_rounds = 1e6\nl_max=20\n",
        )
        .unwrap();
        assert_eq!(cfg.alice.mu, 0.6);
        assert_eq!(cfg.n_rounds, 1_000_000);
        assert_eq!(cfg.l_max, 20);
        assert!(matches!(
            SystemConfig::from_config_text("alice.colour = 3"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            SystemConfig::from_config_text("clock_hz 5"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            SystemConfig::from_config_text("n_rounds = 1.5"),
            Err(ConfigError::Syntax { .. })
        ));
    }

    #[test]
    fn vacuum_is_zero_and_codes_round_trip() {
        let p = Link::Km404.config().alice;
        assert_eq!(p.intensity(IntensityClass::Vacuum), 0.0);
        for c in IntensityClass::ALL {
            assert_eq!(IntensityClass::from_code(c.code()), Some(c));
        }
        assert_eq!(IntensityClass::from_code(3), None);
    }

    fn arb_party() -> impl Strategy<Value = PartyParams> {
        (0.0..1.5f64, 0.0..1.5f64, 0.0..1.0f64, 0.0..1.0f64, -5.0..60.0f64).prop_map(
            |(mu, nu, a, b, loss)| {
                let p_mu = a;
                let p_nu = (1.0 - a) * b;
                PartyParams {
                    mu,
                    nu,
                    p_mu,
                    p_nu,
                    p_o: 1.0 - p_mu - p_nu,
                    loss_to_charlie_db: loss,
                }
            },
        )
    }

    proptest! {
        #[test]
        fn accepted_configs_satisfy_invariants(
            alice in arb_party(),
            bob in arb_party(),
            l_max in 0u64..100,
            m_slices in 0u32..40,
            det in -0.2..1.2f64,
            eps in 0.0..1.0f64,
        ) {
            let cfg = SystemConfig {
                alice,
                bob,
                l_max,
                m_slices,
                det_efficiency: det,
                epsilons: Epsilons::uniform(eps),
                ..SystemConfig::default()
            };
            if let Ok(v) = validate_config(cfg.clone()) {
                prop_assert_eq!(&v, &cfg);
                for p in [&v.alice, &v.bob] {
                    prop_assert!(0.0 < p.nu && p.nu < p.mu);
                    prop_assert!((p.p_mu + p.p_nu + p.p_o - 1.0).abs() <= 1e-12);
                    for q in [p.p_mu, p.p_nu, p.p_o] {
                        prop_assert!(q > 0.0 && q < 1.0);
                    }
                }
                prop_assert!(v.l_max >= 1 && v.m_slices >= 2);
                prop_assert!(v.det_efficiency > 0.0 && v.det_efficiency <= 1.0);
                prop_assert!(eps > 0.0 && eps < 1.0);
            }
        }
    }
}
