//! Basis assignment, key mapping, phase-difference sifting of test-basis
//! pairs, and the pair tallies.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{IntensityClass, PairRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SiftError {
    #[error("pair ({j}, {k}) is not a Z-basis pair")]
    NotZ { j: u64, k: u64 },
    #[error("pair ({j}, {k}) is not a [2nu, 2nu] pair")]
    NotX { j: u64, k: u64 },
}

/// What one party sent over the two rounds of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartyPairClass {
    /// One signal and one vacuum pulse.
    Mu,
    /// One decoy and one vacuum pulse.
    Nu,
    /// Decoy in both rounds.
    TwoNu,
    /// Vacuum in both rounds.
    O,
    /// Any other combination.
    Invalid,
}

impl PartyPairClass {
    pub fn of(first: IntensityClass, second: IntensityClass) -> Self {
        use IntensityClass::*;
        match (first, second) {
            (Signal, Vacuum) | (Vacuum, Signal) => Self::Mu,
            (Decoy, Vacuum) | (Vacuum, Decoy) => Self::Nu,
            (Decoy, Decoy) => Self::TwoNu,
            (Vacuum, Vacuum) => Self::O,
            _ => Self::Invalid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TallyKey {
    MuMu,
    MuO,
    OMu,
    NuNu,
    NuO,
    ONu,
    OO,
    TwoNuTwoNu,
    TwoNuO,
    OTwoNu,
}

impl TallyKey {
    pub const ALL: [TallyKey; 10] = [
        Self::MuMu,
        Self::MuO,
        Self::OMu,
        Self::NuNu,
        Self::NuO,
        Self::ONu,
        Self::OO,
        Self::TwoNuTwoNu,
        Self::TwoNuO,
        Self::OTwoNu,
    ];

    /// JSON field holding the count of this key.
    pub fn field(self) -> &'static str {
        match self {
            Self::MuMu => "n_mu_mu",
            Self::MuO => "n_mu_o",
            Self::OMu => "n_o_mu",
            Self::NuNu => "n_nu_nu",
            Self::NuO => "n_nu_o",
            Self::ONu => "n_o_nu",
            Self::OO => "n_o_o",
            Self::TwoNuTwoNu => "n_2nu_2nu",
            Self::TwoNuO => "n_2nu_o",
            Self::OTwoNu => "n_o_2nu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisClass {
    pub class_a: PartyPairClass,
    pub class_b: PartyPairClass,
}

impl BasisClass {
    pub fn is_z(self) -> bool {
        self.class_a == PartyPairClass::Mu && self.class_b == PartyPairClass::Mu
    }

    pub fn is_x(self) -> bool {
        self.class_a == PartyPairClass::TwoNu && self.class_b == PartyPairClass::TwoNu
    }

    /// The tally this pair is counted in, if any.
    pub fn tally_key(self) -> Option<TallyKey> {
        use PartyPairClass::*;
        Some(match (self.class_a, self.class_b) {
            (Mu, Mu) => TallyKey::MuMu,
            (Mu, O) => TallyKey::MuO,
            (O, Mu) => TallyKey::OMu,
            (Nu, Nu) => TallyKey::NuNu,
            (Nu, O) => TallyKey::NuO,
            (O, Nu) => TallyKey::ONu,
            (O, O) => TallyKey::OO,
            (TwoNu, TwoNu) => TallyKey::TwoNuTwoNu,
            (TwoNu, O) => TallyKey::TwoNuO,
            (O, TwoNu) => TallyKey::OTwoNu,
            _ => return None,
        })
    }
}

pub fn assign_basis(pair: &PairRecord) -> BasisClass {
    BasisClass {
        class_a: PartyPairClass::of(pair.tag_j.intensity_a, pair.tag_k.intensity_a),
        class_b: PartyPairClass::of(pair.tag_j.intensity_b, pair.tag_k.intensity_b),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZBits {
    pub bit_a: u8,
    pub bit_b: u8,
    pub is_error: bool,
}

/// Raw key bits of a Z-basis pair. Alice's bit is 0 when her signal pulse
/// is in the first round; Bob's is 1 in that case.
pub fn map_z_bits(pair: &PairRecord) -> Result<ZBits, SiftError> {
    if !assign_basis(pair).is_z() {
        return Err(SiftError::NotZ { j: pair.j, k: pair.k });
    }
    let bit_a = u8::from(pair.tag_j.intensity_a != IntensityClass::Signal);
    let bit_b = u8::from(pair.tag_j.intensity_b == IntensityClass::Signal);
    Ok(ZBits {
        bit_a,
        bit_b,
        is_error: bit_a != bit_b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct XSift {
    pub kept: bool,
    pub is_error: bool,
}

/// Announced phase difference of a test pair after removing the phase the
/// laser beat accumulates between the two rounds, in `[0, 2 pi)`.
pub fn corrected_phase_difference(pair: &PairRecord, delta_f_hz: f64, clock_hz: f64) -> f64 {
    let delta_a = pair.tag_j.phase_a - pair.tag_k.phase_a;
    let delta_b = pair.tag_j.phase_b - pair.tag_k.phase_b;
    let beat = (TAU * (delta_f_hz / clock_hz) * (pair.k - pair.j) as f64).rem_euclid(TAU);
    (delta_a - delta_b + beat).rem_euclid(TAU)
}

/// Keeps a `[2nu, 2nu]` pair when its corrected phase difference lies
/// within `pi / m_slices` of 0 or of pi. Near 0 the pair is in error when
/// different detectors fired; near pi when the same detector fired twice.
pub fn sift_x_pair(pair: &PairRecord, delta_f_hz: f64, clock_hz: f64, m_slices: u32) -> Result<XSift, SiftError> {
    if !assign_basis(pair).is_x() {
        return Err(SiftError::NotX { j: pair.j, k: pair.k });
    }
    let d = corrected_phase_difference(pair, delta_f_hz, clock_hz);
    let half_width = PI / m_slices as f64;
    let same_detector = pair.click_j.clicked_l == pair.click_k.clicked_l;
    Ok(if d.min(TAU - d) <= half_width {
        XSift {
            kept: true,
            is_error: !same_detector,
        }
    } else if (d - PI).abs() <= half_width {
        XSift {
            kept: true,
            is_error: same_detector,
        }
    } else {
        XSift {
            kept: false,
            is_error: false,
        }
    })
}

/// Everything the tallies need from one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub basis: BasisClass,
    pub z: Option<ZBits>,
    pub x: Option<XSift>,
}

/// Classifies a pair, mapping Z bits or sifting it as appropriate.
/// `delta_f_hz` is only used for `[2nu, 2nu]` pairs.
pub fn process_pair(pair: &PairRecord, delta_f_hz: f64, clock_hz: f64, m_slices: u32) -> PairOutcome {
    let basis = assign_basis(pair);
    PairOutcome {
        basis,
        z: map_z_bits(pair).ok(),
        x: if basis.is_x() {
            sift_x_pair(pair, delta_f_hz, clock_hz, m_slices).ok()
        } else {
            None
        },
    }
}

/// Pair counts per tally key plus the error counts of the two bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TallyTable {
    pub n_mu_mu: u64,
    pub m_mu_mu: u64,
    pub n_mu_o: u64,
    pub n_o_mu: u64,
    pub n_nu_nu: u64,
    pub n_nu_o: u64,
    pub n_o_nu: u64,
    pub n_o_o: u64,
    pub n_2nu_2nu: u64,
    pub m_2nu_2nu: u64,
    pub n_2nu_o: u64,
    pub n_o_2nu: u64,
}

impl TallyTable {
    pub fn get(&self, key: TallyKey) -> u64 {
        *self.slot(key)
    }

    fn slot(&self, key: TallyKey) -> &u64 {
        match key {
            TallyKey::MuMu => &self.n_mu_mu,
            TallyKey::MuO => &self.n_mu_o,
            TallyKey::OMu => &self.n_o_mu,
            TallyKey::NuNu => &self.n_nu_nu,
            TallyKey::NuO => &self.n_nu_o,
            TallyKey::ONu => &self.n_o_nu,
            TallyKey::OO => &self.n_o_o,
            TallyKey::TwoNuTwoNu => &self.n_2nu_2nu,
            TallyKey::TwoNuO => &self.n_2nu_o,
            TallyKey::OTwoNu => &self.n_o_2nu,
        }
    }

    fn slot_mut(&mut self, key: TallyKey) -> &mut u64 {
        match key {
            TallyKey::MuMu => &mut self.n_mu_mu,
            TallyKey::MuO => &mut self.n_mu_o,
            TallyKey::OMu => &mut self.n_o_mu,
            TallyKey::NuNu => &mut self.n_nu_nu,
            TallyKey::NuO => &mut self.n_nu_o,
            TallyKey::ONu => &mut self.n_o_nu,
            TallyKey::OO => &mut self.n_o_o,
            TallyKey::TwoNuTwoNu => &mut self.n_2nu_2nu,
            TallyKey::TwoNuO => &mut self.n_2nu_o,
            TallyKey::OTwoNu => &mut self.n_o_2nu,
        }
    }

    /// Adds one pair. Test pairs only count when they survive sifting.
    pub fn record(&mut self, outcome: &PairOutcome) {
        let Some(key) = outcome.basis.tally_key() else {
            return;
        };
        if key == TallyKey::TwoNuTwoNu {
            match outcome.x {
                Some(x) if x.kept => {
                    self.n_2nu_2nu += 1;
                    self.m_2nu_2nu += u64::from(x.is_error);
                }
                _ => {}
            }
            return;
        }
        *self.slot_mut(key) += 1;
        if let Some(z) = outcome.z {
            self.m_mu_mu += u64::from(z.is_error);
        }
    }

    pub fn e_z(&self) -> f64 {
        ratio(self.m_mu_mu, self.n_mu_mu)
    }

    pub fn e_x(&self) -> f64 {
        ratio(self.m_2nu_2nu, self.n_2nu_2nu)
    }

    pub fn is_consistent(&self) -> bool {
        self.m_mu_mu <= self.n_mu_mu && self.m_2nu_2nu <= self.n_2nu_2nu
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn ratio(m: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        m as f64 / n as f64
    }
}

impl AddAssign for TallyTable {
    fn add_assign(&mut self, o: Self) {
        self.n_mu_mu += o.n_mu_mu;
        self.m_mu_mu += o.m_mu_mu;
        self.n_mu_o += o.n_mu_o;
        self.n_o_mu += o.n_o_mu;
        self.n_nu_nu += o.n_nu_nu;
        self.n_nu_o += o.n_nu_o;
        self.n_o_nu += o.n_o_nu;
        self.n_o_o += o.n_o_o;
        self.n_2nu_2nu += o.n_2nu_2nu;
        self.m_2nu_2nu += o.m_2nu_2nu;
        self.n_2nu_o += o.n_2nu_o;
        self.n_o_2nu += o.n_o_2nu;
    }
}

impl Add for TallyTable {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl std::iter::Sum for TallyTable {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

pub fn accumulate_tallies<'a, I: IntoIterator<Item = &'a PairOutcome>>(outcomes: I) -> TallyTable {
    let mut t = TallyTable::default();
    for o in outcomes {
        t.record(o);
    }
    t
}
