//! Field-trial link settings and their recorded outcomes at four fibre
//! lengths.
//!
//! `Link::config` returns a complete [`SystemConfig`] for a link; with
//! `Link::tallies` and `Link::results` it forms the golden data set the
//! estimation chain is checked against.

use crate::model::{Epsilons, PartyParams, SystemConfig};
use crate::siftmap::TallyTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Km202,
    Km303,
    Km355,
    Km404,
}

/// Recorded outcome of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkResults {
    pub e_z: f64,
    pub e_x: f64,
    pub n11_z: f64,
    pub e11_ph: f64,
    pub skr_bpp: f64,
    pub skr_bps: f64,
    pub plob: f64,
    pub skr_over_plob: f64,
}

impl Link {
    pub const ALL: [Link; 4] = [Link::Km202, Link::Km303, Link::Km355, Link::Km404];

    pub fn distance_km(self) -> f64 {
        match self {
            Link::Km202 => 202.31,
            Link::Km303 => 303.37,
            Link::Km355 => 354.62,
            Link::Km404 => 404.25,
        }
    }

    pub fn total_loss_db(self) -> f64 {
        match self {
            Link::Km202 => 40.92,
            Link::Km303 => 61.19,
            Link::Km355 => 72.01,
            Link::Km404 => 81.60,
        }
    }

    /// Looks a link up by its name (`202`, `202km`, `202.31`, ...).
    pub fn from_name(name: &str) -> Option<Link> {
        let digits: String = name.chars().take_while(|c| c.is_ascii_digit()).collect();
        match digits.as_str() {
            "202" => Some(Link::Km202),
            "303" => Some(Link::Km303),
            "354" | "355" => Some(Link::Km355),
            "404" => Some(Link::Km404),
            _ => None,
        }
    }

    pub fn config(self) -> SystemConfig {
        #[rustfmt::skip]
        let (a, b, l_max, n_rounds, sigma) = match self {
            Link::Km202 => (
                [0.5216, 0.0487, 0.2844, 0.2572, 0.4584, 20.65],
                [0.5256, 0.0489, 0.2812, 0.2551, 0.4637, 20.27],
                10_000, 1_380_000_000_000u64, 0.0987,
            ),
            Link::Km303 => (
                [0.4599, 0.0452, 0.2458, 0.2167, 0.5375, 31.19],
                [0.4569, 0.0451, 0.2450, 0.2078, 0.5472, 30.00],
                20_000, 10_700_000_000_000, 0.0973,
            ),
            Link::Km355 => (
                [0.4028, 0.0307, 0.2518, 0.3062, 0.4420, 36.80],
                [0.3910, 0.0301, 0.2584, 0.3109, 0.4307, 35.21],
                40_000, 24_000_000_000_000, 0.1155,
            ),
            Link::Km404 => (
                [0.4486, 0.0335, 0.2518, 0.3062, 0.4420, 41.23],
                [0.4490, 0.0332, 0.2584, 0.3109, 0.4307, 40.37],
                50_000, 62_700_000_000_000, 0.1489,
            ),
        };
        let party = |v: [f64; 6]| PartyParams {
            mu: v[0],
            nu: v[1],
            p_mu: v[2],
            p_nu: v[3],
            p_o: v[4],
            loss_to_charlie_db: v[5],
        };
        SystemConfig {
            alice: party(a),
            bob: party(b),
            clock_hz: 5e8,
            n_rounds,
            l_max,
            m_slices: 16,
            det_efficiency: 0.55,
            dark_rate_hz: 30.0,
            beat_center_hz: 34e6,
            beat_jitter_std_hz: 652.282,
            phase_drift_std_rad: sigma,
            t_r_us: 500.0,
            epsilons: Epsilons::default(),
            f_ec: 1.16,
            ref_rate_hz: 1e6,
            ref_visibility: 1.0,
            fft_pad_factor: 2,
            ref_bin_ns: 1.0,
        }
    }

    /// Observed pair tallies accumulated over the full block.
    pub fn tallies(self) -> TallyTable {
        #[rustfmt::skip]
        let v: [u64; 12] = match self {
            Link::Km202 => [115886048, 82970, 67139, 65237, 872361, 5771, 5640, 13, 65586, 16656, 461735, 409785],
            Link::Km303 => [80563994, 173723, 204522, 187425, 608676, 17831, 16056, 260, 23156, 6115, 332943, 267584],
            Link::Km355 => [31730520, 249295, 218132, 217056, 333763, 21864, 20796, 771, 35696, 10300, 156652, 151144],
            Link::Km404 => [16433010, 210473, 177056, 196197, 173998, 15378, 18656, 1122, 17204, 5061, 65098, 85492],
        };
        TallyTable {
            n_mu_mu: v[0],
            m_mu_mu: v[1],
            n_mu_o: v[2],
            n_o_mu: v[3],
            n_nu_nu: v[4],
            n_nu_o: v[5],
            n_o_nu: v[6],
            n_o_o: v[7],
            n_2nu_2nu: v[8],
            m_2nu_2nu: v[9],
            n_2nu_o: v[10],
            n_o_2nu: v[11],
        }
    }

    pub fn results(self) -> LinkResults {
        #[rustfmt::skip]
        let v: [f64; 8] = match self {
            Link::Km202 => [0.0007, 0.2540, 39163294.0, 0.0717, 1.7406e-5, 8695.34, 1.1673e-4, 0.1491],
            Link::Km303 => [0.0022, 0.2641, 29808789.0, 0.1312, 1.1261e-6, 561.26, 1.0969e-6, 1.0267],
            Link::Km355 => [0.0079, 0.2885, 13689739.0, 0.1124, 2.2914e-7, 113.59, 9.0819e-8, 2.5230],
            Link::Km404 => [0.0128, 0.2941, 5908436.0, 0.1511, 2.0993e-8, 10.20, 9.9810e-9, 2.1033],
        };
        LinkResults {
            e_z: v[0],
            e_x: v[1],
            n11_z: v[2],
            e11_ph: v[3],
            skr_bpp: v[4],
            skr_bps: v[5],
            plob: v[6],
            skr_over_plob: v[7],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn losses_add_up() {
        for link in Link::ALL {
            let cfg = link.config();
            assert!((cfg.total_loss_db() - link.total_loss_db()).abs() < 1e-9);
        }
    }

    #[test]
    fn recorded_error_rates_match_tallies() {
        for link in Link::ALL {
            let t = link.tallies();
            let r = link.results();
            let ez = t.m_mu_mu as f64 / t.n_mu_mu as f64;
            let ex = t.m_2nu_2nu as f64 / t.n_2nu_2nu as f64;
            assert!((ez - r.e_z).abs() < 1e-4, "{link:?} {ez}");
            assert!((ex - r.e_x).abs() < 1e-4, "{link:?} {ex}");
            assert!((r.skr_bpp * 5e8 - r.skr_bps).abs() / r.skr_bps < 0.03);
        }
    }

    #[test]
    fn names() {
        assert_eq!(Link::from_name("202km"), Some(Link::Km202));
        assert_eq!(Link::from_name("354.62"), Some(Link::Km355));
        assert_eq!(Link::from_name("12"), None);
    }
}
