//! Secret key rate and the repeaterless bound it is compared against.

use super::Mode;
use crate::model::Epsilons;

/// Binary entropy in bits; 0 at both ends.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

/// Bits disclosed by error correction of `n_z` bits at error rate `e_z`.
pub fn error_correction_leakage(n_z: f64, e_z: f64, f: f64) -> f64 {
    f * n_z * binary_entropy(e_z)
}

/// Finite-size penalty of correctness and privacy amplification, in bits.
pub fn security_penalty(eps: &Epsilons) -> f64 {
    (2.0 / eps.eps_cor).log2() + 2.0 * (2.0 / (eps.eps_prime * eps.eps_hat)).log2() + 2.0 * (1.0 / eps.eps_pa).log2()
}

/// Key rate in bits per pulse over `n_rounds` rounds, clamped at zero.
pub fn secret_key_rate(
    n11_z: f64,
    e11_ph: f64,
    lambda_ec: f64,
    n_rounds: f64,
    eps: &Epsilons,
    mode: Mode,
) -> f64 {
    if !(n_rounds > 0.0) {
        return 0.0;
    }
    let penalty = match mode {
        Mode::FiniteKey => security_penalty(eps),
        Mode::Statistical => 0.0,
    };
    let bits = n11_z * (1.0 - binary_entropy(e11_ph.min(0.5))) - lambda_ec - penalty;
    (bits / n_rounds).max(0.0)
}

/// Repeaterless bound `-log2(1 - eta)` for a channel with `loss_db` of loss.
/// Infinite for a lossless channel.
pub fn plob_bound(loss_db: f64) -> f64 {
    let eta = 10f64.powf(-loss_db / 10.0);
    if eta >= 1.0 {
        f64::INFINITY
    } else {
        -(-eta).ln_1p() / std::f64::consts::LN_2
    }
}
