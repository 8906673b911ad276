//! Multiplicative Chernoff bounds turning an observed count into bounds on
//! its expected value.
//!
//! With `L = ln(1/eps)`, the upper deviation `chi_u` in `(0, 1)` solves
//! `n * (chi/(1-chi) + ln(1-chi)) = L` and the lower deviation `chi_l > 0`
//! solves `n * (ln(1+chi) - chi/(1+chi)) = L`. Both left-hand sides are
//! increasing, so plain bisection finds the roots to machine precision.

use serde::{Deserialize, Serialize};

use super::EstimateError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
    pub eps_l: f64,
    pub eps_u: f64,
}

/// Below this the closed forms lose digits to cancellation and the power
/// series take over.
const SERIES_CUTOFF: f64 = 0.05;

/// `chi/(1-chi) + ln(1-chi)`.
pub fn upper_rate(chi: f64) -> f64 {
    if chi < SERIES_CUTOFF {
        // sum_{k>=2} chi^k (k-1)/k
        let mut term = chi * chi;
        let mut sum = 0.0;
        for k in 2..200 {
            let add = term * (k - 1) as f64 / k as f64;
            sum += add;
            if add < sum * 1e-18 {
                break;
            }
            term *= chi;
        }
        sum
    } else {
        chi / (1.0 - chi) + (-chi).ln_1p()
    }
}

/// `ln(1+chi) - chi/(1+chi)`.
pub fn lower_rate(chi: f64) -> f64 {
    if chi < SERIES_CUTOFF {
        // sum_{k>=2} (-1)^k chi^k (1 - 1/k)
        let mut term = chi * chi;
        let mut sum = 0.0;
        for k in 2..200 {
            let add = term * (1.0 - 1.0 / k as f64);
            if k % 2 == 0 {
                sum += add;
            } else {
                sum -= add;
            }
            if add < sum.abs() * 1e-18 {
                break;
            }
            term *= chi;
        }
        sum
    } else {
        chi.ln_1p() - chi / (1.0 + chi)
    }
}

fn check_eps(eps: f64) -> Result<f64, EstimateError> {
    if eps > 0.0 && eps < 1.0 {
        Ok(-eps.ln())
    } else {
        Err(EstimateError::InvalidInput(format!("epsilon {eps} outside (0, 1)")))
    }
}

/// Bisection of an increasing `f` for `f(x) = target` on `[lo, hi]`,
/// run until the bracket stops shrinking.
fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    loop {
        let mid = lo + (hi - lo) / 2.0;
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (f(lo) - target).abs() <= (f(hi) - target).abs() {
        lo
    } else {
        hi
    }
}

pub fn chi_upper(n: f64, eps: f64) -> Result<f64, EstimateError> {
    let target = check_eps(eps)?;
    if !(n > 0.0 && n.is_finite()) {
        return Err(EstimateError::InvalidInput(format!("count {n} must be positive")));
    }
    let hi = 1.0 - 1e-15;
    if n * upper_rate(hi) < target {
        return Err(EstimateError::Numeric(format!(
            "upper deviation for n = {n}, eps = {eps} not bracketed by (0, {hi})"
        )));
    }
    Ok(bisect(|c| n * upper_rate(c), target, 0.0, hi))
}

pub fn chi_lower(n: f64, eps: f64) -> Result<f64, EstimateError> {
    let target = check_eps(eps)?;
    if !(n > 0.0 && n.is_finite()) {
        return Err(EstimateError::InvalidInput(format!("count {n} must be positive")));
    }
    let mut hi = 1e3;
    while n * lower_rate(hi) < target {
        hi *= 10.0;
        if !hi.is_finite() || hi > 1e300 {
            return Err(EstimateError::Numeric(format!(
                "lower deviation for n = {n}, eps = {eps} not bracketed by (0, 1e300)"
            )));
        }
    }
    Ok(bisect(|c| n * lower_rate(c), target, 0.0, hi))
}

/// Bounds on the expected value behind an observed count `n`. For `n = 0`
/// the lower bound is 0 and the upper bound is `ln(1/eps_u)`.
pub fn chernoff_bounds(n: f64, eps_u: f64, eps_l: f64) -> Result<BoundPair, EstimateError> {
    if !(n >= 0.0 && n.is_finite()) {
        return Err(EstimateError::InvalidInput(format!("count {n} must be non-negative")));
    }
    let (lower, upper) = if n == 0.0 {
        (0.0, check_eps(eps_u)?)
    } else {
        (n / (1.0 + chi_lower(n, eps_l)?), n / (1.0 - chi_upper(n, eps_u)?))
    };
    Ok(BoundPair {
        lower: lower.min(n),
        upper: upper.max(n),
        eps_l,
        eps_u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn series_meets_closed_form() {
        for &c in &[0.049, 0.0501] {
            let direct_u = c / (1.0 - c) + (-c as f64).ln_1p();
            let direct_l = (c as f64).ln_1p() - c / (1.0 + c);
            assert!((upper_rate(c) / direct_u - 1.0).abs() < 1e-12);
            assert!((lower_rate(c) / direct_l - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn large_count_is_tight() {
        let b = chernoff_bounds(1e8, 1e-10, 1e-10).unwrap();
        assert!(b.upper / 1e8 - 1.0 < 1e-3 && b.upper > 1e8);
        assert!(1.0 - b.lower / 1e8 < 1e-3 && b.lower < 1e8);
    }

    #[test]
    fn small_count_is_wide_but_finite() {
        let b = chernoff_bounds(13.0, 1e-10, 1e-10).unwrap();
        assert!(b.upper.is_finite() && b.upper > 30.0);
        assert!(b.lower > 0.0 && b.lower < 5.0);
    }

    #[test]
    fn zero_count() {
        let b = chernoff_bounds(0.0, 1e-10, 1e-10).unwrap();
        assert_eq!(b.lower, 0.0);
        assert!((b.upper - 1e10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn tiny_count_needs_wide_lower_bracket() {
        let chi = chi_lower(1.0, 1e-15).unwrap();
        assert!(chi > 1e15, "{chi}");
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(chernoff_bounds(-1.0, 0.1, 0.1), Err(EstimateError::InvalidInput(_))));
        assert!(matches!(chernoff_bounds(5.0, 1.0, 0.1), Err(EstimateError::InvalidInput(_))));
    }

    proptest! {
        #[test]
        fn bounds_bracket_the_count(n in 0.0..1e10f64, e in -30.0..-0.1f64) {
            let eps = 10f64.powf(e);
            let b = chernoff_bounds(n.floor(), eps, eps).unwrap();
            prop_assert!(b.lower <= n.floor() && n.floor() <= b.upper);
            prop_assert!(b.lower >= 0.0);
        }
    }
}
