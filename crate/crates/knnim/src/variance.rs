//! Conservative variance estimation for the exposure-mean contrasts.
//!
//! The plain Horvitz-Thompson variance estimator cannot see unit pairs
//! whose joint exposure probability is zero (incompatible exposures never
//! co-occur, so no realization carries information about those terms).
//! Each such pair contributes an unestimable product of potential outcomes;
//! bounding every product `|y_i y_j| <= y_i^2/2 + y_j^2/2` and estimating
//! the right-hand side by inverse-probability weighting yields additive
//! corrections whose direction is known. Variances are corrected upward,
//! and covariances get a lower bound and an upper bound; combining the
//! bounds according to the sign each covariance enters with makes every
//! contrast variance estimate conservative in expectation.

use crate::estimators::{EstimatorError, ExperimentData, Weights, ZeroJointCounts};
use crate::model::Exposure;

use std::sync::Arc;

/// Plain Horvitz-Thompson estimate of `Var(ht_mean(e))`, summing only over
/// unit pairs with positive joint probability. Pairs with zero joint
/// probability are handled by [`a_var_hat`].
pub fn var_ht_hat(data: &ExperimentData, e: Exposure) -> f64 {
    let n = data.n() as f64;
    let units = data.units_with(e);
    if units.is_empty() {
        return 0.0;
    }
    let pi = data.marginal(e);
    let y = data.responses();

    let mut total = 0.0;
    for &i in units {
        let t = y[i as usize] / pi;
        total += (1.0 - pi) * t * t;
    }
    for &i in units {
        for &j in units {
            if i == j {
                continue;
            }
            let pij = data.joint(i as usize, e, j as usize, e);
            if pij > 0.0 {
                total += (pij - pi * pi) / pij * (y[i as usize] / pi) * (y[j as usize] / pi);
            }
        }
    }
    total / (n * n)
}

/// Upward correction for the variance terms that [`var_ht_hat`] cannot
/// estimate: over ordered pairs `(i, j)`, `i != j`, with zero joint
/// probability for `e`, sum `I_i Y_i^2 / (2 pi) + I_j Y_j^2 / (2 pi)`.
/// Always nonnegative.
pub fn a_var_hat(data: &ExperimentData, e: Exposure) -> f64 {
    let n = data.n() as f64;
    let units = data.units_with(e);
    if units.is_empty() {
        return 0.0;
    }
    let pi = data.marginal(e);
    let y = data.responses();
    let zero = data.zero_joint_counts(e, e);

    let mut total = 0.0;
    for &i in units {
        let i = i as usize;
        let weight = (zero.row[i] + zero.col[i]) as f64;
        total += weight * y[i] * y[i] / (2.0 * pi);
    }
    total / (n * n)
}

/// Conservative variance estimate for one exposure mean:
/// `var_ht_hat + a_var_hat`.
pub fn var_a(data: &ExperimentData, e: Exposure) -> f64 {
    var_ht_hat(data, e) + a_var_hat(data, e)
}

/// Plain Horvitz-Thompson estimate of `Cov(ht_mean(e1), ht_mean(e2))` for
/// distinct exposures, again restricted to pairs with positive joint
/// probability. The diagonal `i = j` always has zero joint probability
/// across distinct exposures and so never enters this sum.
pub fn cov_ht_hat(data: &ExperimentData, e1: Exposure, e2: Exposure) -> f64 {
    assert_ne!(e1, e2, "covariance requires two distinct exposures");
    let n = data.n() as f64;
    let units1 = data.units_with(e1);
    let units2 = data.units_with(e2);
    if units1.is_empty() || units2.is_empty() {
        return 0.0;
    }
    let pi1 = data.marginal(e1);
    let pi2 = data.marginal(e2);
    let y = data.responses();

    let mut total = 0.0;
    for &i in units1 {
        for &j in units2 {
            // a unit realizes exactly one exposure, so i != j here
            let pij = data.joint(i as usize, e1, j as usize, e2);
            if pij > 0.0 {
                total += (pij - pi1 * pi2) / pij * (y[i as usize] / pi1) * (y[j as usize] / pi2);
            }
        }
    }
    total / (n * n)
}

/// Zero-joint-partner counts for the ordered exposure pair `(e1, e2)`,
/// reusing the cached table for the opposite order when available.
fn zero_counts_oriented(
    data: &ExperimentData,
    e1: Exposure,
    e2: Exposure,
) -> (Arc<ZeroJointCounts>, bool) {
    if e1 <= e2 {
        (data.zero_joint_counts(e1, e2), false)
    } else {
        (data.zero_joint_counts(e2, e1), true)
    }
}

/// The nonnegative correction shared by the two covariance bounds: over
/// ordered pairs (including `i = j`) with zero joint probability across
/// `(e1, e2)`, sum `I_i(e1) Y_i^2 / (2 pi_1) + I_j(e2) Y_j^2 / (2 pi_2)`.
fn cov_correction(data: &ExperimentData, e1: Exposure, e2: Exposure) -> f64 {
    let n = data.n() as f64;
    let y = data.responses();
    let (zero, swapped) = zero_counts_oriented(data, e1, e2);

    let mut total = 0.0;
    let pi1 = data.marginal(e1);
    for &i in data.units_with(e1) {
        let i = i as usize;
        let weight = if swapped { zero.col[i] } else { zero.row[i] } as f64;
        total += weight * y[i] * y[i] / (2.0 * pi1);
    }
    let pi2 = data.marginal(e2);
    for &j in data.units_with(e2) {
        let j = j as usize;
        let weight = if swapped { zero.row[j] } else { zero.col[j] } as f64;
        total += weight * y[j] * y[j] / (2.0 * pi2);
    }
    total / (n * n)
}

/// Lower and upper covariance estimates `(cov_a, cov_b)`: the plain
/// estimate minus and plus the zero-joint correction. In expectation
/// `cov_a` under-estimates and `cov_b` over-estimates the true covariance.
pub fn cov_bounds(data: &ExperimentData, e1: Exposure, e2: Exposure) -> (f64, f64) {
    let center = cov_ht_hat(data, e1, e2);
    let correction = cov_correction(data, e1, e2);
    (center - correction, center + correction)
}

/// Conservative variance estimate for the difference of two exposure
/// means: `var_a(e1) + var_a(e2) - 2 cov_a(e1, e2)`, floored at zero.
pub fn var_difference_hat(data: &ExperimentData, e1: Exposure, e2: Exposure) -> f64 {
    let (cov_lower, _) = cov_bounds(data, e1, e2);
    let v = var_a(data, e1) + var_a(data, e2) - 2.0 * cov_lower;
    floor_at_zero(v, "difference")
}

/// Conservative variance estimate for the pooled contrast
/// `c1 (ht(e) - ht(e')) + c2 (ht(e*) - ht(e*'))` over four distinct
/// exposures.
///
/// Each covariance term enters with coefficient `2 c_m c_l` of known sign;
/// the upper covariance bound is used where the coefficient is positive
/// and the lower bound where it is negative, so the total over-estimates
/// the true variance in expectation. At the default weights this is
/// one quarter of each corrected variance, minus half the lower bound for
/// the four opposite-sign pairs, plus half the upper bound for the two
/// same-sign pairs.
pub fn var_halfsum_hat(
    data: &ExperimentData,
    exposures: [Exposure; 4],
    weights: Weights,
) -> Result<f64, EstimatorError> {
    for m in 0..4 {
        for l in (m + 1)..4 {
            if exposures[m] == exposures[l] {
                return Err(EstimatorError::ExposuresNotDistinct);
            }
        }
    }
    let coeff = [weights.c1(), -weights.c1(), weights.c2(), -weights.c2()];
    let mut total = 0.0;
    for m in 0..4 {
        total += coeff[m] * coeff[m] * var_a(data, exposures[m]);
    }
    for m in 0..4 {
        for l in (m + 1)..4 {
            let c = 2.0 * coeff[m] * coeff[l];
            if c == 0.0 {
                continue;
            }
            let (lower, upper) = cov_bounds(data, exposures[m], exposures[l]);
            total += c * if c > 0.0 { upper } else { lower };
        }
    }
    Ok(floor_at_zero(total, "pooled contrast"))
}

fn floor_at_zero(v: f64, what: &str) -> f64 {
    if v < 0.0 {
        log::warn!("conservative {what} variance estimate {v} is negative; reporting 0");
        0.0
    } else {
        v
    }
}
