//! Closed-form marginal and joint exposure probabilities under completely
//! randomized and Bernoulli designs.
//!
//! The marginal probability of an exposure depends only on how many treated
//! and control units it places in the closed neighborhood. Joint
//! probabilities for two units additionally depend on how their closed
//! neighborhoods overlap and on whether the two exposures agree on every
//! shared unit (compatibility); incompatible exposure pairs have joint
//! probability zero.

use thiserror::Error;

use crate::model::{Exposure, KNeighborhoods};

/// Errors from design construction and probability queries.
#[derive(Debug, Error)]
pub enum DesignError {
    #[error("completely randomized design needs 0 < n_treated < n, got n_treated = {n_treated}, n = {n}")]
    InvalidTreatedCount { n_treated: usize, n: usize },
    #[error("Bernoulli design needs 0 < p < 1, got p = {p}")]
    InvalidProbability { p: f64 },
    #[error("design is for {design_n} units but the neighborhoods cover {data_n}")]
    SizeMismatch { design_n: usize, data_n: usize },
    #[error("exposure is for neighborhood size {got}, expected {expected}")]
    ExposureSize { got: usize, expected: usize },
    #[error("unit index {index} out of range for {n} units")]
    UnitIndex { index: usize, n: usize },
    #[error("joint probability requires two distinct units, got {0} twice")]
    SameUnit(usize),
}

/// A randomization scheme over `n` units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Design {
    /// Exactly `n_treated` of the `n` units are treated, all subsets
    /// equally likely.
    CompletelyRandomized { n: usize, n_treated: usize },
    /// Each unit is treated independently with probability `p`.
    Bernoulli { n: usize, p: f64 },
}

impl Design {
    pub fn completely_randomized(n: usize, n_treated: usize) -> Result<Self, DesignError> {
        if n_treated == 0 || n_treated >= n {
            return Err(DesignError::InvalidTreatedCount { n_treated, n });
        }
        Ok(Design::CompletelyRandomized { n, n_treated })
    }

    pub fn bernoulli(n: usize, p: f64) -> Result<Self, DesignError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(DesignError::InvalidProbability { p });
        }
        Ok(Design::Bernoulli { n, p })
    }

    pub fn n(&self) -> usize {
        match *self {
            Design::CompletelyRandomized { n, .. } => n,
            Design::Bernoulli { n, .. } => n,
        }
    }

    fn check_matches(&self, nbr: &KNeighborhoods) -> Result<(), DesignError> {
        if self.n() != nbr.n() {
            return Err(DesignError::SizeMismatch {
                design_n: self.n(),
                data_n: nbr.n(),
            });
        }
        Ok(())
    }

    /// Probability that `treated` named units are all treated and `control`
    /// named units are all control, for any disjoint choice of that many
    /// units.
    fn pattern_probability(&self, treated: usize, control: usize) -> f64 {
        match *self {
            Design::CompletelyRandomized { n, n_treated } => {
                crd_pattern_probability(n, n_treated, treated, control)
            }
            Design::Bernoulli { p, .. } => p.powi(treated as i32) * (1.0 - p).powi(control as i32),
        }
    }
}

/// Probability under complete randomization that a fixed set of `treated`
/// units all receive treatment and a disjoint fixed set of `control` units
/// all receive control.
///
/// Computed as a product of sequential-draw ratios, which keeps every
/// intermediate in [0, 1]; equivalently a ratio of binomial coefficients,
/// with out-of-range coefficients evaluating to 0.
fn crd_pattern_probability(n: usize, n_treated: usize, treated: usize, control: usize) -> f64 {
    let n_control = n - n_treated;
    if treated > n_treated || control > n_control {
        return 0.0;
    }
    let mut prob = 1.0;
    let mut remaining = n as f64;
    for a in 0..treated {
        prob *= (n_treated - a) as f64 / remaining;
        remaining -= 1.0;
    }
    for b in 0..control {
        prob *= (n_control - b) as f64 / remaining;
        remaining -= 1.0;
    }
    prob
}

/// How two units' closed neighborhoods overlap under a pair of exposures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairOverlap {
    /// Number of units shared by the two closed neighborhoods.
    pub shared: usize,
    /// Whether the two exposures assign the same treatment to every shared
    /// unit, i.e. can co-occur in one assignment.
    pub compatible: bool,
    /// Treated units in `i`'s closed neighborhood under `e_i`.
    pub i_treated: usize,
    /// Control units in `i`'s closed neighborhood under `e_i`.
    pub i_control: usize,
    /// Treated units under `e_j` in `j`'s closed neighborhood excluding
    /// units already in `i`'s closed neighborhood.
    pub j_extra_treated: usize,
    /// Control units under `e_j` in the same exclusive set.
    pub j_extra_control: usize,
}

/// The treatment bit `e` assigns to `u` within `center`'s closed
/// neighborhood, or `None` if `u` lies outside it.
fn bit_for(nbr: &KNeighborhoods, center: usize, e: Exposure, u: usize) -> Option<bool> {
    if u == center {
        Some(e.own())
    } else {
        nbr.position_of(center, u).map(|p| e.neighbor(p))
    }
}

/// Overlay the exposures `e_i` (for unit `i`) and `e_j` (for unit `j`) and
/// report overlap size, compatibility, and the treated/control counts the
/// joint-probability formulas need. Counts are populated whether or not the
/// pair is compatible.
pub fn check_compatibility(
    nbr: &KNeighborhoods,
    i: usize,
    e_i: Exposure,
    j: usize,
    e_j: Exposure,
) -> Result<PairOverlap, DesignError> {
    if i == j {
        return Err(DesignError::SameUnit(i));
    }
    for &(unit, e) in &[(i, e_i), (j, e_j)] {
        if unit >= nbr.n() {
            return Err(DesignError::UnitIndex {
                index: unit,
                n: nbr.n(),
            });
        }
        if e.k() != nbr.k() {
            return Err(DesignError::ExposureSize {
                got: e.k(),
                expected: nbr.k(),
            });
        }
    }

    let mut shared = 0;
    let mut compatible = true;
    let mut j_extra_treated = 0;
    let mut j_extra_control = 0;

    // Walk j's closed neighborhood once; each member is either shared with
    // i's closed neighborhood (must agree) or exclusive to j (counted).
    let j_closed = std::iter::once(j).chain(nbr.neighbors_of(j).iter().copied());
    for u in j_closed {
        let b_j = bit_for(nbr, j, e_j, u).expect("u is in j's closed neighborhood");
        match bit_for(nbr, i, e_i, u) {
            Some(b_i) => {
                shared += 1;
                if b_i != b_j {
                    compatible = false;
                }
            }
            None => {
                if b_j {
                    j_extra_treated += 1;
                } else {
                    j_extra_control += 1;
                }
            }
        }
    }

    Ok(PairOverlap {
        shared,
        compatible,
        i_treated: e_i.treated_count(),
        i_control: e_i.control_count(),
        j_extra_treated,
        j_extra_control,
    })
}

/// Marginal probability that unit `i`'s closed neighborhood receives
/// exposure `e`.
///
/// The probability depends on the exposure only through its treated and
/// control counts, so it is the same for every unit.
pub fn marginal_probability(
    design: &Design,
    nbr: &KNeighborhoods,
    i: usize,
    e: Exposure,
) -> Result<f64, DesignError> {
    design.check_matches(nbr)?;
    if i >= nbr.n() {
        return Err(DesignError::UnitIndex {
            index: i,
            n: nbr.n(),
        });
    }
    if e.k() != nbr.k() {
        return Err(DesignError::ExposureSize {
            got: e.k(),
            expected: nbr.k(),
        });
    }
    Ok(design.pattern_probability(e.treated_count(), e.control_count()))
}

/// Joint probability that unit `i` receives exposure `e_i` and unit `j`
/// receives `e_j`. Zero for incompatible pairs; otherwise the pattern
/// probability over the union of the two closed neighborhoods.
pub fn joint_probability(
    design: &Design,
    nbr: &KNeighborhoods,
    i: usize,
    e_i: Exposure,
    j: usize,
    e_j: Exposure,
) -> Result<f64, DesignError> {
    design.check_matches(nbr)?;
    let overlap = check_compatibility(nbr, i, e_i, j, e_j)?;
    if !overlap.compatible {
        return Ok(0.0);
    }
    Ok(design.pattern_probability(
        overlap.i_treated + overlap.j_extra_treated,
        overlap.i_control + overlap.j_extra_control,
    ))
}

/// Marginal probabilities for every exposure of unit `i`, in report order.
/// The values sum to 1.
pub fn all_marginals(
    design: &Design,
    nbr: &KNeighborhoods,
    i: usize,
) -> Result<Vec<(Exposure, f64)>, DesignError> {
    Exposure::enumerate(nbr.k())
        .map(|e| marginal_probability(design, nbr, i, e).map(|p| (e, p)))
        .collect()
}
