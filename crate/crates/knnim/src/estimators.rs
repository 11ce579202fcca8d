//! Horvitz-Thompson exposure means and the direct / indirect / total /
//! per-neighbor effect estimators.
//!
//! Point estimators come in two families: simple differences of exposure
//! means, and pooled half-sum contrasts that additionally average over the
//! unit's own treatment status. The latter are unbiased for the named
//! effects when average direct-effect contrasts do not depend on the
//! neighborhood exposure (no weak interaction); in general they estimate
//! the corresponding pooled contrast of mean potential outcomes.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::design::{self, Design, DesignError};
use crate::model::{classify_exposure, Assignment, Exposure, KNeighborhoods, ModelError};
use crate::variance;

/// Errors from experiment construction and effect estimation.
#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("responses have {got} entries, expected {expected}")]
    ResponseLength { got: usize, expected: usize },
    #[error("response of unit {index} is {value}, expected a finite number")]
    NonFiniteResponse { index: usize, value: f64 },
    #[error(
        "assignment treats {observed} units but the design fixes {expected}; \
         the data cannot have come from this design"
    )]
    TreatedCountMismatch { observed: usize, expected: usize },
    #[error(
        "exposure {exposure} required by the requested estimator has zero probability \
         for units {}{} under this design",
        units.iter().take(8).map(|u| u.to_string()).collect::<Vec<_>>().join(","),
        if units.len() > 8 { format!(",... ({} total)", units.len()) } else { String::new() }
    )]
    PositivityViolation { exposure: String, units: Vec<usize> },
    #[error("weights must be finite and sum to 1, got c1 = {c1}, c2 = {c2}")]
    InvalidWeights { c1: f64, c2: f64 },
    #[error("per-neighbor effect index {index} out of range 1..={k}")]
    NeighborIndexOutOfRange { index: usize, k: usize },
    #[error("the four exposures of a pooled contrast must be distinct")]
    ExposuresNotDistinct,
}

/// Which effect an estimate targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EffectKind {
    /// Everyone treated vs everyone control.
    Total,
    /// Own treatment flipped, neighborhood held all-treated.
    Direct,
    /// Neighborhood flipped treated/control, own treatment held at control.
    Indirect,
    /// Marginal contribution of the l-th nearest neighbor's treatment
    /// (1 = nearest).
    NearestNeighbor(usize),
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EffectKind::Total => write!(f, "total"),
            EffectKind::Direct => write!(f, "direct"),
            EffectKind::Indirect => write!(f, "indirect"),
            EffectKind::NearestNeighbor(l) => write!(f, "nn{l}"),
        }
    }
}

/// Estimator family: simple exposure-mean differences, or pooled half-sum
/// contrasts valid under the no-weak-interaction assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Assumption {
    A1,
    A2,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::A1 => write!(f, "a1"),
            Assumption::A2 => write!(f, "a2"),
        }
    }
}

/// Pooling weights for the two branches of an A2 contrast; they must sum
/// to 1 exactly. The default 1/2, 1/2 is the only choice under which the
/// total = direct + indirect and indirect = sum-of-per-neighbor
/// decompositions hold per realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    c1: f64,
    c2: f64,
}

impl Weights {
    pub fn new(c1: f64, c2: f64) -> Result<Self, EstimatorError> {
        if !c1.is_finite() || !c2.is_finite() || c1 + c2 != 1.0 {
            return Err(EstimatorError::InvalidWeights { c1, c2 });
        }
        Ok(Self { c1, c2 })
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }
}

impl Default for Weights {
    fn default() -> Self {
        Self { c1: 0.5, c2: 0.5 }
    }
}

/// A point estimate with its conservative variance and standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectEstimate {
    pub kind: EffectKind,
    pub assumption: Assumption,
    pub estimate: f64,
    /// Conservative variance estimate (expectation upper-bounds the true
    /// variance); floored at zero.
    pub variance: f64,
    pub se: f64,
}

impl EffectEstimate {
    /// Stable row label, e.g. `total`, `direct_a1`, `nn2_a2`.
    pub fn label(&self) -> String {
        match self.kind {
            EffectKind::Total => "total".to_string(),
            kind => format!("{kind}_{}", self.assumption),
        }
    }
}

/// Per-partner counts of zero joint probability, used by the variance
/// corrections. `row[i]` counts partners j with zero joint when i takes the
/// first exposure; `col[j]` counts partners i when j takes the second.
#[derive(Debug)]
pub(crate) struct ZeroJointCounts {
    pub(crate) row: Vec<u32>,
    pub(crate) col: Vec<u32>,
}

/// Immutable study frame shared by all observations of one experiment:
/// neighborhoods, design, and lazily built probability tables.
#[derive(Debug)]
struct StudyFrame {
    nbr: KNeighborhoods,
    design: Design,
    zero_counts: RwLock<HashMap<(Exposure, Exposure), Arc<ZeroJointCounts>>>,
}

impl StudyFrame {
    fn joint(&self, i: usize, e_i: Exposure, j: usize, e_j: Exposure) -> f64 {
        design::joint_probability(&self.design, &self.nbr, i, e_i, j, e_j)
            .expect("validated units and exposures")
    }

    fn compute_zero_counts(&self, e1: Exposure, e2: Exposure) -> ZeroJointCounts {
        let n = self.nbr.n();
        let mut row = vec![0u32; n];
        let mut col = vec![0u32; n];
        if e1 == e2 {
            // same-exposure tables exclude the diagonal; the joint is
            // symmetric so one triangle suffices
            for i in 0..n {
                for j in (i + 1)..n {
                    if self.joint(i, e1, j, e2) == 0.0 {
                        row[i] += 1;
                        col[j] += 1;
                        row[j] += 1;
                        col[i] += 1;
                    }
                }
            }
        } else {
            // distinct exposures: a unit never realizes both, so the
            // diagonal is part of the zero set
            for i in 0..n {
                row[i] += 1;
                col[i] += 1;
                for (j, count) in col.iter_mut().enumerate() {
                    if j != i && self.joint(i, e1, j, e2) == 0.0 {
                        row[i] += 1;
                        *count += 1;
                    }
                }
            }
        }
        ZeroJointCounts { row, col }
    }

    fn zero_counts(&self, e1: Exposure, e2: Exposure) -> Arc<ZeroJointCounts> {
        if let Some(t) = self.zero_counts.read().unwrap().get(&(e1, e2)) {
            return Arc::clone(t);
        }
        let table = Arc::new(self.compute_zero_counts(e1, e2));
        let mut cache = self.zero_counts.write().unwrap();
        Arc::clone(cache.entry((e1, e2)).or_insert(table))
    }
}

/// One realized experiment: the interference structure, the design, the
/// observed assignment, and the responses.
///
/// Construction classifies every unit's exposure and validates that the
/// observation is possible under the design. Further observations of the
/// same study (new assignment and responses over the same units and design)
/// should be created with [`ExperimentData::with_observation`], which
/// shares the probability tables already computed.
#[derive(Debug)]
pub struct ExperimentData {
    frame: Arc<StudyFrame>,
    w: Assignment,
    y: Vec<f64>,
    exposures: Vec<Exposure>,
    units_by_exposure: HashMap<Exposure, Vec<u32>>,
}

impl ExperimentData {
    pub fn new(
        nbr: KNeighborhoods,
        design: Design,
        w: Assignment,
        y: Vec<f64>,
    ) -> Result<Self, EstimatorError> {
        if design.n() != nbr.n() {
            return Err(DesignError::SizeMismatch {
                design_n: design.n(),
                data_n: nbr.n(),
            }
            .into());
        }
        let frame = Arc::new(StudyFrame {
            nbr,
            design,
            zero_counts: RwLock::new(HashMap::new()),
        });
        Self::build(frame, w, y)
    }

    /// A new observation of the same study; neighborhoods, design, and
    /// cached probability tables are shared with `self`.
    pub fn with_observation(&self, w: Assignment, y: Vec<f64>) -> Result<Self, EstimatorError> {
        Self::build(Arc::clone(&self.frame), w, y)
    }

    fn build(frame: Arc<StudyFrame>, w: Assignment, y: Vec<f64>) -> Result<Self, EstimatorError> {
        let n = frame.nbr.n();
        if w.len() != n {
            return Err(ModelError::AssignmentLength {
                got: w.len(),
                expected: n,
            }
            .into());
        }
        if y.len() != n {
            return Err(EstimatorError::ResponseLength {
                got: y.len(),
                expected: n,
            });
        }
        if let Some((index, &value)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(EstimatorError::NonFiniteResponse { index, value });
        }
        if let Design::CompletelyRandomized { n_treated, .. } = frame.design {
            let observed = w.treated_count();
            if observed != n_treated {
                return Err(EstimatorError::TreatedCountMismatch {
                    observed,
                    expected: n_treated,
                });
            }
        }

        let mut exposures = Vec::with_capacity(n);
        let mut units_by_exposure: HashMap<Exposure, Vec<u32>> = HashMap::new();
        for i in 0..n {
            let e = classify_exposure(&frame.nbr, &w, i)?;
            let pi = design::marginal_probability(&frame.design, &frame.nbr, i, e)?;
            if pi <= 0.0 {
                return Err(EstimatorError::PositivityViolation {
                    exposure: e.to_string(),
                    units: vec![i],
                });
            }
            exposures.push(e);
            units_by_exposure.entry(e).or_default().push(i as u32);
        }

        Ok(Self {
            frame,
            w,
            y,
            exposures,
            units_by_exposure,
        })
    }

    pub fn n(&self) -> usize {
        self.frame.nbr.n()
    }

    pub fn k(&self) -> usize {
        self.frame.nbr.k()
    }

    pub fn design(&self) -> &Design {
        &self.frame.design
    }

    pub fn neighborhoods(&self) -> &KNeighborhoods {
        &self.frame.nbr
    }

    pub fn assignment(&self) -> &Assignment {
        &self.w
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    /// The exposure unit `i` realized.
    pub fn exposure_of(&self, i: usize) -> Exposure {
        self.exposures[i]
    }

    /// Units that realized exposure `e`.
    pub fn units_with(&self, e: Exposure) -> &[u32] {
        self.units_by_exposure.get(&e).map_or(&[], Vec::as_slice)
    }

    /// Number of units that realized exposure `e`.
    pub fn observed_count(&self, e: Exposure) -> usize {
        self.units_with(e).len()
    }

    /// Marginal exposure probability; identical across units, so only the
    /// exposure is needed.
    pub fn marginal(&self, e: Exposure) -> f64 {
        design::marginal_probability(&self.frame.design, &self.frame.nbr, 0, e)
            .expect("exposure size checked by callers")
    }

    /// Joint probability that `i` realizes `e_i` and `j` realizes `e_j`.
    pub fn joint(&self, i: usize, e_i: Exposure, j: usize, e_j: Exposure) -> f64 {
        self.frame.joint(i, e_i, j, e_j)
    }

    pub(crate) fn zero_joint_counts(&self, e1: Exposure, e2: Exposure) -> Arc<ZeroJointCounts> {
        self.frame.zero_counts(e1, e2)
    }
}

/// Inverse-probability-weighted mean of the responses observed under
/// exposure `e`: `(1/N) sum_i I_i(e) Y_i / pi_i(e)`. Zero when no unit
/// realized `e`.
pub fn ht_mean(data: &ExperimentData, e: Exposure) -> f64 {
    let units = data.units_with(e);
    if units.is_empty() {
        return 0.0;
    }
    let pi = data.marginal(e);
    debug_assert!(pi > 0.0, "realized exposure must have positive probability");
    let sum: f64 = units.iter().map(|&i| data.responses()[i as usize]).sum();
    sum / pi / data.n() as f64
}

/// The two exposures contrasted by each simple-difference estimator.
pub(crate) fn a1_exposures(
    kind: EffectKind,
    k: usize,
) -> Result<(Exposure, Exposure), EstimatorError> {
    match kind {
        EffectKind::Total => Ok((Exposure::all_ones(true, k), Exposure::all_zeros(false, k))),
        EffectKind::Direct => Ok((Exposure::all_ones(true, k), Exposure::all_ones(false, k))),
        EffectKind::Indirect => Ok((Exposure::all_ones(false, k), Exposure::all_zeros(false, k))),
        EffectKind::NearestNeighbor(l) => {
            if l < 1 || l > k {
                return Err(EstimatorError::NeighborIndexOutOfRange { index: l, k });
            }
            Ok((
                Exposure::treated_prefix(false, l, k).expect("l <= k"),
                Exposure::treated_prefix(false, l - 1, k).expect("l-1 < k"),
            ))
        }
    }
}

/// The four exposures of the pooled contrast `c1 (e - e') + c2 (e* - e*')`.
pub(crate) fn a2_exposures(kind: EffectKind, k: usize) -> Result<[Exposure; 4], EstimatorError> {
    let ones = |own| Exposure::all_ones(own, k);
    let zeros = |own| Exposure::all_zeros(own, k);
    match kind {
        EffectKind::Direct => Ok([ones(true), ones(false), zeros(true), zeros(false)]),
        EffectKind::Indirect => Ok([ones(true), zeros(true), ones(false), zeros(false)]),
        EffectKind::NearestNeighbor(l) => {
            if l < 1 || l > k {
                return Err(EstimatorError::NeighborIndexOutOfRange { index: l, k });
            }
            let hi = |own| Exposure::treated_prefix(own, l, k).expect("l <= k");
            let lo = |own| Exposure::treated_prefix(own, l - 1, k).expect("l-1 < k");
            Ok([hi(true), lo(true), hi(false), lo(false)])
        }
        EffectKind::Total => unreachable!("total is routed to the simple-difference estimator"),
    }
}

/// Refuse estimation when a required exposure has zero probability for some
/// unit (e.g. a completely randomized design with too few treated units to
/// ever produce an all-treated closed neighborhood).
fn require_positivity(data: &ExperimentData, exposures: &[Exposure]) -> Result<(), EstimatorError> {
    for &e in exposures {
        if data.marginal(e) <= 0.0 {
            return Err(EstimatorError::PositivityViolation {
                exposure: e.to_string(),
                units: (0..data.n()).collect(),
            });
        }
    }
    Ok(())
}

/// Point estimate only, without the variance computation; used by the
/// enumeration oracle where the estimate is evaluated across the whole
/// assignment space.
pub(crate) fn point_estimate(
    data: &ExperimentData,
    kind: EffectKind,
    assumption: Assumption,
    weights: Weights,
) -> Result<f64, EstimatorError> {
    match assumption {
        Assumption::A1 => {
            let (e_hi, e_lo) = a1_exposures(kind, data.k())?;
            require_positivity(data, &[e_hi, e_lo])?;
            Ok(ht_mean(data, e_hi) - ht_mean(data, e_lo))
        }
        Assumption::A2 => {
            if kind == EffectKind::Total {
                return point_estimate(data, kind, Assumption::A1, weights);
            }
            let exposures = a2_exposures(kind, data.k())?;
            require_positivity(data, &exposures)?;
            let [e, e_p, e_s, e_sp] = exposures;
            Ok(weights.c1 * (ht_mean(data, e) - ht_mean(data, e_p))
                + weights.c2 * (ht_mean(data, e_s) - ht_mean(data, e_sp)))
        }
    }
}

/// Conservative variance estimate only, matching [`point_estimate`].
pub(crate) fn variance_estimate(
    data: &ExperimentData,
    kind: EffectKind,
    assumption: Assumption,
    weights: Weights,
) -> Result<f64, EstimatorError> {
    match assumption {
        Assumption::A1 => {
            let (e_hi, e_lo) = a1_exposures(kind, data.k())?;
            require_positivity(data, &[e_hi, e_lo])?;
            Ok(variance::var_difference_hat(data, e_hi, e_lo))
        }
        Assumption::A2 => {
            if kind == EffectKind::Total {
                return variance_estimate(data, kind, Assumption::A1, weights);
            }
            let exposures = a2_exposures(kind, data.k())?;
            require_positivity(data, &exposures)?;
            variance::var_halfsum_hat(data, exposures, weights)
        }
    }
}

/// Simple-difference estimator of `kind` with its conservative variance.
pub fn estimate_a1(
    data: &ExperimentData,
    kind: EffectKind,
) -> Result<EffectEstimate, EstimatorError> {
    let weights = Weights::default();
    let estimate = point_estimate(data, kind, Assumption::A1, weights)?;
    let variance = variance_estimate(data, kind, Assumption::A1, weights)?;
    Ok(EffectEstimate {
        kind,
        assumption: Assumption::A1,
        estimate,
        variance,
        se: variance.sqrt(),
    })
}

/// Pooled-contrast estimator of `kind` with its conservative variance.
///
/// `Total` has no pooled form distinct from the simple difference and is
/// routed to [`estimate_a1`].
pub fn estimate_a2(
    data: &ExperimentData,
    kind: EffectKind,
    weights: Weights,
) -> Result<EffectEstimate, EstimatorError> {
    if kind == EffectKind::Total {
        return estimate_a1(data, kind);
    }
    let estimate = point_estimate(data, kind, Assumption::A2, weights)?;
    let variance = variance_estimate(data, kind, Assumption::A2, weights)?;
    Ok(EffectEstimate {
        kind,
        assumption: Assumption::A2,
        estimate,
        variance,
        se: variance.sqrt(),
    })
}

/// Every estimator row in report order: total, then direct and indirect
/// under both assumptions, then each per-neighbor effect under both.
/// `2K + 5` rows for neighborhood size K.
pub fn estimate_all(
    data: &ExperimentData,
    weights: Weights,
) -> Result<Vec<EffectEstimate>, EstimatorError> {
    warn_low_counts(data);
    let mut rows = Vec::with_capacity(2 * data.k() + 5);
    rows.push(estimate_a1(data, EffectKind::Total)?);
    for kind in [EffectKind::Direct, EffectKind::Indirect] {
        rows.push(estimate_a1(data, kind)?);
        rows.push(estimate_a2(data, kind, weights)?);
    }
    for l in 1..=data.k() {
        rows.push(estimate_a1(data, EffectKind::NearestNeighbor(l))?);
        rows.push(estimate_a2(data, EffectKind::NearestNeighbor(l), weights)?);
    }
    Ok(rows)
}

/// Threshold below which an exposure count is considered too small for the
/// estimates that use it to be trustworthy.
pub const LOW_COUNT_THRESHOLD: usize = 30;

/// Estimator-relevant exposures (own bit crossed with each treated-prefix
/// pattern) observed fewer than `threshold` times, in report order.
pub fn low_count_exposures(data: &ExperimentData, threshold: usize) -> Vec<(Exposure, usize)> {
    let k = data.k();
    let mut out = Vec::new();
    for own in [true, false] {
        for len in 0..=k {
            let e = Exposure::treated_prefix(own, len, k).expect("len <= k");
            let count = data.observed_count(e);
            if count < threshold {
                out.push((e, count));
            }
        }
    }
    out
}

fn warn_low_counts(data: &ExperimentData) {
    for (e, count) in low_count_exposures(data, LOW_COUNT_THRESHOLD) {
        log::warn!(
            "exposure {e} observed {count} times (< {LOW_COUNT_THRESHOLD}); estimates using it may be unstable"
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_k_neighborhoods, DistanceMatrix};

    fn line_data(n: usize, k: usize, design: Design, bits: &[u8], y: Vec<f64>) -> ExperimentData {
        let d = DistanceMatrix::from_fn(n, |i, j| (i as f64 - j as f64).abs()).unwrap();
        let nbr = build_k_neighborhoods(&d, k).unwrap();
        ExperimentData::new(nbr, design, Assignment::from_bits(bits), y).unwrap()
    }

    #[test]
    fn ht_mean_hand_case() {
        // two units, mutual neighbors, both treated under Bernoulli with
        // p^2 = 1/2, responses 4 and 2: (1/2)(4/0.5 + 2/0.5) = 6
        let p = 0.5f64.sqrt();
        let design = Design::bernoulli(2, p).unwrap();
        let data = line_data(2, 1, design, &[1, 1], vec![4.0, 2.0]);
        let e = Exposure::all_ones(true, 1);
        assert_eq!(data.units_with(e).len(), 2);
        let got = ht_mean(&data, e);
        assert!((got - 6.0).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn ht_mean_empty_class_is_zero() {
        let design = Design::completely_randomized(4, 2).unwrap();
        let data = line_data(4, 1, design, &[1, 1, 0, 0], vec![1.0, 2.0, 3.0, 4.0]);
        // both treated units neighbor each other, so treated-with-control-
        // neighbor is never realized here
        let e = Exposure::new(true, &[false]);
        assert!(data.units_with(e).is_empty());
        assert_eq!(ht_mean(&data, e), 0.0);
    }

    #[test]
    fn ht_mean_is_linear_in_y() {
        let design = Design::completely_randomized(6, 3).unwrap();
        let y: Vec<f64> = (0..6).map(|i| (i as f64) * 0.7 - 1.0).collect();
        let data = line_data(6, 2, design, &[1, 0, 1, 0, 1, 0], y.clone());
        let (a, b) = (2.5, -0.75);
        let scaled: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let data_scaled = data
            .with_observation(data.assignment().clone(), scaled)
            .unwrap();
        let ones = vec![1.0; 6];
        let data_ones = data
            .with_observation(data.assignment().clone(), ones)
            .unwrap();
        for e in Exposure::enumerate(2) {
            let lhs = ht_mean(&data_scaled, e);
            let rhs = a * ht_mean(&data, e) + b * ht_mean(&data_ones, e);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn construction_rejects_wrong_treated_count() {
        let d = DistanceMatrix::from_fn(4, |i, j| (i as f64 - j as f64).abs()).unwrap();
        let nbr = build_k_neighborhoods(&d, 1).unwrap();
        let design = Design::completely_randomized(4, 2).unwrap();
        let err = ExperimentData::new(
            nbr,
            design,
            Assignment::from_bits(&[1, 1, 1, 0]),
            vec![0.0; 4],
        )
        .unwrap_err();
        assert!(matches!(err, EstimatorError::TreatedCountMismatch { .. }));
    }

    #[test]
    fn construction_rejects_non_finite_response() {
        let d = DistanceMatrix::from_fn(4, |i, j| (i as f64 - j as f64).abs()).unwrap();
        let nbr = build_k_neighborhoods(&d, 1).unwrap();
        let design = Design::completely_randomized(4, 2).unwrap();
        let err = ExperimentData::new(
            nbr,
            design,
            Assignment::from_bits(&[1, 1, 0, 0]),
            vec![0.0, f64::NAN, 0.0, 0.0],
        )
        .unwrap_err();
        assert!(matches!(err, EstimatorError::NonFiniteResponse { .. }));
    }

    #[test]
    fn positivity_refusal_under_scarce_treatment() {
        // N_t = 1 < K + 1 = 2: the all-treated closed neighborhood is
        // impossible, so total/direct/indirect must be refused
        let design = Design::completely_randomized(6, 1).unwrap();
        let data = line_data(6, 1, design, &[1, 0, 0, 0, 0, 0], vec![0.0; 6]);
        let err = estimate_a1(&data, EffectKind::Total).unwrap_err();
        assert!(matches!(err, EstimatorError::PositivityViolation { .. }));
    }

    #[test]
    fn nn_index_out_of_range() {
        let design = Design::completely_randomized(6, 3).unwrap();
        let data = line_data(6, 2, design, &[1, 0, 1, 0, 1, 0], vec![0.0; 6]);
        assert!(matches!(
            estimate_a1(&data, EffectKind::NearestNeighbor(0)),
            Err(EstimatorError::NeighborIndexOutOfRange { .. })
        ));
        assert!(matches!(
            estimate_a1(&data, EffectKind::NearestNeighbor(3)),
            Err(EstimatorError::NeighborIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn decomposition_identities_per_realization() {
        let design = Design::completely_randomized(8, 4).unwrap();
        let y: Vec<f64> = (0..8).map(|i| ((i * 37 % 11) as f64) - 3.0).collect();
        let data = line_data(8, 2, design, &[1, 0, 0, 1, 1, 0, 1, 0], y);
        let w = Weights::default();

        let tot = estimate_a1(&data, EffectKind::Total).unwrap().estimate;
        let dir = estimate_a1(&data, EffectKind::Direct).unwrap().estimate;
        let ind = estimate_a1(&data, EffectKind::Indirect).unwrap().estimate;
        assert!((tot - (dir + ind)).abs() < 1e-12);

        let nn_sum: f64 = (1..=2)
            .map(|l| {
                estimate_a1(&data, EffectKind::NearestNeighbor(l))
                    .unwrap()
                    .estimate
            })
            .sum();
        assert!((ind - nn_sum).abs() < 1e-12);

        let dir2 = estimate_a2(&data, EffectKind::Direct, w).unwrap().estimate;
        let ind2 = estimate_a2(&data, EffectKind::Indirect, w)
            .unwrap()
            .estimate;
        assert!((tot - (dir2 + ind2)).abs() < 1e-12);

        let nn2_sum: f64 = (1..=2)
            .map(|l| {
                estimate_a2(&data, EffectKind::NearestNeighbor(l), w)
                    .unwrap()
                    .estimate
            })
            .sum();
        assert!((ind2 - nn2_sum).abs() < 1e-12);
    }

    #[test]
    fn a2_weight_boundary_reduces_to_single_contrast() {
        let design = Design::completely_randomized(8, 4).unwrap();
        let y: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let data = line_data(8, 1, design, &[1, 0, 0, 1, 1, 0, 1, 0], y);
        let w = Weights::new(1.0, 0.0).unwrap();
        let ind = estimate_a2(&data, EffectKind::Indirect, w)
            .unwrap()
            .estimate;
        let expected = ht_mean(&data, Exposure::all_ones(true, 1))
            - ht_mean(&data, Exposure::all_zeros(true, 1));
        assert!((ind - expected).abs() < 1e-12);
    }

    #[test]
    fn estimate_all_row_set() {
        let design = Design::completely_randomized(8, 4).unwrap();
        let data = line_data(8, 2, design, &[1, 0, 0, 1, 1, 0, 1, 0], vec![1.0; 8]);
        let rows = estimate_all(&data, Weights::default()).unwrap();
        let labels: Vec<String> = rows.iter().map(|r| r.label()).collect();
        assert_eq!(
            labels,
            vec![
                "total",
                "direct_a1",
                "direct_a2",
                "indirect_a1",
                "indirect_a2",
                "nn1_a1",
                "nn1_a2",
                "nn2_a1",
                "nn2_a2"
            ]
        );
        for row in &rows {
            assert!((row.se * row.se - row.variance).abs() < 1e-12);
            assert!(row.variance >= 0.0);
        }
        // single-row calls agree with the batch
        let single = estimate_a1(&data, EffectKind::Indirect).unwrap();
        assert_eq!(single.estimate, rows[3].estimate);
        assert_eq!(single.variance, rows[3].variance);
    }

    #[test]
    fn low_count_report_flags_scarce_exposures() {
        let design = Design::completely_randomized(8, 4).unwrap();
        let data = line_data(8, 1, design, &[1, 0, 0, 1, 1, 0, 1, 0], vec![1.0; 8]);
        let flagged = low_count_exposures(&data, 30);
        // with 8 units every estimator-relevant exposure is scarce
        assert_eq!(flagged.len(), 4);
        let total: usize = flagged.iter().map(|&(_, c)| c).sum();
        assert_eq!(total, 8);
    }

    #[test]
    fn weights_validation() {
        assert!(Weights::new(0.25, 0.75).is_ok());
        assert!(Weights::new(0.6, 0.5).is_err());
        assert!(Weights::new(f64::NAN, 1.0).is_err());
    }
}
