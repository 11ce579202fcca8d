//! Exhaustive-enumeration ground truth for small instances.
//!
//! For designs whose assignment space fits under a guard, everything the
//! rest of the crate computes in closed form can be checked directly:
//! exposure probabilities, estimator means and variances, and the
//! conservative direction of the variance estimates. The verification
//! battery drives these checks over seeded random instances.

use std::collections::HashMap;
use std::fmt;

use itertools::{Either, Itertools};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::design::{self, Design, DesignError};
use crate::estimators::{self, Assumption, EffectKind, EstimatorError, ExperimentData, Weights};
use crate::model::{
    build_k_neighborhoods, classify_exposure, Assignment, DistanceMatrix, Exposure, KNeighborhoods,
    ModelError,
};

/// Errors from enumeration and verification.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("assignment space of size {size} exceeds the enumeration guard of {guard}")]
    SpaceTooLarge { size: u128, guard: u128 },
    #[error("potential-outcome table is for {table_n} units / k = {table_k}, instance has {n} / k = {k}")]
    TableMismatch {
        table_n: usize,
        table_k: usize,
        n: usize,
        k: usize,
    },
    #[error("exposure {0} has zero probability; inverse-probability moments are undefined")]
    ZeroProbabilityExposure(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Largest assignment space the oracle will enumerate.
pub const ENUMERATION_GUARD: u128 = 1_000_000;

/// Number of assignments the design can produce (`C(n, n_t)` for complete
/// randomization, `2^n` for Bernoulli), saturating at `u128::MAX`.
pub fn assignment_space_size(design: &Design) -> u128 {
    match *design {
        Design::CompletelyRandomized { n, n_treated } => binomial_u128(n, n_treated),
        Design::Bernoulli { n, .. } => {
            if n >= 127 {
                u128::MAX
            } else {
                1u128 << n
            }
        }
    }
}

fn binomial_u128(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 1..=k {
        c = match c.checked_mul((n - k + i) as u128) {
            Some(v) => v / i as u128,
            None => return u128::MAX,
        };
    }
    c
}

/// Every assignment the design can produce, with its probability.
/// Probabilities sum to 1; complete randomization yields all subsets of the
/// fixed treated size with equal probability, Bernoulli all bit vectors.
pub fn enumerate_assignments(
    design: Design,
) -> Result<impl Iterator<Item = (Assignment, f64)>, OracleError> {
    let size = assignment_space_size(&design);
    if size > ENUMERATION_GUARD {
        return Err(OracleError::SpaceTooLarge {
            size,
            guard: ENUMERATION_GUARD,
        });
    }
    Ok(match design {
        Design::CompletelyRandomized { n, n_treated } => {
            let prob = 1.0 / size as f64;
            Either::Left((0..n).combinations(n_treated).map(move |subset| {
                let mut w = vec![false; n];
                for i in subset {
                    w[i] = true;
                }
                (Assignment::new(w), prob)
            }))
        }
        Design::Bernoulli { n, p } => Either::Right((0..(1u64 << n)).map(move |bits| {
            let w: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            let treated = bits.count_ones() as i32;
            let prob = p.powi(treated) * (1.0 - p).powi(n as i32 - treated);
            (Assignment::new(w), prob)
        })),
    })
}

/// Exposure probability for one unit computed by summing assignment
/// probabilities over the enumerated space.
pub fn exact_exposure_probability(
    design: Design,
    nbr: &KNeighborhoods,
    i: usize,
    e: Exposure,
) -> Result<f64, OracleError> {
    let mut total = 0.0;
    for (w, p) in enumerate_assignments(design)? {
        if classify_exposure(nbr, &w, i)? == e {
            total += p;
        }
    }
    Ok(total)
}

/// Joint exposure probability for a unit pair, by enumeration.
pub fn exact_joint_probability(
    design: Design,
    nbr: &KNeighborhoods,
    i: usize,
    e_i: Exposure,
    j: usize,
    e_j: Exposure,
) -> Result<f64, OracleError> {
    let mut total = 0.0;
    for (w, p) in enumerate_assignments(design)? {
        if classify_exposure(nbr, &w, i)? == e_i && classify_exposure(nbr, &w, j)? == e_j {
            total += p;
        }
    }
    Ok(total)
}

/// Every marginal and pairwise-joint exposure probability of an instance,
/// accumulated in a single enumeration pass.
pub struct ExactDistributions {
    n: usize,
    stride: usize,
    marginals: Vec<f64>,
    joints: HashMap<(usize, usize), Vec<f64>>,
}

impl ExactDistributions {
    pub fn marginal(&self, i: usize, e: Exposure) -> f64 {
        self.marginals[i * self.stride + e.bit_index()]
    }

    pub fn joint(&self, i: usize, e_i: Exposure, j: usize, e_j: Exposure) -> f64 {
        assert_ne!(i, j);
        if i < j {
            self.joints[&(i, j)][e_i.bit_index() * self.stride + e_j.bit_index()]
        } else {
            self.joints[&(j, i)][e_j.bit_index() * self.stride + e_i.bit_index()]
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Build [`ExactDistributions`] for the instance.
pub fn exact_distributions(
    design: Design,
    nbr: &KNeighborhoods,
) -> Result<ExactDistributions, OracleError> {
    let n = nbr.n();
    let stride = 1 << (nbr.k() + 1);
    let mut marginals = vec![0.0; n * stride];
    let mut joints: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            joints.insert((i, j), vec![0.0; stride * stride]);
        }
    }
    for (w, p) in enumerate_assignments(design)? {
        let exposures: Vec<usize> = (0..n)
            .map(|i| classify_exposure(nbr, &w, i).map(|e| e.bit_index()))
            .collect::<Result<_, _>>()?;
        for i in 0..n {
            marginals[i * stride + exposures[i]] += p;
            for j in (i + 1)..n {
                joints.get_mut(&(i, j)).unwrap()[exposures[i] * stride + exposures[j]] += p;
            }
        }
    }
    Ok(ExactDistributions {
        n,
        stride,
        marginals,
        joints,
    })
}

/// Complete potential-outcome table: one response per unit per exposure.
/// Under the K-neighborhood interference assumption these `2^(K+1)` values
/// per unit are the whole outcome space.
#[derive(Debug, Clone)]
pub struct PotentialOutcomeTable {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl PotentialOutcomeTable {
    pub fn from_fn(n: usize, k: usize, mut outcome: impl FnMut(usize, Exposure) -> f64) -> Self {
        assert!(k <= 20, "potential-outcome table too large");
        let stride = 1usize << (k + 1);
        let mut values = vec![0.0; n * stride];
        for i in 0..n {
            for e in Exposure::enumerate(k) {
                values[i * stride + e.bit_index()] = outcome(i, e);
            }
        }
        Self { n, k, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn value(&self, i: usize, e: Exposure) -> f64 {
        debug_assert_eq!(e.k(), self.k);
        self.values[i * (1 << (self.k + 1)) + e.bit_index()]
    }

    /// Mean potential outcome across units for exposure `e`.
    pub fn mean_outcome(&self, e: Exposure) -> f64 {
        (0..self.n).map(|i| self.value(i, e)).sum::<f64>() / self.n as f64
    }

    /// Realized responses under an assignment.
    pub fn respond(&self, nbr: &KNeighborhoods, w: &Assignment) -> Result<Vec<f64>, OracleError> {
        self.check_instance(nbr)?;
        (0..self.n)
            .map(|i| Ok(self.value(i, classify_exposure(nbr, w, i)?)))
            .collect()
    }

    /// The named effect: a difference of mean potential outcomes.
    pub fn estimand(&self, kind: EffectKind) -> Result<f64, OracleError> {
        let (e_hi, e_lo) = estimators::a1_exposures(kind, self.k)?;
        Ok(self.mean_outcome(e_hi) - self.mean_outcome(e_lo))
    }

    /// The pooled contrast targeted by the A2 estimator of `kind`. Equals
    /// the named effect whenever average own-treatment contrasts do not
    /// depend on the neighborhood exposure.
    pub fn pooled_contrast(&self, kind: EffectKind, weights: Weights) -> Result<f64, OracleError> {
        if kind == EffectKind::Total {
            return self.estimand(kind);
        }
        let [e, e_p, e_s, e_sp] = estimators::a2_exposures(kind, self.k)?;
        Ok(
            weights.c1() * (self.mean_outcome(e) - self.mean_outcome(e_p))
                + weights.c2() * (self.mean_outcome(e_s) - self.mean_outcome(e_sp)),
        )
    }

    fn check_instance(&self, nbr: &KNeighborhoods) -> Result<(), OracleError> {
        if nbr.n() != self.n || nbr.k() != self.k {
            return Err(OracleError::TableMismatch {
                table_n: self.n,
                table_k: self.k,
                n: nbr.n(),
                k: nbr.k(),
            });
        }
        Ok(())
    }
}

/// Which estimator to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSpec {
    pub kind: EffectKind,
    pub assumption: Assumption,
    pub weights: Weights,
}

impl EstimatorSpec {
    pub fn a1(kind: EffectKind) -> Self {
        Self {
            kind,
            assumption: Assumption::A1,
            weights: Weights::default(),
        }
    }

    pub fn a2(kind: EffectKind) -> Self {
        Self {
            kind,
            assumption: Assumption::A2,
            weights: Weights::default(),
        }
    }

    /// The potential-outcome quantity this estimator is unbiased for.
    pub fn target(&self, pot: &PotentialOutcomeTable) -> Result<f64, OracleError> {
        match self.assumption {
            Assumption::A1 => pot.estimand(self.kind),
            Assumption::A2 => pot.pooled_contrast(self.kind, self.weights),
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.kind, self.assumption)
    }
}

/// The full estimator row set for neighborhood size `k`, in report order.
pub fn estimator_specs(k: usize) -> Vec<EstimatorSpec> {
    let mut specs = vec![EstimatorSpec::a1(EffectKind::Total)];
    for kind in [EffectKind::Direct, EffectKind::Indirect] {
        specs.push(EstimatorSpec::a1(kind));
        specs.push(EstimatorSpec::a2(kind));
    }
    for l in 1..=k {
        specs.push(EstimatorSpec::a1(EffectKind::NearestNeighbor(l)));
        specs.push(EstimatorSpec::a2(EffectKind::NearestNeighbor(l)));
    }
    specs
}

/// Exact moments and expected variance estimates of several estimators,
/// plus the worst per-assignment decomposition-identity violation, from a
/// single pass over the assignment space.
pub struct InstanceAnalysis {
    pub specs: Vec<EstimatorSpec>,
    pub exact_mean: Vec<f64>,
    pub exact_var: Vec<f64>,
    pub expected_var_estimate: Vec<f64>,
    pub max_decomposition_violation: f64,
}

/// Analyze `specs` over the full assignment space. `specs` must follow the
/// [`estimator_specs`] order for the decomposition check to be meaningful;
/// pass `check_decompositions = false` for ad-hoc spec lists.
pub fn analyze_instance(
    design: Design,
    nbr: &KNeighborhoods,
    pot: &PotentialOutcomeTable,
    specs: &[EstimatorSpec],
    check_decompositions: bool,
) -> Result<InstanceAnalysis, OracleError> {
    pot.check_instance(nbr)?;
    let mut rows: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut base: Option<ExperimentData> = None;
    let mut max_violation = 0.0f64;

    for (w, p) in enumerate_assignments(design)? {
        let y = pot.respond(nbr, &w)?;
        let data = match &base {
            Some(b) => b.with_observation(w, y)?,
            None => ExperimentData::new(nbr.clone(), design, w, y)?,
        };
        let points: Vec<f64> = specs
            .iter()
            .map(|s| estimators::point_estimate(&data, s.kind, s.assumption, s.weights))
            .collect::<Result<_, _>>()?;
        let var_ests: Vec<f64> = specs
            .iter()
            .map(|s| estimators::variance_estimate(&data, s.kind, s.assumption, s.weights))
            .collect::<Result<_, _>>()?;
        if check_decompositions {
            max_violation = max_violation.max(decomposition_violation(&data, specs, &points));
        }
        rows.push((p, points, var_ests));
        if base.is_none() {
            base = Some(data);
        }
    }

    let m = specs.len();
    let mut exact_mean = vec![0.0; m];
    let mut expected_var_estimate = vec![0.0; m];
    for (p, points, var_ests) in &rows {
        for s in 0..m {
            exact_mean[s] += p * points[s];
            expected_var_estimate[s] += p * var_ests[s];
        }
    }
    let mut exact_var = vec![0.0; m];
    for (p, points, _) in &rows {
        for s in 0..m {
            let d = points[s] - exact_mean[s];
            exact_var[s] += p * d * d;
        }
    }

    Ok(InstanceAnalysis {
        specs: specs.to_vec(),
        exact_mean,
        exact_var,
        expected_var_estimate,
        max_decomposition_violation: max_violation,
    })
}

/// Worst violation of the per-realization identities: total equals
/// direct + indirect and indirect equals the sum of per-neighbor effects,
/// under both estimator families (at default weights).
fn decomposition_violation(data: &ExperimentData, specs: &[EstimatorSpec], points: &[f64]) -> f64 {
    let find = |kind: EffectKind, assumption: Assumption| -> Option<f64> {
        specs
            .iter()
            .position(|s| s.kind == kind && s.assumption == assumption)
            .map(|idx| points[idx])
    };
    let k = data.k();
    let mut worst = 0.0f64;
    let total = match find(EffectKind::Total, Assumption::A1) {
        Some(v) => v,
        None => return 0.0,
    };
    for assumption in [Assumption::A1, Assumption::A2] {
        let dir = find(EffectKind::Direct, assumption);
        let ind = find(EffectKind::Indirect, assumption);
        if let (Some(dir), Some(ind)) = (dir, ind) {
            worst = worst.max((total - (dir + ind)).abs());
            let nn: Option<Vec<f64>> = (1..=k)
                .map(|l| find(EffectKind::NearestNeighbor(l), assumption))
                .collect();
            if let Some(nn) = nn {
                worst = worst.max((ind - nn.iter().sum::<f64>()).abs());
            }
        }
    }
    worst
}

/// Exact mean and variance of one estimator over the assignment space.
pub fn exact_estimator_moments(
    design: Design,
    nbr: &KNeighborhoods,
    pot: &PotentialOutcomeTable,
    spec: EstimatorSpec,
) -> Result<(f64, f64), OracleError> {
    let analysis = analyze_instance(design, nbr, pot, &[spec], false)?;
    Ok((analysis.exact_mean[0], analysis.exact_var[0]))
}

/// Conservativeness report for one estimator's variance estimate.
#[derive(Debug, Clone, Copy)]
pub struct ConservativenessReport {
    pub exact_var: f64,
    pub expected_var_estimate: f64,
    /// `expected_var_estimate - exact_var`; conservative estimators have
    /// nonnegative slack up to numerical tolerance.
    pub slack: f64,
}

/// Average the conservative variance estimate over all assignments and
/// compare with the exact estimator variance.
pub fn verify_conservative(
    design: Design,
    nbr: &KNeighborhoods,
    pot: &PotentialOutcomeTable,
    spec: EstimatorSpec,
) -> Result<ConservativenessReport, OracleError> {
    let analysis = analyze_instance(design, nbr, pot, &[spec], false)?;
    let exact_var = analysis.exact_var[0];
    let expected_var_estimate = analysis.expected_var_estimate[0];
    Ok(ConservativenessReport {
        exact_var,
        expected_var_estimate,
        slack: expected_var_estimate - exact_var,
    })
}

fn marginal_checked(design: Design, nbr: &KNeighborhoods, e: Exposure) -> Result<f64, OracleError> {
    let pi = design::marginal_probability(&design, nbr, 0, e)?;
    if pi <= 0.0 {
        return Err(OracleError::ZeroProbabilityExposure(e.to_string()));
    }
    Ok(pi)
}

/// Closed-form variance of one exposure mean evaluated from the true
/// potential outcomes: diagonal terms `pi (1 - pi) (y/pi)^2` plus cross
/// terms `(pi_ij - pi^2) (y_i/pi)(y_j/pi)` over all ordered pairs.
pub fn theoretical_ht_variance(
    design: Design,
    nbr: &KNeighborhoods,
    pot: &PotentialOutcomeTable,
    e: Exposure,
) -> Result<f64, OracleError> {
    pot.check_instance(nbr)?;
    let n = nbr.n();
    let pi = marginal_checked(design, nbr, e)?;
    let mut total = 0.0;
    for i in 0..n {
        let t = pot.value(i, e) / pi;
        total += pi * (1.0 - pi) * t * t;
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = design::joint_probability(&design, nbr, i, e, j, e)?;
            total += (pij - pi * pi) * (pot.value(i, e) / pi) * (pot.value(j, e) / pi);
        }
    }
    Ok(total / (n * n) as f64)
}

/// Closed-form covariance of two exposure means from the true potential
/// outcomes, including the always-negative diagonal term from units that
/// can realize only one of the two exposures.
pub fn theoretical_ht_covariance(
    design: Design,
    nbr: &KNeighborhoods,
    pot: &PotentialOutcomeTable,
    e1: Exposure,
    e2: Exposure,
) -> Result<f64, OracleError> {
    pot.check_instance(nbr)?;
    let n = nbr.n();
    let pi1 = marginal_checked(design, nbr, e1)?;
    let pi2 = marginal_checked(design, nbr, e2)?;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = design::joint_probability(&design, nbr, i, e1, j, e2)?;
            total += (pij - pi1 * pi2) * (pot.value(i, e1) / pi1) * (pot.value(j, e2) / pi2);
        }
    }
    for i in 0..n {
        total -= pot.value(i, e1) * pot.value(i, e2);
    }
    Ok(total / (n * n) as f64)
}

/// Closed-form variance of the difference of two exposure means.
pub fn theoretical_difference_variance(
    design: Design,
    nbr: &KNeighborhoods,
    pot: &PotentialOutcomeTable,
    e1: Exposure,
    e2: Exposure,
) -> Result<f64, OracleError> {
    Ok(theoretical_ht_variance(design, nbr, pot, e1)?
        + theoretical_ht_variance(design, nbr, pot, e2)?
        - 2.0 * theoretical_ht_covariance(design, nbr, pot, e1, e2)?)
}

/// Closed-form variance of the pooled contrast
/// `c1 (m(e) - m(e')) + c2 (m(e*) - m(e*'))` over four exposures.
pub fn theoretical_halfsum_variance(
    design: Design,
    nbr: &KNeighborhoods,
    pot: &PotentialOutcomeTable,
    exposures: [Exposure; 4],
    weights: Weights,
) -> Result<f64, OracleError> {
    let coeff = [weights.c1(), -weights.c1(), weights.c2(), -weights.c2()];
    let mut total = 0.0;
    for m in 0..4 {
        total += coeff[m] * coeff[m] * theoretical_ht_variance(design, nbr, pot, exposures[m])?;
    }
    for m in 0..4 {
        for l in (m + 1)..4 {
            total += 2.0
                * coeff[m]
                * coeff[l]
                * theoretical_ht_covariance(design, nbr, pot, exposures[m], exposures[l])?;
        }
    }
    Ok(total)
}

/// Closed-form variance of the estimator described by `spec`.
pub fn theoretical_estimator_variance(
    design: Design,
    nbr: &KNeighborhoods,
    pot: &PotentialOutcomeTable,
    spec: EstimatorSpec,
) -> Result<f64, OracleError> {
    match spec.assumption {
        Assumption::A1 => {
            let (e_hi, e_lo) = estimators::a1_exposures(spec.kind, nbr.k())?;
            theoretical_difference_variance(design, nbr, pot, e_hi, e_lo)
        }
        Assumption::A2 => {
            if spec.kind == EffectKind::Total {
                let (e_hi, e_lo) = estimators::a1_exposures(spec.kind, nbr.k())?;
                return theoretical_difference_variance(design, nbr, pot, e_hi, e_lo);
            }
            let exposures = estimators::a2_exposures(spec.kind, nbr.k())?;
            theoretical_halfsum_variance(design, nbr, pot, exposures, spec.weights)
        }
    }
}

// ---------------------------------------------------------------------------
// seeded random instances

/// Random asymmetric distance matrix with entries uniform on (0, 1).
pub fn random_distance_matrix(n: usize, rng: &mut impl Rng) -> DistanceMatrix {
    DistanceMatrix::from_fn(n, |_, _| rng.random::<f64>()).expect("uniform draws are finite")
}

/// Potential-outcome table with independent standard-normal entries.
pub fn random_potential_outcomes(n: usize, k: usize, rng: &mut impl Rng) -> PotentialOutcomeTable {
    PotentialOutcomeTable::from_fn(n, k, |_, _| rng.sample(StandardNormal))
}

/// Potential-outcome table in which each unit's own-treatment contrast is
/// constant across neighborhood patterns, so pooled contrasts coincide with
/// the named effects.
pub fn additive_potential_outcomes(
    n: usize,
    k: usize,
    rng: &mut impl Rng,
) -> PotentialOutcomeTable {
    let stride = 1usize << k;
    let mut pattern_terms = vec![0.0f64; n * stride];
    for t in pattern_terms.iter_mut() {
        *t = rng.sample(StandardNormal);
    }
    let own_effects: Vec<f64> = (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    PotentialOutcomeTable::from_fn(n, k, |i, e| {
        let mut pattern = 0usize;
        for p in 0..k {
            if e.neighbor(p) {
                pattern |= 1 << p;
            }
        }
        pattern_terms[i * stride + pattern] + if e.own() { own_effects[i] } else { 0.0 }
    })
}

// ---------------------------------------------------------------------------
// verification battery

/// Sizes and seeds for the verification battery.
#[derive(Debug, Clone)]
pub struct BatteryConfig {
    pub seed: u64,
    /// Unit counts for the probability checks.
    pub sizes: Vec<usize>,
    /// Neighborhood sizes cycled through the probability checks.
    pub neighborhood_sizes: Vec<usize>,
    /// Total probability-check instances across both designs.
    pub probability_instances: usize,
    /// Random potential-outcome tables for the moment checks.
    pub moment_tables: usize,
    /// Unit count for the moment checks.
    pub moment_n: usize,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            sizes: vec![6, 8, 10, 12],
            neighborhood_sizes: vec![1, 2, 3],
            probability_instances: 50,
            moment_tables: 20,
            moment_n: 8,
        }
    }
}

/// One named check with its worst observed error.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Results of the full battery.
#[derive(Debug, Clone)]
pub struct BatteryReport {
    pub checks: Vec<CheckOutcome>,
}

impl BatteryReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for BatteryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for check in &self.checks {
            writeln!(
                f,
                "{} {} — {}",
                if check.passed { "PASS" } else { "FAIL" },
                check.name,
                check.detail
            )?;
        }
        Ok(())
    }
}

/// Worst absolute deviations between closed-form and enumerated exposure
/// probabilities over every unit, pair, and exposure combination.
pub struct ProbabilityCheck {
    pub max_marginal_error: f64,
    pub max_joint_error: f64,
    pub max_sum_error: f64,
    pub cells: usize,
}

/// Compare closed-form marginals and joints against enumeration across all
/// cells of one instance.
pub fn check_probabilities(
    design: Design,
    nbr: &KNeighborhoods,
) -> Result<ProbabilityCheck, OracleError> {
    let exact = exact_distributions(design, nbr)?;
    let n = nbr.n();
    let k = nbr.k();
    let mut max_marginal_error = 0.0f64;
    let mut max_joint_error = 0.0f64;
    let mut max_sum_error = 0.0f64;
    let mut cells = 0usize;

    for i in 0..n {
        let mut sum = 0.0;
        for e in Exposure::enumerate(k) {
            let closed = design::marginal_probability(&design, nbr, i, e)?;
            sum += closed;
            max_marginal_error = max_marginal_error.max((closed - exact.marginal(i, e)).abs());
            cells += 1;
        }
        max_sum_error = max_sum_error.max((sum - 1.0).abs());
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for e_i in Exposure::enumerate(k) {
                for e_j in Exposure::enumerate(k) {
                    let closed = design::joint_probability(&design, nbr, i, e_i, j, e_j)?;
                    max_joint_error =
                        max_joint_error.max((closed - exact.joint(i, e_i, j, e_j)).abs());
                    cells += 1;
                }
            }
        }
    }

    Ok(ProbabilityCheck {
        max_marginal_error,
        max_joint_error,
        max_sum_error,
        cells,
    })
}

/// Build the battery's deterministic instance list and run every check.
pub fn run_battery(cfg: &BatteryConfig) -> Result<BatteryReport, OracleError> {
    // fail fast if any configured size could exceed the enumeration guard
    for &n in cfg.sizes.iter().chain([&cfg.moment_n]) {
        let bernoulli_space = if n >= 127 { u128::MAX } else { 1u128 << n };
        let worst = binomial_u128(n, n / 2).max(bernoulli_space);
        if worst > ENUMERATION_GUARD {
            return Err(OracleError::SpaceTooLarge {
                size: worst,
                guard: ENUMERATION_GUARD,
            });
        }
    }

    let mut checks = Vec::new();

    // 1. closed-form probabilities vs enumeration
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut max_marginal = 0.0f64;
    let mut max_joint = 0.0f64;
    let mut max_sum = 0.0f64;
    let mut cells = 0usize;
    for idx in 0..cfg.probability_instances {
        let n = cfg.sizes[idx % cfg.sizes.len()];
        let k = cfg.neighborhood_sizes[idx % cfg.neighborhood_sizes.len()].min(n - 1);
        let d = random_distance_matrix(n, &mut rng);
        let nbr = build_k_neighborhoods(&d, k)?;
        let design = if idx % 2 == 0 {
            let n_treated = 1 + rng.random_range(0..n - 1);
            Design::completely_randomized(n, n_treated)?
        } else {
            Design::bernoulli(n, [0.3, 0.5, 0.7][idx % 3])?
        };
        let result = check_probabilities(design, &nbr)?;
        max_marginal = max_marginal.max(result.max_marginal_error);
        max_joint = max_joint.max(result.max_joint_error);
        max_sum = max_sum.max(result.max_sum_error);
        cells += result.cells;
    }
    let tol = 1e-12;
    checks.push(CheckOutcome {
        name: "probability-closed-forms".into(),
        passed: max_marginal <= tol && max_joint <= tol && max_sum <= tol,
        detail: format!(
            "{} instances, {} cells, max marginal err {:.2e}, max joint err {:.2e}, max sum err {:.2e}",
            cfg.probability_instances, cells, max_marginal, max_joint, max_sum
        ),
    });

    // 2-5. moment checks over random potential-outcome tables
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut max_bias = 0.0f64;
    let mut max_variance_gap = 0.0f64;
    let mut min_slack = f64::INFINITY;
    let mut max_decomposition = 0.0f64;
    let mut max_additive_a2_bias = 0.0f64;
    for t in 0..cfg.moment_tables {
        let n = cfg.moment_n;
        let k = 1 + t % 2;
        let d = random_distance_matrix(n, &mut rng);
        let nbr = build_k_neighborhoods(&d, k)?;
        let additive = t % 2 == 1;
        let pot = if additive {
            additive_potential_outcomes(n, k, &mut rng)
        } else {
            random_potential_outcomes(n, k, &mut rng)
        };
        let specs = estimator_specs(k);
        for design in [
            Design::completely_randomized(n, n / 2)?,
            Design::bernoulli(n, 0.5)?,
        ] {
            let analysis = analyze_instance(design, &nbr, &pot, &specs, true)?;
            max_decomposition = max_decomposition.max(analysis.max_decomposition_violation);
            for (s, spec) in specs.iter().enumerate() {
                let target = spec.target(&pot)?;
                max_bias = max_bias.max((analysis.exact_mean[s] - target).abs());
                if additive && spec.assumption == Assumption::A2 {
                    let named = pot.estimand(spec.kind)?;
                    max_additive_a2_bias =
                        max_additive_a2_bias.max((analysis.exact_mean[s] - named).abs());
                }
                let theoretical = theoretical_estimator_variance(design, &nbr, &pot, *spec)?;
                max_variance_gap =
                    max_variance_gap.max((theoretical - analysis.exact_var[s]).abs());
                min_slack =
                    min_slack.min(analysis.expected_var_estimate[s] - analysis.exact_var[s]);
            }
        }
    }
    checks.push(CheckOutcome {
        name: "estimator-unbiasedness".into(),
        passed: max_bias <= 1e-10,
        detail: format!(
            "{} tables, both designs, max |E - target| = {:.2e}",
            cfg.moment_tables, max_bias
        ),
    });
    checks.push(CheckOutcome {
        name: "pooled-unbiasedness-under-constant-contrasts".into(),
        passed: max_additive_a2_bias <= 1e-10,
        detail: format!("max |E - named effect| = {max_additive_a2_bias:.2e}"),
    });
    checks.push(CheckOutcome {
        name: "closed-form-variance-identities".into(),
        passed: max_variance_gap <= 1e-10,
        detail: format!("max |theory - enumeration| = {max_variance_gap:.2e}"),
    });
    checks.push(CheckOutcome {
        name: "variance-estimate-conservativeness".into(),
        passed: min_slack >= -1e-10,
        detail: format!("min E[estimate] - Var = {min_slack:.2e}"),
    });
    checks.push(CheckOutcome {
        name: "decomposition-identities".into(),
        passed: max_decomposition <= 1e-12,
        detail: format!("max per-realization violation = {max_decomposition:.2e}"),
    });

    Ok(BatteryReport { checks })
}
