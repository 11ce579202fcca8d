//! Synthetic populations and the replicated simulation harness.
//!
//! Populations are drawn with three standard-normal covariates per unit;
//! interaction distance is the squared Euclidean distance between covariate
//! rows. Responses are additive: baseline (sum of covariates) plus one
//! effect per treated neighbor plus an own-treatment effect, so every named
//! effect has a known truth and the no-weak-interaction condition holds.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::design::{Design, DesignError};
use crate::estimators::{
    estimate_all, Assumption, EffectKind, EstimatorError, ExperimentData, Weights,
};
use crate::model::{build_k_neighborhoods, Assignment, DistanceMatrix, ModelError};

/// Errors from simulation configuration and execution.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("interference model id {0} out of range 1..=9")]
    UnknownPreset(u8),
    #[error("interference model needs at least one neighbor effect")]
    NoNeighborEffects,
    #[error("effect {value} at position {index} must be finite")]
    NonFiniteEffect { index: usize, value: f64 },
    #[error("completely randomized half/half split needs an even unit count, got {0}")]
    OddPopulation(usize),
    #[error("model has {model_k} neighbor effects but neighborhoods have k = {k}")]
    EffectCountMismatch { model_k: usize, k: usize },
    #[error("covariates cover {got} units, expected {expected}")]
    CovariateLength { got: usize, expected: usize },
    #[error("need at least one replication")]
    NoReplications,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Additive interference model: one effect per neighbor position plus an
/// own-treatment effect.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceModel {
    neighbor_effects: Vec<f64>,
    direct_effect: f64,
}

impl InterferenceModel {
    pub fn new(neighbor_effects: Vec<f64>, direct_effect: f64) -> Result<Self, SimError> {
        if neighbor_effects.is_empty() {
            return Err(SimError::NoNeighborEffects);
        }
        for (index, &value) in neighbor_effects.iter().chain([&direct_effect]).enumerate() {
            if !value.is_finite() {
                return Err(SimError::NonFiniteEffect { index, value });
            }
        }
        Ok(Self {
            neighbor_effects,
            direct_effect,
        })
    }

    /// The nine standard three-neighbor models: no/weak/moderate
    /// interference crossed with no/weak/strong direct effects.
    pub fn preset(id: u8) -> Result<Self, SimError> {
        let neighbor_effects = match id {
            1..=3 => vec![0.0, 0.0, 0.0],
            4..=6 => vec![2.0, 1.0, 0.5],
            7..=9 => vec![3.0, 2.0, 1.0],
            _ => return Err(SimError::UnknownPreset(id)),
        };
        let direct_effect = match (id - 1) % 3 {
            0 => 0.0,
            1 => 1.0,
            _ => 4.0,
        };
        Self::new(neighbor_effects, direct_effect)
    }

    /// Neighborhood size the model is defined for.
    pub fn k(&self) -> usize {
        self.neighbor_effects.len()
    }

    pub fn neighbor_effects(&self) -> &[f64] {
        &self.neighbor_effects
    }

    pub fn direct_effect(&self) -> f64 {
        self.direct_effect
    }

    pub fn truth(&self) -> TruthTable {
        let indirect: f64 = self.neighbor_effects.iter().sum();
        TruthTable {
            total: self.direct_effect + indirect,
            direct: self.direct_effect,
            indirect,
            per_neighbor: self.neighbor_effects.clone(),
        }
    }
}

/// True values of every estimand under an additive model.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub total: f64,
    pub direct: f64,
    pub indirect: f64,
    pub per_neighbor: Vec<f64>,
}

impl TruthTable {
    pub fn of(&self, kind: EffectKind) -> f64 {
        match kind {
            EffectKind::Total => self.total,
            EffectKind::Direct => self.direct,
            EffectKind::Indirect => self.indirect,
            EffectKind::NearestNeighbor(l) => self.per_neighbor[l - 1],
        }
    }
}

/// Randomization scheme used by the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    /// Complete randomization with half the units treated.
    CrdHalf,
    /// Independent fair-coin assignment.
    BernoulliHalf,
}

/// Simulation configuration.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub model: InterferenceModel,
    pub design: DesignKind,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    /// Redraw covariates (and hence neighborhoods) every replication
    /// instead of holding one population fixed. Off by default: estimands
    /// are defined per population, so the default keeps the population
    /// fixed and redraws only assignments.
    pub redraw_population: bool,
}

/// One estimator's aggregate over the replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub kind: EffectKind,
    pub assumption: Assumption,
    pub truth: f64,
    /// Mean of the point estimates.
    pub emp_ev: f64,
    /// Sample variance of the point estimates (n-1 denominator).
    pub emp_var: f64,
    pub emp_sd: f64,
    /// Mean of the conservative variance estimates.
    pub mean_var_est: f64,
}

impl SimRow {
    pub fn label(&self) -> String {
        match self.kind {
            EffectKind::Total => "total".to_string(),
            kind => format!("{kind}_{}", self.assumption),
        }
    }
}

/// Aggregated simulation output in report row order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub rows: Vec<SimRow>,
}

/// Draw `n` units with three standard-normal covariates and the squared
/// Euclidean distances between them. Deterministic per seed.
pub fn generate_population(
    n: usize,
    seed: u64,
) -> Result<(Vec<[f64; 3]>, DistanceMatrix), SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_population(n, &mut rng)
}

fn draw_population(
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<[f64; 3]>, DistanceMatrix), SimError> {
    let covariates: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ]
        })
        .collect();
    let d = DistanceMatrix::from_fn(n, |i, j| {
        covariates[i]
            .iter()
            .zip(&covariates[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    })?;
    Ok((covariates, d))
}

/// Additive responses: baseline sum of covariates, plus one effect per
/// treated neighbor (by position), plus the own-treatment effect.
pub fn respond(
    model: &InterferenceModel,
    covariates: &[[f64; 3]],
    nbr: &crate::model::KNeighborhoods,
    w: &Assignment,
) -> Result<Vec<f64>, SimError> {
    if model.k() != nbr.k() {
        return Err(SimError::EffectCountMismatch {
            model_k: model.k(),
            k: nbr.k(),
        });
    }
    if covariates.len() != nbr.n() {
        return Err(SimError::CovariateLength {
            got: covariates.len(),
            expected: nbr.n(),
        });
    }
    if w.len() != nbr.n() {
        return Err(ModelError::AssignmentLength {
            got: w.len(),
            expected: nbr.n(),
        }
        .into());
    }
    let mut y = Vec::with_capacity(nbr.n());
    for (i, cov) in covariates.iter().enumerate() {
        let mut value: f64 = cov.iter().sum();
        for (pos, &j) in nbr.neighbors_of(i).iter().enumerate() {
            if w.treated(j) {
                value += model.neighbor_effects[pos];
            }
        }
        if w.treated(i) {
            value += model.direct_effect;
        }
        y.push(value);
    }
    Ok(y)
}

fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // stream 0 belongs to the population draw
    rng.set_stream(rep as u64 + 1);
    rng
}

fn draw_assignment(design: &Design, rng: &mut ChaCha8Rng) -> Assignment {
    match *design {
        Design::CompletelyRandomized { n, n_treated } => {
            let chosen = rand::seq::index::sample(rng, n, n_treated);
            let mut w = vec![false; n];
            for i in chosen {
                w[i] = true;
            }
            Assignment::new(w)
        }
        Design::Bernoulli { n, p } => Assignment::new((0..n).map(|_| rng.random_bool(p)).collect()),
    }
}

/// Run the replicated experiment and aggregate per-estimator summaries.
///
/// Replications run in parallel; each derives its own random stream from
/// `(seed, replication index)`, so results do not depend on thread
/// scheduling.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimSummary, SimError> {
    if cfg.replications == 0 {
        return Err(SimError::NoReplications);
    }
    let design = match cfg.design {
        DesignKind::CrdHalf => {
            if !cfg.n.is_multiple_of(2) {
                return Err(SimError::OddPopulation(cfg.n));
            }
            Design::completely_randomized(cfg.n, cfg.n / 2)?
        }
        DesignKind::BernoulliHalf => Design::bernoulli(cfg.n, 0.5)?,
    };
    let weights = Weights::default();

    let per_rep: Vec<Vec<(f64, f64)>> = if cfg.redraw_population {
        (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let mut rng = replication_rng(cfg.seed, rep);
                let (covariates, d) = draw_population(cfg.n, &mut rng)?;
                let nbr = build_k_neighborhoods(&d, cfg.model.k())?;
                let w = draw_assignment(&design, &mut rng);
                let y = respond(&cfg.model, &covariates, &nbr, &w)?;
                let data = ExperimentData::new(nbr, design, w, y)?;
                let rows = estimate_all(&data, weights)?;
                Ok(rows.iter().map(|r| (r.estimate, r.variance)).collect())
            })
            .collect::<Result<_, SimError>>()?
    } else {
        let (covariates, d) = generate_population(cfg.n, cfg.seed)?;
        let nbr = build_k_neighborhoods(&d, cfg.model.k())?;
        let base = {
            let mut rng = replication_rng(cfg.seed, 0);
            let w = draw_assignment(&design, &mut rng);
            let y = respond(&cfg.model, &covariates, &nbr, &w)?;
            ExperimentData::new(nbr, design, w, y)?
        };
        // warm the shared probability tables before the parallel phase
        let _ = estimate_all(&base, weights)?;
        (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let mut rng = replication_rng(cfg.seed, rep);
                let w = draw_assignment(&design, &mut rng);
                let y = respond(&cfg.model, &covariates, base.neighborhoods(), &w)?;
                let data = base.with_observation(w, y)?;
                let rows = estimate_all(&data, weights)?;
                Ok(rows.iter().map(|r| (r.estimate, r.variance)).collect())
            })
            .collect::<Result<_, SimError>>()?
    };

    let truth = cfg.model.truth();
    let kinds = row_kinds(cfg.model.k());
    let reps = cfg.replications as f64;
    let mut rows = Vec::with_capacity(kinds.len());
    for (idx, (kind, assumption)) in kinds.into_iter().enumerate() {
        let estimates: Vec<f64> = per_rep.iter().map(|r| r[idx].0).collect();
        let mean = estimates.iter().sum::<f64>() / reps;
        let emp_var = if cfg.replications > 1 {
            estimates
                .iter()
                .map(|x| (x - mean) * (x - mean))
                .sum::<f64>()
                / (reps - 1.0)
        } else {
            0.0
        };
        let mean_var_est = per_rep.iter().map(|r| r[idx].1).sum::<f64>() / reps;
        rows.push(SimRow {
            kind,
            assumption,
            truth: truth.of(kind),
            emp_ev: mean,
            emp_var,
            emp_sd: emp_var.sqrt(),
            mean_var_est,
        });
    }

    Ok(SimSummary {
        n: cfg.n,
        replications: cfg.replications,
        seed: cfg.seed,
        rows,
    })
}

/// The `(kind, assumption)` row order produced by `estimate_all`.
fn row_kinds(k: usize) -> Vec<(EffectKind, Assumption)> {
    let mut kinds = vec![(EffectKind::Total, Assumption::A1)];
    for kind in [EffectKind::Direct, EffectKind::Indirect] {
        kinds.push((kind, Assumption::A1));
        kinds.push((kind, Assumption::A2));
    }
    for l in 1..=k {
        kinds.push((EffectKind::NearestNeighbor(l), Assumption::A1));
        kinds.push((EffectKind::NearestNeighbor(l), Assumption::A2));
    }
    kinds
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_the_standard_table() {
        let expected: [(f64, f64, f64, f64); 9] = [
            (0.0, 0.0, 0.0, 0.0),
            (0.0, 0.0, 0.0, 1.0),
            (0.0, 0.0, 0.0, 4.0),
            (2.0, 1.0, 0.5, 0.0),
            (2.0, 1.0, 0.5, 1.0),
            (2.0, 1.0, 0.5, 4.0),
            (3.0, 2.0, 1.0, 0.0),
            (3.0, 2.0, 1.0, 1.0),
            (3.0, 2.0, 1.0, 4.0),
        ];
        for (id, (d1, d2, d3, dt)) in expected.iter().enumerate() {
            let model = InterferenceModel::preset(id as u8 + 1).unwrap();
            assert_eq!(model.neighbor_effects(), &[*d1, *d2, *d3]);
            assert_eq!(model.direct_effect(), *dt);
            // closer neighbors give (weakly) stronger indirect effects
            assert!(d1.abs() >= d2.abs() && d2.abs() >= d3.abs());
        }
        assert!(matches!(
            InterferenceModel::preset(0),
            Err(SimError::UnknownPreset(0))
        ));
        assert!(matches!(
            InterferenceModel::preset(10),
            Err(SimError::UnknownPreset(10))
        ));
    }

    #[test]
    fn truth_table_identities() {
        let model = InterferenceModel::preset(9).unwrap();
        let truth = model.truth();
        assert_eq!(truth.indirect, 6.0);
        assert_eq!(truth.direct, 4.0);
        assert_eq!(truth.total, 10.0);
        assert_eq!(truth.per_neighbor.iter().sum::<f64>(), truth.indirect);
        assert_eq!(truth.of(EffectKind::NearestNeighbor(2)), 2.0);
    }

    #[test]
    fn population_is_symmetric_and_reproducible() {
        let (cov_a, d_a) = generate_population(12, 99).unwrap();
        let (cov_b, d_b) = generate_population(12, 99).unwrap();
        assert_eq!(cov_a, cov_b);
        assert_eq!(d_a, d_b);
        for i in 0..12 {
            assert_eq!(d_a.get(i, i), 0.0);
            for j in 0..12 {
                assert_eq!(d_a.get(i, j), d_a.get(j, i));
                assert!(d_a.get(i, j) >= 0.0);
            }
        }
        let (_, d_c) = generate_population(12, 100).unwrap();
        assert_ne!(d_a, d_c);
    }

    #[test]
    fn respond_matches_the_additive_form() {
        let (covariates, d) = generate_population(10, 5).unwrap();
        let nbr = build_k_neighborhoods(&d, 3).unwrap();
        let baseline: Vec<f64> = covariates.iter().map(|x| x.iter().sum()).collect();

        // no-interference model: response equals baseline whatever w is
        let null = InterferenceModel::preset(1).unwrap();
        let w = Assignment::from_bits(&[1, 0, 1, 1, 0, 0, 1, 0, 1, 0]);
        let y = respond(&null, &covariates, &nbr, &w).unwrap();
        for (got, want) in y.iter().zip(&baseline) {
            assert!((got - want).abs() < 1e-12);
        }

        // all-control gives the baseline under any model
        let model5 = InterferenceModel::preset(5).unwrap();
        let all_control = Assignment::new(vec![false; 10]);
        let y = respond(&model5, &covariates, &nbr, &all_control).unwrap();
        for (got, want) in y.iter().zip(&baseline) {
            assert!((got - want).abs() < 1e-12);
        }

        // a fully treated unit gains 2 + 1 + 0.5 + 1 over baseline
        let all_treated = Assignment::new(vec![true; 10]);
        let y = respond(&model5, &covariates, &nbr, &all_treated).unwrap();
        for (got, want) in y.iter().zip(&baseline) {
            assert!((got - (want + 4.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn simulation_is_deterministic_per_seed() {
        let cfg = SimConfig {
            model: InterferenceModel::preset(5).unwrap(),
            design: DesignKind::CrdHalf,
            n: 16,
            replications: 20,
            seed: 42,
            redraw_population: false,
        };
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 11);
        for row in &a.rows {
            assert!((row.emp_sd * row.emp_sd - row.emp_var).abs() < 1e-12);
            assert!(row.mean_var_est >= 0.0);
        }
    }

    #[test]
    fn simulation_row_order_matches_report_layout() {
        let cfg = SimConfig {
            model: InterferenceModel::new(vec![1.0, 0.5], 0.25).unwrap(),
            design: DesignKind::BernoulliHalf,
            n: 12,
            replications: 8,
            seed: 3,
            redraw_population: false,
        };
        let summary = run_simulation(&cfg).unwrap();
        let labels: Vec<String> = summary.rows.iter().map(|r| r.label()).collect();
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
        assert_eq!(summary.rows[0].truth, 1.75);
    }

    #[test]
    fn redraw_population_changes_results_but_stays_deterministic() {
        let base = SimConfig {
            model: InterferenceModel::preset(4).unwrap(),
            design: DesignKind::CrdHalf,
            n: 16,
            replications: 10,
            seed: 7,
            redraw_population: false,
        };
        let fixed = run_simulation(&base).unwrap();
        let redraw_cfg = SimConfig {
            redraw_population: true,
            ..base
        };
        let redraw_a = run_simulation(&redraw_cfg).unwrap();
        let redraw_b = run_simulation(&redraw_cfg).unwrap();
        assert_eq!(redraw_a, redraw_b);
        assert_ne!(fixed.rows, redraw_a.rows);
    }

    #[test]
    fn odd_population_rejected_for_half_split() {
        let cfg = SimConfig {
            model: InterferenceModel::preset(1).unwrap(),
            design: DesignKind::CrdHalf,
            n: 15,
            replications: 4,
            seed: 1,
            redraw_population: false,
        };
        assert!(matches!(
            run_simulation(&cfg),
            Err(SimError::OddPopulation(15))
        ));
    }
}
