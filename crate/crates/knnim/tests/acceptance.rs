//! Acceptance suite: one test per numbered criterion, each printing a
//! single pass/fail line (run with `--nocapture` to see them).
//!
//! Criteria 1-5 verify the closed-form machinery against exhaustive
//! enumeration on seeded random instances; criteria 6-8 reproduce the
//! replicated simulation at full scale within Monte-Carlo tolerances.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use knnim::design::Design;
use knnim::estimators::{Assumption, EffectKind};
use knnim::model::{build_k_neighborhoods, KNeighborhoods};
use knnim::oracle::{
    additive_potential_outcomes, analyze_instance, check_probabilities, estimator_specs,
    random_distance_matrix, random_potential_outcomes, theoretical_estimator_variance,
    InstanceAnalysis, PotentialOutcomeTable,
};
use knnim::sim::{run_simulation, DesignKind, InterferenceModel, SimConfig};

const SIM_SEED: u64 = 20240925;

fn report(criterion: u32, name: &str, passed: bool, detail: &str) {
    println!(
        "criterion {criterion} ({name}): {} — {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} ({name}) failed: {detail}");
}

#[test]
fn criterion_1_probability_closed_forms_match_enumeration() {
    let start = Instant::now();
    let sizes = [6usize, 8, 10, 12];
    let ks = [1usize, 2, 3];
    let ps = [0.3, 0.5, 0.7];
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_marginal = 0.0f64;
    let mut max_joint = 0.0f64;
    let mut cells = 0usize;

    for idx in 0..50 {
        let n = sizes[idx % sizes.len()];
        let k = ks[idx % ks.len()];
        let d = random_distance_matrix(n, &mut rng);
        let nbr = build_k_neighborhoods(&d, k).unwrap();
        let design = if idx % 2 == 0 {
            let n_treated = 1 + rng.random_range(0..n - 1);
            Design::completely_randomized(n, n_treated).unwrap()
        } else {
            Design::bernoulli(n, ps[idx % ps.len()]).unwrap()
        };
        let check = check_probabilities(design, &nbr).unwrap();
        max_marginal = max_marginal.max(check.max_marginal_error);
        max_joint = max_joint.max(check.max_joint_error);
        cells += check.cells;
    }

    let elapsed = start.elapsed();
    let passed = max_marginal <= 1e-12 && max_joint <= 1e-12 && elapsed.as_secs() < 60;
    report(
        1,
        "probability closed forms vs oracle",
        passed,
        &format!(
            "50 instances, {cells} cells, max marginal err {max_marginal:.2e}, \
             max joint err {max_joint:.2e}, elapsed {elapsed:?}"
        ),
    );
}

struct MomentCase {
    design: Design,
    nbr: KNeighborhoods,
    pot: PotentialOutcomeTable,
    additive: bool,
}

/// 20 seeded potential-outcome tables on N = 8, K alternating 1 and 2,
/// each evaluated under complete randomization with 4 treated and under
/// fair-coin Bernoulli. Odd-indexed tables have constant own-treatment
/// contrasts so the pooled estimators also target the named effects.
fn moment_cases() -> Vec<MomentCase> {
    let n = 8usize;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut cases = Vec::new();
    for t in 0..20 {
        let k = 1 + t % 2;
        let d = random_distance_matrix(n, &mut rng);
        let nbr = build_k_neighborhoods(&d, k).unwrap();
        let additive = t % 2 == 1;
        let pot = if additive {
            additive_potential_outcomes(n, k, &mut rng)
        } else {
            random_potential_outcomes(n, k, &mut rng)
        };
        for design in [
            Design::completely_randomized(n, 4).unwrap(),
            Design::bernoulli(n, 0.5).unwrap(),
        ] {
            cases.push(MomentCase {
                design,
                nbr: nbr.clone(),
                pot: pot.clone(),
                additive,
            });
        }
    }
    cases
}

fn analyze(case: &MomentCase) -> InstanceAnalysis {
    let specs = estimator_specs(case.nbr.k());
    analyze_instance(case.design, &case.nbr, &case.pot, &specs, true).unwrap()
}

#[test]
fn criterion_2_estimators_are_exactly_unbiased() {
    let mut max_bias = 0.0f64;
    let mut max_named_bias = 0.0f64;
    for case in moment_cases() {
        let analysis = analyze(&case);
        for (s, spec) in analysis.specs.iter().enumerate() {
            let target = spec.target(&case.pot).unwrap();
            max_bias = max_bias.max((analysis.exact_mean[s] - target).abs());
            if case.additive && spec.assumption == Assumption::A2 {
                let named = case.pot.estimand(spec.kind).unwrap();
                max_named_bias = max_named_bias.max((analysis.exact_mean[s] - named).abs());
            }
        }
    }
    report(
        2,
        "exact unbiasedness",
        max_bias <= 1e-10 && max_named_bias <= 1e-10,
        &format!(
            "max |E - target| = {max_bias:.2e}; pooled vs named effect under \
             constant contrasts = {max_named_bias:.2e}"
        ),
    );
}

#[test]
fn criterion_3_closed_form_variances_match_enumeration() {
    let mut max_gap = 0.0f64;
    for case in moment_cases() {
        let analysis = analyze(&case);
        for (s, spec) in analysis.specs.iter().enumerate() {
            let theory =
                theoretical_estimator_variance(case.design, &case.nbr, &case.pot, *spec).unwrap();
            max_gap = max_gap.max((theory - analysis.exact_var[s]).abs());
        }
    }
    report(
        3,
        "closed-form variance identities",
        max_gap <= 1e-10,
        &format!("max |theory - enumerated variance| = {max_gap:.2e}"),
    );
}

#[test]
fn criterion_4_variance_estimates_are_conservative() {
    let mut min_slack = f64::INFINITY;
    for case in moment_cases() {
        let analysis = analyze(&case);
        for s in 0..analysis.specs.len() {
            min_slack = min_slack.min(analysis.expected_var_estimate[s] - analysis.exact_var[s]);
        }
    }
    report(
        4,
        "exact conservativeness",
        min_slack >= -1e-10,
        &format!("min E[variance estimate] - Var = {min_slack:.2e}"),
    );
}

#[test]
fn criterion_5_decomposition_identities_per_realization() {
    let mut max_violation = 0.0f64;
    for case in moment_cases() {
        let analysis = analyze(&case);
        max_violation = max_violation.max(analysis.max_decomposition_violation);
    }
    report(
        5,
        "decomposition identities",
        max_violation <= 1e-12,
        &format!("max per-assignment violation = {max_violation:.2e}"),
    );
}

fn full_scale(model: u8, design: DesignKind) -> knnim::sim::SimSummary {
    run_simulation(&SimConfig {
        model: InterferenceModel::preset(model).unwrap(),
        design,
        n: 256,
        replications: 1000,
        seed: SIM_SEED,
        redraw_population: false,
    })
    .unwrap()
}

fn row(
    summary: &knnim::sim::SimSummary,
    kind: EffectKind,
    assumption: Assumption,
) -> &knnim::sim::SimRow {
    summary
        .rows
        .iter()
        .find(|r| r.kind == kind && r.assumption == assumption)
        .unwrap()
}

#[test]
fn criterion_6_moderate_interference_reproduction() {
    let start = Instant::now();
    let summary = full_scale(5, DesignKind::CrdHalf);
    let elapsed = start.elapsed();

    let ind = row(&summary, EffectKind::Indirect, Assumption::A1);
    let nn1 = row(&summary, EffectKind::NearestNeighbor(1), Assumption::A1);
    let ind_ok = (ind.emp_ev - 3.5).abs() <= 0.12;
    let nn1_ok = (nn1.emp_ev - 2.0).abs() <= 0.09;
    let var_ok = ind.mean_var_est >= 1.6 && ind.mean_var_est <= 3.1;
    let runtime_ok = elapsed.as_secs() < 600;
    report(
        6,
        "moderate-interference simulation",
        ind_ok && nn1_ok && var_ok && runtime_ok,
        &format!(
            "indirect EV {:.4} (target 3.5 ± 0.12), nn1 EV {:.4} (target 2.0 ± 0.09), \
             indirect mean var est {:.4} (range [1.6, 3.1]), elapsed {elapsed:?}",
            ind.emp_ev, nn1.emp_ev, ind.mean_var_est
        ),
    );
}

#[test]
fn criterion_7_null_model_both_designs() {
    let mut max_abs_ev = 0.0f64;
    let mut min_ratio = f64::INFINITY;
    for design in [DesignKind::CrdHalf, DesignKind::BernoulliHalf] {
        let summary = full_scale(1, design);
        for row in &summary.rows {
            max_abs_ev = max_abs_ev.max(row.emp_ev.abs());
            min_ratio = min_ratio.min(row.mean_var_est / row.emp_var);
        }
    }
    report(
        7,
        "null-model simulation",
        max_abs_ev <= 0.12 && min_ratio >= 0.9,
        &format!(
            "max |EV| = {max_abs_ev:.4} (limit 0.12), min var-est / emp-var ratio = {min_ratio:.3} \
             (limit 0.9)"
        ),
    );
}

#[test]
fn criterion_8_strong_effects_total() {
    let summary = full_scale(9, DesignKind::CrdHalf);
    let total = row(&summary, EffectKind::Total, Assumption::A1);
    report(
        8,
        "strong-effects total",
        (total.emp_ev - 10.0).abs() <= 0.35,
        &format!("total EV {:.4} (target 10 ± 0.35)", total.emp_ev),
    );
}
