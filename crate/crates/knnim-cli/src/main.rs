//! Command-line front end: estimation reports from CSV data, simulation
//! runs, exposure-probability dumps, and the enumeration verification
//! battery.
//!
//! Exit codes: 0 success, 2 input error (unreadable or malformed files,
//! bad flags, enumeration guard exceeded), 3 positivity or design error,
//! 4 verification failure.

mod io;
mod report;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use knnim::design::{all_marginals, joint_probability, Design};
use knnim::estimators::{
    estimate_all, low_count_exposures, Assumption, EstimatorError, ExperimentData, Weights,
    LOW_COUNT_THRESHOLD,
};
use knnim::model::{
    build_k_neighborhoods, exposure_counts, Assignment, Exposure, KNeighborhoods, ModelError,
};
use knnim::oracle::{run_battery, BatteryConfig, OracleError};
use knnim::sim::{run_simulation, DesignKind, InterferenceModel, SimConfig, SimError};

use crate::io::{build_distance_matrix, read_distances, read_units, UnitsTable};
use crate::report::{AnalysisReport, JointRow, MarginalRow, ProbabilityReport, SimReport};

const EXIT_INPUT: i32 = 2;
const EXIT_DESIGN: i32 = 3;
const EXIT_VERIFICATION: i32 = 4;

/// Error carrying the process exit code.
pub(crate) struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    pub(crate) fn input(err: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: format!("{:#}", err.into()),
        }
    }

    pub(crate) fn design(err: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_DESIGN,
            message: format!("{:#}", err.into()),
        }
    }

    pub(crate) fn verification(message: String) -> Self {
        Self {
            code: EXIT_VERIFICATION,
            message,
        }
    }
}

/// Positivity and design-shape problems exit with the design code; other
/// estimation errors are input problems.
fn estimator_error(err: EstimatorError) -> CliError {
    match &err {
        EstimatorError::PositivityViolation { .. }
        | EstimatorError::TreatedCountMismatch { .. }
        | EstimatorError::Design(_)
        | EstimatorError::Model(ModelError::NeighborhoodSize { .. }) => CliError::design(err),
        _ => CliError::input(err),
    }
}

#[derive(Parser)]
#[command(
    name = "knnim",
    version,
    about = "Design-based effect estimation under K-nearest-neighbors interference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate effects from a units file and a distances file
    Analyze(AnalyzeArgs),
    /// Run the replicated synthetic-population simulation
    Simulate(SimulateArgs),
    /// Dump closed-form exposure probabilities
    Probabilities(ProbabilitiesArgs),
    /// Verify closed forms against exhaustive enumeration
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Debug)]
#[serde(rename_all = "lowercase")]
enum DesignFlag {
    Crd,
    Bernoulli,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Debug)]
#[serde(rename_all = "lowercase")]
enum AssumptionsFlag {
    A1,
    A2,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Debug)]
#[serde(rename_all = "lowercase")]
enum FormatFlag {
    Csv,
    Json,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// TOML configuration file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Units CSV with header `id,treatment,response`
    #[arg(long)]
    units: Option<PathBuf>,
    /// Distances CSV with header `src,dst,distance` or `src,dst,rank`
    #[arg(long)]
    distances: Option<PathBuf>,
    /// Neighborhood size
    #[arg(short, long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    design: Option<DesignFlag>,
    /// Treated count for the completely randomized design (default: the
    /// observed treated count)
    #[arg(long)]
    n_treated: Option<usize>,
    /// Treatment probability for the Bernoulli design (default 0.5)
    #[arg(long)]
    p: Option<f64>,
    /// Which estimator families to report
    #[arg(long, value_enum)]
    assumptions: Option<AssumptionsFlag>,
    /// Pooling weight on the first contrast; the second gets 1 - c1
    #[arg(long)]
    c1: Option<f64>,
    /// Critical value for the confidence-interval columns
    #[arg(long)]
    z: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<FormatFlag>,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// The same keys as the analyze flags, in TOML form.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    units: Option<PathBuf>,
    distances: Option<PathBuf>,
    k: Option<usize>,
    design: Option<DesignFlag>,
    n_treated: Option<usize>,
    p: Option<f64>,
    assumptions: Option<AssumptionsFlag>,
    c1: Option<f64>,
    z: Option<f64>,
    format: Option<FormatFlag>,
    out: Option<PathBuf>,
}

impl FileConfig {
    fn load(path: Option<&PathBuf>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::input(anyhow!("cannot read config {}: {e}", path.display()))
                })?;
                toml::from_str(&text).map_err(|e| {
                    CliError::input(anyhow!("cannot parse config {}: {e}", path.display()))
                })
            }
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Interference model preset 1..=9
    #[arg(long)]
    model: u8,
    #[arg(long, value_enum)]
    design: DesignFlag,
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Redraw the population every replication instead of fixing it
    #[arg(long)]
    redraw_population: bool,
    #[arg(long, value_enum, default_value_t = FormatFlag::Csv)]
    format: FormatFlag,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProbabilitiesArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    units: Option<PathBuf>,
    #[arg(long)]
    distances: Option<PathBuf>,
    #[arg(short, long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    design: Option<DesignFlag>,
    #[arg(long)]
    n_treated: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    /// Restrict the marginal dump to one unit id
    #[arg(long)]
    unit: Option<String>,
    /// Also dump joint probabilities for a pair of unit ids
    #[arg(long, num_args = 2, value_names = ["UNIT_I", "UNIT_J"])]
    pair: Option<Vec<String>>,
    #[arg(long, value_enum)]
    format: Option<FormatFlag>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Largest instance size for the probability checks (even sizes from 6
    /// up to this cap are used)
    #[arg(long, default_value_t = 12)]
    max_n: usize,
    /// Number of probability-check instances
    #[arg(long, default_value_t = 50)]
    instances: usize,
    /// Number of potential-outcome tables for the moment checks
    #[arg(long, default_value_t = 20)]
    tables: usize,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Probabilities(args) => cmd_probabilities(args),
        Command::Oracle(args) => cmd_oracle(args),
    };
    if let Err(err) = result {
        eprintln!("error: {}", err.message);
        std::process::exit(err.code);
    }
}

/// Ingested instance shared by analyze and probabilities.
struct Instance {
    units: UnitsTable,
    nbr: KNeighborhoods,
    design: Design,
    design_label: String,
}

fn load_instance(
    units_path: &Path,
    distances_path: &Path,
    k: usize,
    design_flag: DesignFlag,
    n_treated: Option<usize>,
    p: Option<f64>,
) -> Result<Instance, CliError> {
    let units = read_units(units_path)?;
    let n = units.n();
    if n < k + 2 {
        return Err(CliError::design(anyhow!(
            "k = {k} is too large for {n} units (need n >= k + 2)"
        )));
    }
    let edges = read_distances(distances_path, &units)?;
    let d = build_distance_matrix(&units, &edges, k)?;
    let nbr = build_k_neighborhoods(&d, k).map_err(|e| match e {
        ModelError::NeighborhoodSize { .. } => CliError::design(e),
        other => CliError::input(other),
    })?;
    let (design, design_label) = match design_flag {
        DesignFlag::Crd => {
            let n_treated = n_treated.unwrap_or_else(|| units.treated_count());
            let design = Design::completely_randomized(n, n_treated).map_err(CliError::design)?;
            (design, format!("crd(n_treated={n_treated})"))
        }
        DesignFlag::Bernoulli => {
            let p = p.unwrap_or(0.5);
            let design = Design::bernoulli(n, p).map_err(CliError::design)?;
            (design, format!("bernoulli(p={p})"))
        }
    };
    Ok(Instance {
        units,
        nbr,
        design,
        design_label,
    })
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value
        .ok_or_else(|| CliError::input(anyhow!("missing required option --{flag} (or config key)")))
}

fn write_output(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::input(anyhow!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_ref())?;
    let units_path = require(args.units.or(file.units), "units")?;
    let distances_path = require(args.distances.or(file.distances), "distances")?;
    let k = require(args.k.or(file.k), "k")?;
    let design_flag = require(args.design.or(file.design), "design")?;
    let assumptions = args
        .assumptions
        .or(file.assumptions)
        .unwrap_or(AssumptionsFlag::Both);
    let c1 = args.c1.or(file.c1).unwrap_or(0.5);
    let z = args.z.or(file.z).unwrap_or(1.96);
    let format = args.format.or(file.format).unwrap_or(FormatFlag::Csv);
    let out = args.out.or(file.out);
    if !(z.is_finite() && z >= 0.0) {
        return Err(CliError::input(anyhow!("z must be a nonnegative number")));
    }
    let weights = Weights::new(c1, 1.0 - c1).map_err(CliError::input)?;

    let instance = load_instance(
        &units_path,
        &distances_path,
        k,
        design_flag,
        args.n_treated.or(file.n_treated),
        args.p.or(file.p),
    )?;
    let w = Assignment::new(instance.units.treatment.clone());
    let counts = exposure_counts(&instance.nbr, &w).map_err(CliError::input)?;
    let data = ExperimentData::new(
        instance.nbr,
        instance.design,
        w,
        instance.units.response.clone(),
    )
    .map_err(estimator_error)?;

    let rows = estimate_all(&data, weights).map_err(estimator_error)?;
    let rows: Vec<_> = rows
        .into_iter()
        .filter(|r| match assumptions {
            AssumptionsFlag::Both => true,
            AssumptionsFlag::A1 => r.assumption == Assumption::A1,
            AssumptionsFlag::A2 => {
                r.assumption == Assumption::A2 || r.kind == knnim::estimators::EffectKind::Total
            }
        })
        .collect();
    let low = low_count_exposures(&data, LOW_COUNT_THRESHOLD);

    let analysis = AnalysisReport::new(
        data.n(),
        data.k(),
        instance.design_label,
        z,
        &rows,
        &counts,
        &low,
    );
    let text = match format {
        FormatFlag::Csv => analysis.to_csv(),
        FormatFlag::Json => analysis.to_json(),
    };
    write_output(out.as_ref(), &text)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let model = InterferenceModel::preset(args.model).map_err(CliError::input)?;
    let cfg = SimConfig {
        model,
        design: match args.design {
            DesignFlag::Crd => DesignKind::CrdHalf,
            DesignFlag::Bernoulli => DesignKind::BernoulliHalf,
        },
        n: args.n,
        replications: args.reps,
        seed: args.seed,
        redraw_population: args.redraw_population,
    };
    let summary = run_simulation(&cfg).map_err(|e| match e {
        SimError::Estimator(inner) => estimator_error(inner),
        SimError::OddPopulation(_) | SimError::Design(_) | SimError::Model(_) => {
            CliError::design(e)
        }
        other => CliError::input(other),
    })?;
    let report = SimReport::from_summary(&summary);
    let text = match args.format {
        FormatFlag::Csv => report.to_csv(),
        FormatFlag::Json => report.to_json(),
    };
    write_output(args.out.as_ref(), &text)
}

fn cmd_probabilities(args: ProbabilitiesArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_ref())?;
    let units_path = require(args.units.or(file.units), "units")?;
    let distances_path = require(args.distances.or(file.distances), "distances")?;
    let k = require(args.k.or(file.k), "k")?;
    let design_flag = require(args.design.or(file.design), "design")?;
    let format = args.format.or(file.format).unwrap_or(FormatFlag::Csv);
    let out = args.out.or(file.out);

    let instance = load_instance(
        &units_path,
        &distances_path,
        k,
        design_flag,
        args.n_treated.or(file.n_treated),
        args.p.or(file.p),
    )?;

    let unit_indices: Vec<usize> = match &args.unit {
        Some(id) => vec![instance
            .units
            .index_of(id)
            .ok_or_else(|| CliError::input(anyhow!("unknown unit id `{id}`")))?],
        None => (0..instance.units.n()).collect(),
    };

    let mut marginals = Vec::new();
    for i in unit_indices {
        for (e, prob) in
            all_marginals(&instance.design, &instance.nbr, i).map_err(CliError::design)?
        {
            marginals.push(MarginalRow {
                unit: instance.units.ids[i].clone(),
                own: e.own() as u8,
                pattern: e.pattern_string(),
                probability: prob,
            });
        }
    }

    let mut joints = Vec::new();
    if let Some(pair) = &args.pair {
        let i = instance
            .units
            .index_of(&pair[0])
            .ok_or_else(|| CliError::input(anyhow!("unknown unit id `{}`", pair[0])))?;
        let j = instance
            .units
            .index_of(&pair[1])
            .ok_or_else(|| CliError::input(anyhow!("unknown unit id `{}`", pair[1])))?;
        if i == j {
            return Err(CliError::input(anyhow!(
                "--pair needs two distinct unit ids"
            )));
        }
        for e_i in Exposure::enumerate(k) {
            for e_j in Exposure::enumerate(k) {
                let prob = joint_probability(&instance.design, &instance.nbr, i, e_i, j, e_j)
                    .map_err(CliError::design)?;
                joints.push(JointRow {
                    unit_i: instance.units.ids[i].clone(),
                    own_i: e_i.own() as u8,
                    pattern_i: e_i.pattern_string(),
                    unit_j: instance.units.ids[j].clone(),
                    own_j: e_j.own() as u8,
                    pattern_j: e_j.pattern_string(),
                    probability: prob,
                });
            }
        }
    }

    let report = ProbabilityReport {
        k,
        design: instance.design_label,
        marginals,
        joints,
    };
    let text = match format {
        FormatFlag::Csv => report.to_csv(),
        FormatFlag::Json => report.to_json(),
    };
    write_output(out.as_ref(), &text)
}

fn cmd_oracle(args: OracleArgs) -> Result<(), CliError> {
    if args.max_n < 6 {
        return Err(CliError::input(anyhow!("--max-n must be at least 6")));
    }
    let cfg = BatteryConfig {
        seed: args.seed,
        sizes: (6..=args.max_n).step_by(2).collect(),
        probability_instances: args.instances,
        moment_tables: args.tables,
        ..BatteryConfig::default()
    };
    let report = run_battery(&cfg).map_err(|e| match e {
        OracleError::SpaceTooLarge { .. } => CliError::input(e),
        other => CliError::input(other),
    })?;
    let mut text = String::new();
    write!(text, "{report}").expect("write to string");
    print!("{text}");
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::verification(
            "one or more verification checks failed".to_string(),
        ))
    }
}
