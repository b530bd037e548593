//! The five subcommands.

use std::fs;
use std::io::Write;

use clap::{Args, ValueEnum};
use qnuis_core::bounds::{self, BoundKind, BoundOptions, ReportRequest};
use qnuis_core::classical::ClassicalModel;
use qnuis_core::classify;
use qnuis_core::holevo::{HolevoProblem, HolevoResult, HolevoTarget};
use qnuis_core::linalg::{self, CMat, RMat};
use qnuis_core::measurement::{
    self, EstimatorKind, FinalEstimate, Povm, SimConfig, Simulation, Strategy,
    DEFAULT_FIRST_STAGE_EXPONENT,
};
use qnuis_core::nuisance::{self, OdeOptions};
use qnuis_core::qfisher::LocalGeometry;
use qnuis_core::{Partition, StateModel, WeightMatrix};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::error::{input, CliError, CliResult};
use crate::output::{self, matrix, num, nums, Format};
use crate::spec::{self, ModelSpec};
use crate::ModelArgs;

/// A resolved model with its point and interest partition.
struct Setup {
    spec: ModelSpec,
    model: StateModel,
    point: Vec<f64>,
    partition: Partition,
}

impl Setup {
    fn new(args: &ModelArgs) -> CliResult<Self> {
        let spec = args.resolve()?;
        let model = spec.build()?;
        let point = spec.point()?;
        let partition = spec.partition(model.dim_param())?;
        Ok(Self {
            spec,
            model,
            point,
            partition,
        })
    }

    fn weight(&self) -> CliResult<WeightMatrix> {
        self.spec.weight(self.partition.d_interest())
    }

    /// Fields every report starts with.
    fn header(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("model".into(), json!(self.model.name()));
        m.insert("point".into(), nums(&self.point));
        m.insert("interest".into(), json!(self.partition.d_interest()));
        m
    }
}

fn rmat_rows(m: &RMat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Complex matrix as rows of `[re, im]` pairs.
fn cmat_json(m: &CMat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| {
                Value::Array(
                    (0..m.ncols())
                        .map(|j| json!([num(m[(i, j)].re), num(m[(i, j)].im)]))
                        .collect(),
                )
            })
            .collect(),
    )
}

fn number_map<'a>(entries: impl Iterator<Item = (&'a String, &'a f64)>) -> Value {
    Value::Object(entries.map(|(k, v)| (k.clone(), num(*v))).collect())
}

// ---------------------------------------------------------------------------------------
// bound

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Bounds to evaluate, comma separated: sld, rld, holevo, nagaoka.
    #[arg(long, default_value = "sld", value_delimiter = ',')]
    bounds: Vec<BoundChoice>,
    /// Also report the information loss caused by the nuisance parameters.
    #[arg(long)]
    info_loss: bool,
    /// Random starts of the Holevo optimizer (in addition to the dual-SLD start).
    #[arg(long)]
    holevo_starts: Option<usize>,
    /// Seed of the Holevo optimizer's random starts.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    output: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundChoice {
    Sld,
    Rld,
    Holevo,
    Nagaoka,
}

impl From<BoundChoice> for BoundKind {
    fn from(b: BoundChoice) -> Self {
        match b {
            BoundChoice::Sld => BoundKind::Sld,
            BoundChoice::Rld => BoundKind::Rld,
            BoundChoice::Holevo => BoundKind::Holevo,
            BoundChoice::Nagaoka => BoundKind::Nagaoka,
        }
    }
}

/// Holevo bound with the optimizer starts spread over the thread pool. Starts are merged
/// by index, so the result does not depend on the number of threads.
fn holevo_parallel(
    geom: &LocalGeometry,
    partition: &Partition,
    w: &WeightMatrix,
    opts: &BoundOptions,
) -> CliResult<HolevoResult> {
    let problem = HolevoProblem::new(
        geom,
        &HolevoTarget::Interest(partition.d_interest()),
        w,
        &opts.holevo,
    )?;
    let starts = (0..problem.n_starts())
        .into_par_iter()
        .map(|i| problem.run_start(i))
        .collect();
    Ok(problem.finish(starts, opts.opt_tol)?)
}

pub fn run_bound(args: &BoundArgs, out: &mut impl Write) -> CliResult<()> {
    let setup = Setup::new(&args.model)?;
    let w = setup.weight()?;
    let mut opts = BoundOptions::default();
    if let Some(n) = args.holevo_starts {
        opts.holevo.random_starts = n;
    }
    if let Some(s) = args.seed {
        opts.holevo.seed = s;
    }
    let mut kinds: Vec<BoundKind> = args.bounds.iter().map(|&b| b.into()).collect();
    kinds.sort();
    kinds.dedup();
    let holevo = if kinds.contains(&BoundKind::Holevo) {
        let geom = LocalGeometry::at(&setup.model, &setup.point)?;
        Some(holevo_parallel(&geom, &setup.partition, &w, &opts)?)
    } else {
        None
    };
    let request = ReportRequest {
        kinds,
        info_loss: args.info_loss,
    };
    let report = bounds::bound_report_with(
        &setup.model,
        &setup.point,
        &setup.partition,
        &w,
        &request,
        &opts,
        holevo,
    )?;
    let mut m = setup.header();
    for (k, v) in &report.values {
        m.insert(k.clone(), num(*v));
    }
    m.insert("weight".into(), matrix(&rmat_rows(w.matrix())));
    m.insert("diagnostics".into(), number_map(report.diagnostics.iter()));
    m.insert(
        "checks".into(),
        Value::Object(
            report
                .checks
                .iter()
                .map(|(k, v)| (k.clone(), json!(v)))
                .collect(),
        ),
    );
    output::emit(out, args.output, &Value::Object(m))
}

// ---------------------------------------------------------------------------------------
// classify

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Extra points for the quasi-classicality check, e.g. "0.1,0.2;0.3,0.1" (the main
    /// point is always included).
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    output: Format,
}

pub fn run_classify(args: &ClassifyArgs, out: &mut impl Write) -> CliResult<()> {
    let setup = Setup::new(&args.model)?;
    let report = match &args.grid {
        Some(g) => {
            let mut grid = vec![setup.point.clone()];
            grid.extend(spec::parse_points(g)?);
            classify::classify_grid(&setup.model, &grid, &setup.partition)?
        }
        None => classify::classify_point(&setup.model, &setup.point, &setup.partition)?,
    };
    let mut m = setup.header();
    let mut residuals = Map::new();
    let mut cross = Map::new();
    let mut agree = Map::new();
    for (name, flag) in &report.flags {
        m.insert(name.clone(), json!(flag.value));
        residuals.insert(name.clone(), num(flag.residual));
        cross.insert(name.clone(), num(flag.cross_check));
        agree.insert(name.clone(), json!(flag.routes_agree()));
    }
    m.insert("residuals".into(), Value::Object(residuals));
    m.insert("cross_checks".into(), Value::Object(cross));
    m.insert("routes_agree".into(), Value::Object(agree));
    m.insert("scope".into(), serde_json::to_value(report.scope)?);
    m.insert("points_tested".into(), json!(report.points_tested));
    m.insert("class_tol".into(), num(classify::CLASS_TOL));
    output::emit(out, args.output, &Value::Object(m))
}

// ---------------------------------------------------------------------------------------
// orthogonalize

#[derive(Debug, Args)]
pub struct OrthogonalizeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Starting point (defaults to --point).
    #[arg(long, allow_hyphen_values = true)]
    start: Option<String>,
    /// Grid of the interest coordinate, start:stop:step; must begin at the start point.
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    /// RK4 steps per grid interval.
    #[arg(long, default_value_t = 4)]
    substeps: usize,
    #[arg(long, value_enum, default_value = "csv")]
    output: Format,
}

pub fn run_orthogonalize(args: &OrthogonalizeArgs, out: &mut impl Write) -> CliResult<()> {
    let mut margs = args.model.clone();
    if let Some(s) = &args.start {
        margs.point = Some(s.clone());
    }
    let setup = Setup::new(&margs)?;
    let grid = spec::parse_range(&args.grid)?;
    let opts = OdeOptions {
        substeps: args.substeps,
        ..OdeOptions::default()
    };
    let traj = nuisance::global_orthogonalize_ode(&setup.model, &setup.point, &grid, &opts)?;
    let labels = setup.model.labels().to_vec();
    let rows: Vec<Map<String, Value>> = traj
        .points
        .iter()
        .map(|p| {
            let mut r = Map::new();
            r.insert("xi1".into(), num(p.xi1));
            for (l, t) in labels.iter().zip(&p.theta) {
                r.insert(l.clone(), num(*t));
            }
            r.insert("offdiag_residual".into(), num(p.offdiag_residual));
            r.insert("inverse_info_theta".into(), num(p.inverse_info_theta));
            r.insert("inverse_info_xi".into(), num(p.inverse_info_xi));
            r
        })
        .collect();
    match args.output {
        // Column order follows the trajectory, not the alphabet.
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let mut header = vec!["xi1".to_string()];
            header.extend(labels.iter().cloned());
            header.extend(
                ["offdiag_residual", "inverse_info_theta", "inverse_info_xi"].map(String::from),
            );
            w.write_record(&header)?;
            for r in &rows {
                w.write_record(
                    header
                        .iter()
                        .map(|h| r[h].as_f64().map(output::cell).unwrap_or_default()),
                )?;
            }
            w.flush()?;
            Ok(())
        }
        Format::Json => {
            let mut m = setup.header();
            m.insert("substeps".into(), json!(traj.substeps));
            m.insert("ode_tol".into(), num(traj.ode_tol));
            m.insert("max_residual".into(), num(traj.max_residual()));
            m.insert(
                "trajectory".into(),
                Value::Array(rows.into_iter().map(Value::Object).collect()),
            );
            output::write_json(out, &Value::Object(m))
        }
    }
}

// ---------------------------------------------------------------------------------------
// simulate and model

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PovmChoice {
    /// Computational-basis measurement.
    Computational,
    /// The six Pauli eigenprojectors with weight 1/3 (qubits only).
    PauliSix,
    /// Default informationally complete measurement (Pauli six for qubits, seeded random
    /// bases otherwise).
    Ic,
    /// `d + 1` seeded random orthonormal bases.
    RandomBases,
    /// Optimal projection measurement for the (single) parameter of interest at the point.
    Optimal,
}

impl PovmChoice {
    fn build(self, setup: &Setup, seed: u64) -> CliResult<Povm> {
        let d = setup.model.dim_hilbert();
        Ok(match self {
            PovmChoice::Computational => Povm::computational(d),
            PovmChoice::PauliSix if d == 2 => Povm::pauli_six(),
            PovmChoice::PauliSix => return Err(input("the Pauli measurement needs a qubit model")),
            PovmChoice::Ic => Povm::default_ic(d, seed),
            PovmChoice::RandomBases => Povm::random_bases(d, seed),
            PovmChoice::Optimal => {
                measurement::optimal_pvm_scalar(&setup.model, &setup.point, &setup.partition)?.povm
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyChoice {
    Repetitive,
    TwoStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorChoice {
    Mle,
    Lu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FinalChoice {
    Local,
    Pooled,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum)]
    strategy: StrategyChoice,
    /// Measurement for the repetitive strategy (default computational) or the first stage
    /// of the two-step strategy (default ic).
    #[arg(long, value_enum)]
    povm: Option<PovmChoice>,
    /// Estimator of the repetitive strategy.
    #[arg(long, value_enum, default_value = "mle")]
    estimator: EstimatorChoice,
    /// Copies per trial.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// The first stage of the two-step strategy uses ⌈n^a⌉ copies.
    #[arg(long, default_value_t = DEFAULT_FIRST_STAGE_EXPONENT)]
    first_stage_exponent: f64,
    /// Final estimate of the two-step strategy.
    #[arg(long, value_enum, default_value = "pooled")]
    final_estimate: FinalChoice,
    /// Also emit every trial's estimate (CSV: one row per trial).
    #[arg(long)]
    per_trial: bool,
    #[arg(long, value_enum, default_value = "json")]
    output: Format,
}

pub fn run_simulate(args: &SimulateArgs, out: &mut impl Write) -> CliResult<()> {
    let setup = Setup::new(&args.model)?;
    let strategy = match args.strategy {
        StrategyChoice::Repetitive => Strategy::Repetitive {
            povm: args
                .povm
                .unwrap_or(PovmChoice::Computational)
                .build(&setup, args.seed)?,
            estimator: match args.estimator {
                EstimatorChoice::Mle => EstimatorKind::Mle,
                EstimatorChoice::Lu => EstimatorKind::LocallyUnbiased,
            },
        },
        StrategyChoice::TwoStep => Strategy::TwoStep {
            first_stage: args.povm.map(|p| p.build(&setup, args.seed)).transpose()?,
            first_stage_exponent: args.first_stage_exponent,
            final_estimate: match args.final_estimate {
                FinalChoice::Local => FinalEstimate::Local,
                FinalChoice::Pooled => FinalEstimate::Pooled,
            },
        },
    };
    let config = SimConfig {
        strategy,
        partition: setup.partition,
        n_copies: args.n,
        n_trials: args.trials,
        seed: args.seed,
    };
    let sim = Simulation::new(&setup.model, &setup.point, &config)?;
    let outcomes = (0..sim.n_trials())
        .into_par_iter()
        .map(|i| sim.run_trial(i))
        .collect::<Result<Vec<_>, _>>()?;
    let result = sim.aggregate(outcomes.clone())?;
    let mut m = setup.header();
    m.insert("strategy".into(), json!(result.strategy));
    m.insert("n_copies".into(), json!(result.n_copies));
    m.insert("n_trials".into(), json!(result.n_trials));
    m.insert("seed".into(), json!(result.seed));
    m.insert("scaled_mse".into(), num(result.scaled_mse));
    m.insert("stderr".into(), num(result.stderr));
    m.insert("bound_value".into(), num(result.bound_value));
    m.insert(
        "ratio_to_bound".into(),
        num(result.scaled_mse / result.bound_value),
    );
    m.insert("empirical_mse".into(), matrix(&result.empirical_mse));
    m.insert(
        "scaled_mse_matrix".into(),
        matrix(&result.scaled_mse_matrix),
    );
    m.insert("bias".into(), nums(&result.bias));
    m.insert(
        "povm_bound".into(),
        result.povm_bound.map(num).unwrap_or(Value::Null),
    );
    m.insert(
        "first_stage_copies".into(),
        json!(result.first_stage_copies),
    );
    m.insert("boundary_retreats".into(), json!(result.boundary_retreats));
    if let Strategy::TwoStep {
        first_stage_exponent,
        final_estimate,
        ..
    } = &config.strategy
    {
        m.insert("first_stage_exponent".into(), num(*first_stage_exponent));
        m.insert(
            "final_estimate".into(),
            serde_json::to_value(final_estimate)?,
        );
    }
    let trials: Vec<Map<String, Value>> = outcomes
        .iter()
        .map(|t| {
            let mut r = Map::new();
            r.insert("trial".into(), json!(t.index));
            r.insert("estimate".into(), nums(&t.estimate));
            r.insert("error".into(), nums(&t.error));
            r.insert("retreated".into(), json!(t.retreated));
            r
        })
        .collect();
    match (args.output, args.per_trial) {
        (Format::Csv, true) => output::write_csv_rows(out, &trials),
        (Format::Json, true) => {
            m.insert(
                "trials".into(),
                Value::Array(trials.into_iter().map(Value::Object).collect()),
            );
            output::write_json(out, &Value::Object(m))
        }
        (format, false) => output::emit(out, format, &Value::Object(m)),
    }
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// CSV of `outcome-label,count` rows: fit the model by maximum likelihood, starting from
    /// --point.
    #[arg(long)]
    counts: Option<String>,
    /// Measurement that produced the counts.
    #[arg(long, value_enum, default_value = "computational")]
    povm: PovmChoice,
    /// Seed for randomly generated measurements.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    output: Format,
}

/// Counts per POVM outcome from `label,count` rows; an optional header row is skipped and
/// unlisted outcomes count zero.
fn read_counts(path: &str, povm: &Povm) -> CliResult<Vec<u64>> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut counts = vec![0u64; povm.len()];
    let mut seen = vec![false; povm.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(input(format!(
                "row {} of {path} is not label,count",
                row + 1
            )));
        }
        let Ok(count) = record[1].parse::<u64>() else {
            if row == 0 {
                continue;
            }
            return Err(input(format!(
                "row {}: '{}' is not a count",
                row + 1,
                &record[1]
            )));
        };
        let x = povm
            .labels()
            .iter()
            .position(|l| l == &record[0])
            .ok_or_else(|| {
                input(format!(
                    "unknown outcome '{}' (outcomes: {})",
                    &record[0],
                    povm.labels().join(", ")
                ))
            })?;
        if seen[x] {
            return Err(input(format!("outcome '{}' listed twice", &record[0])));
        }
        seen[x] = true;
        counts[x] = count;
    }
    if counts.iter().all(|&n| n == 0) {
        return Err(input(format!("{path} contains no counts")));
    }
    Ok(counts)
}

pub fn run_model(args: &DescribeArgs, out: &mut impl Write) -> CliResult<()> {
    let setup = Setup::new(&args.model)?;
    let mut m = setup.header();
    m.insert("d_h".into(), json!(setup.model.dim_hilbert()));
    m.insert("d".into(), json!(setup.model.dim_param()));
    m.insert("labels".into(), json!(setup.model.labels()));
    match &args.counts {
        None => {
            let geom = LocalGeometry::at(&setup.model, &setup.point)?;
            let jr = geom.j_rld()?;
            m.insert("state".into(), cmat_json(&geom.rho));
            m.insert("eigenvalues".into(), nums(&geom.eig.values));
            m.insert("sld_fisher".into(), matrix(&rmat_rows(&geom.j_sld)));
            m.insert(
                "sld_fisher_inverse".into(),
                matrix(&rmat_rows(&geom.j_sld_inv)),
            );
            m.insert("rld_fisher".into(), cmat_json(&jr));
            m.insert(
                "partial_sld_fisher".into(),
                matrix(&rmat_rows(&nuisance::schur_complement_real(
                    &geom.j_sld,
                    &setup.partition,
                )?)),
            );
            m.insert(
                "sld_condition_number".into(),
                num(linalg::condition_number(&geom.j_sld)),
            );
        }
        Some(path) => {
            let povm = args.povm.build(&setup, args.seed)?;
            let counts = read_counts(path, &povm)?;
            let classical = ClassicalModel::from_povm(&setup.model, &povm);
            let fit = classical.mle_or_boundary(&counts, &setup.point)?;
            let n: u64 = counts.iter().sum();
            m.insert("povm".into(), json!(povm.labels()));
            m.insert("counts".into(), json!(counts));
            m.insert("n".into(), json!(n));
            m.insert("mle".into(), nums(&fit.theta));
            m.insert("converged".into(), json!(fit.converged));
            m.insert("iterations".into(), json!(fit.iterations));
            m.insert("grad_norm".into(), num(fit.grad_norm));
            m.insert("log_likelihood".into(), num(fit.log_likelihood));
            // Plug-in covariance J(θ̂)^{-1}/n, when the fit is regular.
            let cov = classical
                .fisher_matrix(&fit.theta)
                .and_then(|j| linalg::inv_sym_pd(&j, "Fisher matrix at the estimate"))
                .ok()
                .map(|c| matrix(&rmat_rows(&(c / n as f64))));
            m.insert("covariance".into(), cov.unwrap_or(Value::Null));
        }
    }
    output::emit(out, args.output, &Value::Object(m))
}
