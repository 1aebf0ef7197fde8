//! Command line: `capacc <command> [options]`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use capacc_core::capa::CapaConfig;
use capacc_core::estimate::{
    repair_positive_definite, structured_precision_with, FitOptions, MAD_CONSISTENCY,
};
use capacc_core::{
    approx_saving, banded_adjacency, build_plan, car_precision, default_penalties, detect,
    detect_multiple, lattice_adjacency, robust_baseline, robust_covariance, segment_stats,
    Adjacency, BaselineMode, CptConfig, DataMatrix, Matrix, PenaltyMode, PenaltyScheme,
    PrecisionModel,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{write_curves, ScenarioFile};
use crate::error::{Error, Result};
use crate::io::{self, PenaltyRecord, Report};
use crate::simlab::{
    count_based_tune, evaluate, geometric_grid, null_pool, power_curve, tune_on_pool, Method,
    Sampler, Statistic, SCALE_BRACKET,
};

#[derive(Debug, Parser)]
#[command(name = "capacc", version, about = "Collective and point anomalies in cross-correlated data")]
pub struct Cli {
    /// Worker threads for replicate loops (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect collective and point anomalies.
    Detect(DetectArgs),
    /// Detect changepoints in the mean by binary segmentation.
    Cpt(CptArgs),
    /// Robust baseline and structured precision estimate.
    Estimate(EstimateArgs),
    /// Simulate a scenario.
    Simulate(SimulateArgs),
    /// Tune the penalty scale factor.
    Tune(TuneArgs),
    /// Compare detections with the truth, or emit power curves.
    Evaluate(EvaluateArgs),
    /// Time the segment saving for growing p.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Observation CSV with a header row.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Output file (stdout when absent).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    /// Per-series medians.
    Median,
    Zero,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// `identity`, `estimate`, or the path of a precision file.
    #[arg(long, default_value = "identity")]
    pub precision: String,
    /// Pattern for `--precision estimate`: `banded:R`, `lattice:M`, `full`,
    /// or a dense 0/1 CSV file.
    #[arg(long, default_value = "banded:2")]
    pub adjacency: String,
    /// Baseline mean for file and identity precisions.
    #[arg(long, value_enum, default_value_t = Baseline::Median)]
    pub baseline: Baseline,
    #[arg(long, default_value_t = MAD_CONSISTENCY)]
    pub mad_constant: f64,
    /// Clip the eigenvalues of a non positive definite covariance estimate.
    #[arg(long)]
    pub repair: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PenaltyArgs {
    /// Scale of the collective anomaly penalties.
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// Scale of the point anomaly penalty (defaults to `--b`).
    #[arg(long)]
    pub b_point: Option<f64>,
    #[arg(long)]
    pub alpha_sparse: Option<f64>,
    #[arg(long)]
    pub alpha_dense: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub beta_point: Option<f64>,
}

impl PenaltyArgs {
    fn scheme(&self, n: usize, p: usize) -> Result<PenaltyScheme> {
        let base = default_penalties(n, p, self.b, self.b_point.unwrap_or(self.b))?;
        if self.alpha_sparse.is_none()
            && self.alpha_dense.is_none()
            && self.beta.is_none()
            && self.beta_point.is_none()
        {
            return Ok(base);
        }
        Ok(PenaltyScheme::custom(
            p,
            self.alpha_sparse.unwrap_or(base.alpha_sparse()),
            self.alpha_dense.unwrap_or(base.alpha_dense()),
            self.beta.unwrap_or(base.beta()),
            self.beta_point.unwrap_or(base.beta_point()),
            base.psi(),
        )?)
    }
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, default_value_t = 2)]
    pub min_len: usize,
    /// Defaults to `n`.
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub no_points: bool,
    #[arg(long)]
    pub no_pruning: bool,
    /// Re-select subsets of detected segments with the sparse penalty.
    #[arg(long)]
    pub post_process: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliPenaltyMode {
    Global,
    PerSegment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliCentre {
    Segment,
    Global,
}

#[derive(Debug, Args)]
pub struct CptArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, default_value_t = 2)]
    pub min_len: usize,
    #[arg(long, value_enum, default_value_t = CliPenaltyMode::Global)]
    pub penalty_mode: CliPenaltyMode,
    /// Mean each sub-segment is centred on.
    #[arg(long, value_enum, default_value_t = CliCentre::Segment)]
    pub centre: CliCentre,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[arg(long, default_value = "banded:2")]
    pub adjacency: String,
    #[arg(long, default_value_t = MAD_CONSISTENCY)]
    pub mad_constant: f64,
    #[arg(long)]
    pub repair: bool,
    /// JSON summary (baseline, sweeps, repair flag); stdout when absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 500)]
    pub max_sweeps: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML scenario file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Data CSV output (stdout when absent).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Ground truth JSON report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, env = "CAPACC_SEED")]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Training data: estimates the null model, or is the data set for
    /// `--count`.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Null data length (defaults to the input length).
    #[arg(long)]
    pub n: Option<usize>,
    /// Dimension when there is neither input nor precision file.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub target_alpha: f64,
    #[arg(long, default_value_t = 0.02)]
    pub delta: f64,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// `capa`, `changepoint`, or `known:S,E`.
    #[arg(long, default_value = "capa")]
    pub statistic: String,
    #[arg(long, default_value_t = 2)]
    pub min_len: usize,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Instead of a false positive rate, the number of collective anomalies
    /// to output on the input.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = 61)]
    pub grid_points: usize,
    #[arg(long, env = "CAPACC_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground truth report.
    #[arg(long, requires = "report")]
    pub truth: Option<PathBuf>,
    /// Detection report.
    #[arg(long, requires = "truth")]
    pub report: Option<PathBuf>,
    /// Scenario file with a `[study]` section.
    #[arg(long, requires = "emit_curves", conflicts_with = "truth")]
    pub scenario: Option<PathBuf>,
    /// Tidy CSV of power curves.
    #[arg(long, requires = "scenario")]
    pub emit_curves: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, env = "CAPACC_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "50,100,200,400")]
    pub p: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub r: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Segment length.
    #[arg(long, default_value_t = 10)]
    pub len: usize,
    /// Timed evaluations per dimension.
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, env = "CAPACC_SEED", default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Errors are reported on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("capacc: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Detect(a) => run_detect(a),
        Command::Cpt(a) => run_cpt(a),
        Command::Estimate(a) => run_estimate(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Tune(a) => run_tune(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Bench(a) => run_bench(a),
    })
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Parses an adjacency specification for dimension `p`.
pub fn parse_adjacency(spec: &str, p: usize) -> Result<Adjacency> {
    let bad = || Error::Usage(format!("adjacency `{spec}`: expected banded:R, lattice:M, full or a file"));
    if spec == "full" {
        return Ok(banded_adjacency(p, p.saturating_sub(1))?);
    }
    if let Some(r) = spec.strip_prefix("banded:") {
        return Ok(banded_adjacency(p, r.parse().map_err(|_| bad())?)?);
    }
    if let Some(m) = spec.strip_prefix("lattice:") {
        let m: usize = m.parse().map_err(|_| bad())?;
        if m * m != p {
            return Err(Error::Usage(format!("a {m} × {m} lattice needs p = {}, the data have {p}", m * m)));
        }
        return Ok(lattice_adjacency(m)?);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(bad());
    }
    let m = io::read_precision_file(path, Some(p))?;
    let mut w = Adjacency::empty(p);
    for i in 0..p {
        for j in 0..p {
            if i != j && m[(i, j)] != 0.0 {
                w.connect(i, j);
            }
        }
    }
    if !w.is_symmetric() {
        return Err(Error::Parse("adjacency file is not symmetric".into()));
    }
    Ok(w)
}

/// Baseline mean and precision for `data` as selected by `args`.
pub fn build_model(args: &ModelArgs, data: &DataMatrix) -> Result<PrecisionModel> {
    let p = data.p();
    let mu0 = match args.baseline {
        Baseline::Median => robust_baseline(data),
        Baseline::Zero => vec![0.0; p],
    };
    match args.precision.as_str() {
        "identity" => Ok(PrecisionModel::identity(p)?.with_mu0(mu0)?),
        "estimate" => {
            let w = parse_adjacency(&args.adjacency, p)?;
            let (model, _, _) = estimate_model(data, &w, args.mad_constant, args.repair, FitOptions::default())?;
            Ok(model)
        }
        path => {
            let q = io::read_precision_file(Path::new(path), Some(p))?;
            Ok(PrecisionModel::new(mu0, q)?)
        }
    }
}

/// Robust estimates with the fit diagnostics.
fn estimate_model(
    data: &DataMatrix,
    w: &Adjacency,
    mad_constant: f64,
    repair: bool,
    opts: FitOptions,
) -> Result<(PrecisionModel, bool, (usize, f64))> {
    let mu0 = robust_baseline(data);
    let raw = robust_covariance(data, mad_constant)?;
    let (s, repaired) = if repair { repair_positive_definite(&raw)? } else { (raw, false) };
    let fit = structured_precision_with(&s, w, opts)?;
    let model = fit.precision.with_mu0(mu0)?;
    Ok((model, repaired, (fit.sweeps, fit.max_mismatch)))
}

fn run_detect(a: DetectArgs) -> Result<()> {
    let data = io::read_data_file(&a.io.input)?;
    let model = build_model(&a.model, &data)?;
    let plan = build_plan(model.adjacency())?;
    let scheme = a.penalty.scheme(data.n(), data.p())?;
    let config = CapaConfig {
        min_len: a.min_len,
        max_len: a.max_len.unwrap_or(data.n()),
        pruning: !a.no_pruning,
        point_anomalies: !a.no_points,
        post_process: a.post_process,
    };
    if config.min_len < 2 || config.max_len < config.min_len {
        return Err(Error::Usage(format!(
            "need max-len ≥ min-len ≥ 2, got min-len {} and max-len {}",
            config.min_len, config.max_len
        )));
    }
    let found = detect(&data, &model, &plan, &scheme, &config)?;
    log::info!(
        "{} collective and {} point anomalies; {} of {} start points pruned",
        found.anomalies.collective.len(),
        found.anomalies.points.len(),
        found.state.pruned_count,
        data.n()
    );
    let report = Report::new(data.n(), data.p(), Some(&scheme), &found.anomalies);
    emit(a.io.output.as_deref(), &io::to_json(&report)?)
}

#[derive(Debug, Serialize)]
struct ChangepointRecord {
    tau: usize,
    #[serde(rename = "J")]
    subset: Vec<usize>,
    value: f64,
}

#[derive(Debug, Serialize)]
struct CptReport {
    n: usize,
    p: usize,
    penalties: PenaltyRecord,
    changepoints: Vec<ChangepointRecord>,
}

fn run_cpt(a: CptArgs) -> Result<()> {
    let data = io::read_data_file(&a.io.input)?;
    let model = build_model(&a.model, &data)?;
    let plan = build_plan(model.adjacency())?;
    let scheme = a.penalty.scheme(data.n(), data.p())?;
    let config = CptConfig {
        min_len: a.min_len,
        penalty_mode: match a.penalty_mode {
            CliPenaltyMode::Global => PenaltyMode::Global,
            CliPenaltyMode::PerSegment => PenaltyMode::PerSegment,
        },
        baseline: match a.centre {
            CliCentre::Segment => BaselineMode::SegmentMean,
            CliCentre::Global => BaselineMode::GlobalMean,
        },
    };
    let found = detect_multiple(&data, &model, &plan, &scheme, &config)?;
    let report = CptReport {
        n: data.n(),
        p: data.p(),
        penalties: PenaltyRecord::from(&scheme),
        changepoints: found
            .into_iter()
            .filter(|c| c.detected)
            .map(|c| ChangepointRecord {
                tau: c.tau,
                subset: c.subset,
                value: c.value,
            })
            .collect(),
    };
    emit(a.io.output.as_deref(), &io::to_json(&report)?)
}

#[derive(Debug, Serialize)]
struct EstimateSummary {
    n: usize,
    p: usize,
    mu0: Vec<f64>,
    repaired: bool,
    sweeps: usize,
    max_mismatch: f64,
    bandwidth: usize,
}

fn run_estimate(a: EstimateArgs) -> Result<()> {
    let data = io::read_data_file(&a.io.input)?;
    let w = parse_adjacency(&a.adjacency, data.p())?;
    let opts = FitOptions {
        tolerance: a.tolerance,
        max_sweeps: a.max_sweeps,
    };
    let (model, repaired, (sweeps, max_mismatch)) = estimate_model(&data, &w, a.mad_constant, a.repair, opts)?;
    let mut buf = Vec::new();
    io::write_precision(&mut buf, model.q(), data.column_names())?;
    emit(a.io.output.as_deref(), std::str::from_utf8(&buf).expect("CSV is UTF-8"))?;
    let summary = EstimateSummary {
        n: data.n(),
        p: data.p(),
        mu0: model.mu0().to_vec(),
        repaired,
        sweeps,
        max_mismatch,
        bandwidth: model.bandwidth(),
    };
    match (&a.summary, &a.io.output) {
        (Some(path), _) => io::write_json_file(path, &summary),
        // the precision went to a file, so stdout is free for the summary
        (None, Some(_)) => emit(None, &io::to_json(&summary)?),
        (None, None) => Ok(()),
    }
}

fn run_simulate(a: SimulateArgs) -> Result<()> {
    let mut file = ScenarioFile::load(&a.scenario)?;
    if let Some(seed) = a.seed {
        file.scenario.seed = seed;
    }
    let sampler = Sampler::new(file.scenario)?;
    let sim = sampler.sample(a.replicate)?;
    let mut buf = Vec::new();
    io::write_data(&mut buf, &sim.data)?;
    emit(a.output.as_deref(), std::str::from_utf8(&buf).expect("CSV is UTF-8"))?;
    if let Some(path) = &a.truth {
        let report = Report::new(sim.data.n(), sim.data.p(), None, &sim.truth);
        io::write_json_file(path, &report)?;
    }
    Ok(())
}

fn parse_statistic(spec: &str, min_len: usize, max_len: Option<usize>) -> Result<Statistic> {
    match spec {
        "capa" => Ok(Statistic::Capa(CapaConfig {
            min_len,
            max_len: max_len.unwrap_or(usize::MAX),
            ..CapaConfig::default()
        })),
        "changepoint" => Ok(Statistic::Changepoint { min_len }),
        other => {
            let window = other.strip_prefix("known:").and_then(|w| {
                let (s, e) = w.split_once(',')?;
                Some((s.trim().parse().ok()?, e.trim().parse().ok()?))
            });
            match window {
                Some((s, e)) => Ok(Statistic::KnownSegment { s, e }),
                None => Err(Error::Usage(format!(
                    "statistic `{other}`: expected capa, changepoint or known:S,E"
                ))),
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct TuneReport {
    b: f64,
    alpha_hat: f64,
    target_alpha: f64,
    delta: f64,
    reps: usize,
    n: usize,
    p: usize,
    path: Vec<(f64, f64)>,
}

fn zero_mean(q: Matrix) -> Result<PrecisionModel> {
    Ok(PrecisionModel::new(vec![0.0; q.rows()], q)?)
}

fn run_tune(a: TuneArgs) -> Result<()> {
    let data = a.input.as_deref().map(io::read_data_file).transpose()?;
    let statistic = parse_statistic(&a.statistic, a.min_len, a.max_len)?;
    if let Some(target) = a.count {
        let data = data.ok_or_else(|| Error::Usage("--count needs --input".into()))?;
        let model = build_model(&a.model, &data)?;
        let method = Method::new("count", model, statistic)?;
        let grid = geometric_grid(SCALE_BRACKET.0, SCALE_BRACKET.1, a.grid_points.max(2));
        let t = count_based_tune(&data, &method, target, &grid)?;
        return emit(a.output.as_deref(), &io::to_json(&t)?);
    }
    let model = match (&data, a.model.precision.as_str()) {
        (Some(d), _) => build_model(&a.model, d)?,
        (None, "identity") => {
            let p = a.p.ok_or_else(|| Error::Usage("--p is required without --input".into()))?;
            PrecisionModel::identity(p)?
        }
        (None, "estimate") => return Err(Error::Usage("--precision estimate needs --input".into())),
        (None, path) => zero_mean(io::read_precision_file(Path::new(path), a.p)?)?,
    };
    let n = a
        .n
        .or(data.as_ref().map(|d| d.n()))
        .ok_or_else(|| Error::Usage("--n is required without --input".into()))?;
    // the null model is centred at zero, so the detector must be too
    let centred = model.with_mu0(vec![0.0; model.p()])?;
    let method = Method::new("tune", centred.clone(), statistic)?;
    if a.reps < 100 {
        return Err(Error::Usage(format!("--reps must be at least 100, got {}", a.reps)));
    }
    let pool = null_pool(&centred, n, a.reps, a.seed)?;
    let t = tune_on_pool(&method, &pool, a.target_alpha, a.delta)?;
    let report = TuneReport {
        b: t.b,
        alpha_hat: t.alpha_hat,
        target_alpha: a.target_alpha,
        delta: a.delta,
        reps: a.reps,
        n,
        p: centred.p(),
        path: t.path,
    };
    emit(a.output.as_deref(), &io::to_json(&report)?)
}

fn run_evaluate(a: EvaluateArgs) -> Result<()> {
    if let (Some(truth), Some(report)) = (&a.truth, &a.report) {
        let truth: Report = io::read_json_file(truth)?;
        let report: Report = io::read_json_file(report)?;
        if truth.n != report.n || truth.p != report.p {
            return Err(Error::Usage("truth and report describe different data sizes".into()));
        }
        let r = evaluate(&truth.anomalies(), &report.anomalies(), truth.n)?;
        return emit(a.output.as_deref(), &io::to_json(&r)?);
    }
    let (Some(scenario), Some(curves)) = (&a.scenario, &a.emit_curves) else {
        return Err(Error::Usage("evaluate needs --truth and --report, or --scenario and --emit-curves".into()));
    };
    let mut file = ScenarioFile::load(scenario)?;
    if let Some(seed) = a.seed {
        file.scenario.seed = seed;
    }
    let study = file
        .study
        .ok_or_else(|| Error::Usage(format!("{} has no [study] section", scenario.display())))?;
    // tuning data come from a stream family disjoint from the curve replicates
    let methods = study.tuned_methods(&file.scenario, file.scenario.seed ^ 0x5eed_7a11)?;
    let points = power_curve(&methods, &file.scenario, &study.parameter, &study.thetas, study.reps)?;
    let f = std::fs::File::create(curves).map_err(|e| Error::Io(format!("{}: {e}", curves.display())))?;
    write_curves(f, &points)
}

#[derive(Debug, Serialize)]
struct BenchPoint {
    p: usize,
    seconds_per_saving: f64,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    r: usize,
    points: Vec<BenchPoint>,
    /// Least squares slope of log time on log p.
    slope: f64,
}

/// Mean wall time of one segment saving for each `p`, on CAR data with an
/// `r`-banded structure.
pub fn bench_savings(ps: &[usize], r: usize, rho: f64, len: usize, reps: usize, seed: u64) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for &p in ps {
        let model = car_precision(&banded_adjacency(p, r)?, rho)?;
        let plan = build_plan(model.adjacency())?;
        let scheme = default_penalties(len.max(2), p, 1.0, 1.0)?;
        let pool = null_pool(&model, len, reps, seed)?;
        let stats: Vec<_> = pool
            .iter()
            .map(|d| segment_stats(d, model.mu0(), 0, len))
            .collect::<capacc_core::Result<_>>()?;
        // warm-up pass so allocation and caches are excluded
        for s in stats.iter().take(5) {
            approx_saving(model.band(), &plan, s, &scheme)?;
        }
        let start = Instant::now();
        let mut sink = 0.0;
        for s in &stats {
            sink += approx_saving(model.band(), &plan, s, &scheme)?.value;
        }
        let secs = start.elapsed().as_secs_f64() / reps as f64;
        std::hint::black_box(sink);
        out.push((p, secs));
    }
    Ok(out)
}

/// Least squares slope of `log y` on `log x`.
pub fn log_log_slope(points: &[(usize, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|&(p, _)| (p as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, t)| t.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn run_bench(a: BenchArgs) -> Result<()> {
    if a.p.len() < 2 || a.reps == 0 {
        return Err(Error::Usage("bench needs at least two dimensions and one repetition".into()));
    }
    let timings = bench_savings(&a.p, a.r, a.rho, a.len, a.reps, a.seed)?;
    let report = BenchReport {
        r: a.r,
        slope: log_log_slope(&timings),
        points: timings
            .into_iter()
            .map(|(p, s)| BenchPoint {
                p,
                seconds_per_saving: s,
            })
            .collect(),
    };
    emit(a.output.as_deref(), &io::to_json(&report)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacency_specs() {
        assert_eq!(parse_adjacency("banded:1", 4).unwrap().edge_count(), 3);
        assert_eq!(parse_adjacency("full", 4).unwrap().edge_count(), 6);
        assert_eq!(parse_adjacency("lattice:2", 4).unwrap().edge_count(), 4);
        assert!(matches!(parse_adjacency("lattice:3", 4), Err(Error::Usage(_))));
        assert!(matches!(parse_adjacency("ring", 4), Err(Error::Usage(_))));
    }

    #[test]
    fn statistic_specs() {
        assert_eq!(
            parse_statistic("known:50,60", 2, None).unwrap(),
            Statistic::KnownSegment { s: 50, e: 60 }
        );
        assert_eq!(parse_statistic("changepoint", 5, None).unwrap(), Statistic::Changepoint { min_len: 5 });
        assert!(parse_statistic("known:5", 2, None).is_err());
    }

    #[test]
    fn penalty_overrides() {
        let args = PenaltyArgs {
            b: 2.0,
            b_point: None,
            alpha_sparse: None,
            alpha_dense: Some(7.0),
            beta: None,
            beta_point: None,
        };
        let s = args.scheme(100, 10).unwrap();
        let d = default_penalties(100, 10, 2.0, 2.0).unwrap();
        assert_eq!(s.alpha_dense(), 7.0);
        assert_eq!(s.alpha_sparse(), d.alpha_sparse());
        assert_eq!(s.beta_point(), d.beta_point());
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(usize, f64)> = [50, 100, 200].iter().map(|&p| (p, 3e-6 * (p as f64).powf(1.1))).collect();
        assert!((log_log_slope(&pts) - 1.1).abs() < 1e-12);
    }
}
