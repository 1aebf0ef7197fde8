//! Simulation scenarios, penalty tuning and evaluation.
//!
//! Every replicate draws from its own ChaCha8 stream (`seed`, stream =
//! replicate index), so results do not depend on the order or the number of
//! threads replicates run on.

use capacc_core::capa::CapaConfig;
use capacc_core::linalg::Cholesky;
use capacc_core::{
    adjusted_rand_index, approx_saving, banded_adjacency, build_plan, car_precision,
    constant_correlation_precision, default_penalties, detect, detect_single, lattice_adjacency,
    segment_stats, subset_metrics, AnomalySet, CollectiveAnomaly, DataMatrix, Matrix,
    NeighborhoodPlan, PenaltyScheme, PointAnomaly, PrecisionModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower and upper end of the scale factors searched by [`tune_scale`].
pub const SCALE_BRACKET: (f64, f64) = (0.1, 100.0);

/// Baseline precision structure of a scenario; CAR models are standardised
/// to unit marginal variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PrecisionKind {
    /// CAR model over the `r`-banded neighbourhood.
    Banded { r: usize, rho: f64 },
    /// CAR model over an `m × m` lattice (`p = m²`).
    Lattice { m: usize, rho: f64 },
    /// Constant correlation `rho` between all pairs.
    Constant { rho: f64 },
    Identity,
}

impl PrecisionKind {
    pub fn model(&self, p: usize) -> Result<PrecisionModel> {
        Ok(match *self {
            PrecisionKind::Banded { r, rho } => car_precision(&banded_adjacency(p, r)?, rho)?,
            PrecisionKind::Lattice { m, rho } => {
                if m * m != p {
                    return Err(Error::Usage(format!("a {m} × {m} lattice needs p = {}", m * m)));
                }
                car_precision(&lattice_adjacency(m)?, rho)?
            }
            PrecisionKind::Constant { rho } => constant_correlation_precision(p, rho)?,
            PrecisionKind::Identity => PrecisionModel::identity(p)?,
        })
    }
}

/// Distribution of an anomalous mean before rescaling to its signal
/// strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeClass {
    /// `N(0, Σ_JJ)` with `Σ` the data covariance.
    Sigma,
    /// `N(0, ρ11ᵀ + (1 - ρ)I)`; 0 gives independent entries, 1 equal ones.
    Rho(f64),
}

/// A collective anomaly over `(s, e]` in the 1-based `variables`, with mean
/// norm `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub s: usize,
    pub e: usize,
    pub variables: Vec<usize>,
    pub theta: f64,
    pub change: ChangeClass,
}

/// A point anomaly at 1-based time `t` in `count` random variables, each
/// shifted by an `N(0, size_sd²)` draw. The default `size_sd` is
/// `√(4 log p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSpec {
    pub t: usize,
    pub count: usize,
    #[serde(default)]
    pub size_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub n: usize,
    pub p: usize,
    pub precision: PrecisionKind,
    #[serde(default)]
    pub anomalies: Vec<AnomalySpec>,
    #[serde(default)]
    pub points: Vec<PointSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl SimScenario {
    /// Anomaly-free data of size `n × p`.
    pub fn null(n: usize, p: usize, precision: PrecisionKind, seed: u64) -> Self {
        Self {
            n,
            p,
            precision,
            anomalies: Vec::new(),
            points: Vec::new(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let (n, p) = (self.n, self.p);
        if n < 2 || p == 0 {
            return Err(Error::Usage(format!("scenario needs n ≥ 2 and p ≥ 1, got n = {n}, p = {p}")));
        }
        let mut windows: Vec<(usize, usize)> = self.anomalies.iter().map(|a| (a.s, a.e)).collect();
        windows.sort_unstable();
        for w in windows.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::Usage(format!(
                    "anomalies ({}, {}] and ({}, {}] overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        for a in &self.anomalies {
            if a.e > n || a.e < a.s + 2 {
                return Err(Error::Usage(format!("invalid anomaly window ({}, {}]", a.s, a.e)));
            }
            if !(a.theta > 0.0 && a.theta.is_finite()) {
                return Err(Error::Usage(format!("signal strength {} is not positive", a.theta)));
            }
            check_variables(&a.variables, p)?;
            if let ChangeClass::Rho(r) = a.change {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::Usage(format!("mean correlation {r} outside [0, 1]")));
                }
            }
        }
        let mut times: Vec<usize> = self.points.iter().map(|pt| pt.t).collect();
        times.sort_unstable();
        if times.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Usage("two point anomalies share a time".into()));
        }
        for pt in &self.points {
            if pt.t == 0 || pt.t > n {
                return Err(Error::Usage(format!("point anomaly time {} outside 1..={n}", pt.t)));
            }
            if pt.count == 0 || pt.count > p {
                return Err(Error::Usage(format!("point anomaly affects {} of {p} variables", pt.count)));
            }
            if windows.iter().any(|&(s, e)| pt.t > s && pt.t <= e) {
                return Err(Error::Usage(format!("point anomaly at {} lies in a collective anomaly", pt.t)));
            }
            if let Some(sd) = pt.size_sd {
                if !(sd > 0.0 && sd.is_finite()) {
                    return Err(Error::Usage(format!("point anomaly size sd {sd} is not positive")));
                }
            }
        }
        Ok(())
    }
}

fn check_variables(vars: &[usize], p: usize) -> Result<()> {
    if vars.is_empty() || vars.windows(2).any(|w| w[0] >= w[1]) || vars[0] == 0 || vars[vars.len() - 1] > p {
        return Err(Error::Usage(format!(
            "anomalous variables {vars:?} must be strictly increasing within 1..={p}"
        )));
    }
    Ok(())
}

/// Random stream of replicate `replicate` under `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

fn normals(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.sample(StandardNormal)).collect()
}

/// One simulated data set with its ground truth. Truth savings are the
/// noise-free values `L μᵀQμ` (collective) and `δᵀQδ` (point).
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub data: DataMatrix,
    pub truth: AnomalySet,
}

/// A validated scenario with the covariance factor shared by all draws.
#[derive(Debug, Clone)]
pub struct Sampler {
    scenario: SimScenario,
    model: PrecisionModel,
    factor: Cholesky,
    covariance: Matrix,
}

impl Sampler {
    pub fn new(scenario: SimScenario) -> Result<Self> {
        scenario.validate()?;
        let model = scenario.precision.model(scenario.p)?;
        let covariance = model.covariance()?;
        let factor = covariance.cholesky()?;
        Ok(Self {
            scenario,
            model,
            factor,
            covariance,
        })
    }

    pub fn scenario(&self) -> &SimScenario {
        &self.scenario
    }

    /// The true baseline model (zero mean).
    pub fn model(&self) -> &PrecisionModel {
        &self.model
    }

    /// Draws replicate `replicate`: baseline rows first, then the collective
    /// means in the order listed, then the point anomalies.
    pub fn sample(&self, replicate: u64) -> Result<Simulated> {
        let sc = &self.scenario;
        let (n, p) = (sc.n, sc.p);
        let mut rng = replicate_rng(sc.seed, replicate);
        let mut values = Vec::with_capacity(n * p);
        for _ in 0..n {
            let z = normals(&mut rng, p);
            values.extend(self.factor.lower_mul(&z));
        }
        let q = self.model.q();
        let mut truth = AnomalySet::default();
        for a in &sc.anomalies {
            let mu = self.anomalous_mean(&mut rng, a)?;
            for t in a.s..a.e {
                for (&j, &m) in a.variables.iter().zip(&mu) {
                    values[t * p + j - 1] += m;
                }
            }
            let full = scatter(&mu, &a.variables, p);
            truth.collective.push(CollectiveAnomaly {
                s: a.s,
                e: a.e,
                subset: a.variables.clone(),
                mean: mu,
                saving: (a.e - a.s) as f64 * q.bilinear(&full, &full),
            });
        }
        let default_sd = (4.0 * (p as f64).ln()).sqrt();
        for pt in &sc.points {
            let mut vars: Vec<usize> = rand::seq::index::sample(&mut rng, p, pt.count)
                .into_iter()
                .map(|j| j + 1)
                .collect();
            vars.sort_unstable();
            let sd = pt.size_sd.unwrap_or(default_sd);
            let sizes: Vec<f64> = normals(&mut rng, vars.len()).iter().map(|z| sd * z).collect();
            for (&j, &d) in vars.iter().zip(&sizes) {
                values[(pt.t - 1) * p + j - 1] += d;
            }
            let full = scatter(&sizes, &vars, p);
            truth.points.push(PointAnomaly {
                t: pt.t,
                subset: vars,
                saving: q.bilinear(&full, &full),
            });
        }
        truth.collective.sort_by_key(|a| a.s);
        truth.points.sort_by_key(|a| a.t);
        truth.total_cost = truth.collective.iter().map(|a| a.saving).sum::<f64>()
            + truth.points.iter().map(|a| a.saving).sum::<f64>();
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        let data = DataMatrix::new(Matrix::from_row_major(n, p, values)?, names)?;
        Ok(Simulated { data, truth })
    }

    fn anomalous_mean(&self, rng: &mut ChaCha8Rng, a: &AnomalySpec) -> Result<Vec<f64>> {
        let k = a.variables.len();
        let raw = match a.change {
            ChangeClass::Sigma => {
                let idx: Vec<usize> = a.variables.iter().map(|j| j - 1).collect();
                let sub = self.covariance.select(&idx, &idx).cholesky()?;
                sub.lower_mul(&normals(rng, k))
            }
            ChangeClass::Rho(r) => {
                let common: f64 = rng.sample(StandardNormal);
                let own = normals(rng, k);
                own.iter().map(|z| r.sqrt() * common + (1.0 - r).sqrt() * z).collect()
            }
        };
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Numeric("sampled anomalous mean is zero".into()));
        }
        Ok(raw.iter().map(|x| x * (a.theta / norm)).collect())
    }
}

fn scatter(values: &[f64], vars: &[usize], p: usize) -> Vec<f64> {
    let mut full = vec![0.0; p];
    for (&j, &v) in vars.iter().zip(values) {
        full[j - 1] = v;
    }
    full
}

/// First replicate of `scenario`.
pub fn sample_scenario(scenario: &SimScenario) -> Result<(DataMatrix, AnomalySet)> {
    let s = Sampler::new(scenario.clone())?.sample(0)?;
    Ok((s.data, s.truth))
}

/// `reps` anomaly-free data sets from `N(0, Q^{-1})`.
pub fn null_pool(model: &PrecisionModel, n: usize, reps: usize, seed: u64) -> Result<Vec<DataMatrix>> {
    let cov = model.covariance()?;
    let factor = cov.cholesky()?;
    let p = model.p();
    (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep);
            let mut values = Vec::with_capacity(n * p);
            for _ in 0..n {
                values.extend(factor.lower_mul(&normals(&mut rng, p)));
            }
            Ok(DataMatrix::from_matrix(Matrix::from_row_major(n, p, values)?)?)
        })
        .collect()
}

/// Which test a method applies to a data set.
#[derive(Debug, Clone, PartialEq)]
pub enum Statistic {
    /// The full detector; any collective or point anomaly is a detection.
    Capa(CapaConfig),
    /// Penalised saving of the known segment `(s, e]` is positive.
    KnownSegment { s: usize, e: usize },
    /// Single most likely changepoint with segments of at least `min_len`.
    Changepoint { min_len: usize },
}

/// A statistic with the precision model it assumes. Penalties are the
/// defaults for the data size, with `b' = b`.
#[derive(Debug, Clone)]
pub struct Method {
    pub name: String,
    model: PrecisionModel,
    plan: NeighborhoodPlan,
    pub statistic: Statistic,
}

impl Method {
    pub fn new(name: impl Into<String>, model: PrecisionModel, statistic: Statistic) -> Result<Self> {
        let plan = build_plan(model.adjacency())?;
        Ok(Self {
            name: name.into(),
            model,
            plan,
            statistic,
        })
    }

    pub fn model(&self) -> &PrecisionModel {
        &self.model
    }

    pub fn scheme(&self, n: usize, b: f64) -> Result<PenaltyScheme> {
        Ok(default_penalties(n, self.model.p(), b, b)?)
    }

    /// Whether the method flags `data` at scale `b`.
    pub fn detects(&self, data: &DataMatrix, b: f64) -> Result<bool> {
        let scheme = self.scheme(data.n(), b)?;
        Ok(match &self.statistic {
            Statistic::Capa(config) => !detect(data, &self.model, &self.plan, &scheme, config)?
                .anomalies
                .is_empty(),
            Statistic::KnownSegment { s, e } => {
                let stats = segment_stats(data, self.model.mu0(), *s, *e)?;
                approx_saving(self.model.band(), &self.plan, &stats, &scheme)?.value > 0.0
            }
            Statistic::Changepoint { min_len } => {
                detect_single(data, &self.model, &self.plan, &scheme, *min_len)?.detected
            }
        })
    }

    pub fn anomalies(&self, data: &DataMatrix, b: f64) -> Result<AnomalySet> {
        let Statistic::Capa(config) = &self.statistic else {
            return Err(Error::Usage(format!("method {} does not locate anomalies", self.name)));
        };
        let scheme = self.scheme(data.n(), b)?;
        Ok(detect(data, &self.model, &self.plan, &scheme, config)?.anomalies)
    }

    /// Estimated changepoint `τ̂` (1-based, change after `τ̂`).
    pub fn changepoint(&self, data: &DataMatrix, b: f64) -> Result<usize> {
        let Statistic::Changepoint { min_len } = self.statistic else {
            return Err(Error::Usage(format!("method {} is not a changepoint test", self.name)));
        };
        let scheme = self.scheme(data.n(), b)?;
        Ok(detect_single(data, &self.model, &self.plan, &scheme, min_len)?.tau)
    }
}

/// Outcome of [`tune_scale`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tuning {
    pub b: f64,
    pub alpha_hat: f64,
    /// Every `(b, α̂(b))` evaluated, in order.
    pub path: Vec<(f64, f64)>,
}

/// Detection status of one pool member, exploiting that detection is
/// monotone in `b`: flagged for every `b ≤ flagged_upto`, clear for every
/// `b ≥ clear_from`.
#[derive(Debug, Clone, Copy)]
struct Bracket {
    flagged_upto: f64,
    clear_from: f64,
}

/// Fraction of `pool` flagged by `method` at each scale in `scales`, in
/// order.
pub fn false_positive_rates(method: &Method, pool: &[DataMatrix], scales: &[f64]) -> Result<Vec<f64>> {
    let mut brackets = vec![
        Bracket {
            flagged_upto: 0.0,
            clear_from: f64::INFINITY,
        };
        pool.len()
    ];
    scales.iter().map(|&b| rate_at(method, pool, &mut brackets, b)).collect()
}

fn rate_at(method: &Method, pool: &[DataMatrix], brackets: &mut [Bracket], b: f64) -> Result<f64> {
    let flags: Vec<bool> = pool
        .par_iter()
        .zip(brackets.par_iter_mut())
        .map(|(data, br)| {
            if b <= br.flagged_upto {
                return Ok(true);
            }
            if b >= br.clear_from {
                return Ok(false);
            }
            let hit = method.detects(data, b)?;
            if hit {
                br.flagged_upto = b;
            } else {
                br.clear_from = b;
            }
            Ok(hit)
        })
        .collect::<Result<_>>()?;
    Ok(flags.iter().filter(|&&f| f).count() as f64 / pool.len() as f64)
}

/// Bisection on `log b` over [`SCALE_BRACKET`] until the fraction of the
/// fixed null `pool` with at least one detection lies in
/// `[target - delta, target + delta]`.
pub fn tune_on_pool(method: &Method, pool: &[DataMatrix], target: f64, delta: f64) -> Result<Tuning> {
    if !(target > 0.0 && target < 1.0) || !(delta >= 0.0) {
        return Err(Error::Usage(format!("target {target} ± {delta} is not a valid rate band")));
    }
    if pool.is_empty() {
        return Err(Error::Usage("empty null pool".into()));
    }
    let mut brackets = vec![
        Bracket {
            flagged_upto: 0.0,
            clear_from: f64::INFINITY,
        };
        pool.len()
    ];
    let mut path = Vec::new();
    let in_band = |a: f64| (a - target).abs() <= delta + 1e-12;
    let (mut lo, mut hi) = SCALE_BRACKET;
    let mut eval = |b: f64, path: &mut Vec<(f64, f64)>| -> Result<f64> {
        let a = rate_at(method, pool, &mut brackets, b)?;
        log::debug!("{}: b = {b:.6}, false positive rate {a:.4}", method.name);
        path.push((b, a));
        Ok(a)
    };
    let a_lo = eval(lo, &mut path)?;
    if in_band(a_lo) {
        return Ok(Tuning { b: lo, alpha_hat: a_lo, path });
    }
    if a_lo < target {
        return Err(Error::NonConvergence(format!(
            "false positive rate {a_lo} at b = {lo} is already below the target band"
        )));
    }
    let a_hi = eval(hi, &mut path)?;
    if in_band(a_hi) {
        return Ok(Tuning { b: hi, alpha_hat: a_hi, path });
    }
    if a_hi > target {
        return Err(Error::NonConvergence(format!(
            "false positive rate {a_hi} at b = {hi} is still above the target band"
        )));
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        let a = eval(mid, &mut path)?;
        if in_band(a) {
            return Ok(Tuning { b: mid, alpha_hat: a, path });
        }
        if a > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence(format!(
        "no scale in [{lo}, {hi}] reaches false positive rate {target} ± {delta}"
    )))
}

/// Tunes `method` on `reps ≥ 100` null data sets of length `n` drawn from
/// `null_model`, using one fixed pool for every `b`.
pub fn tune_scale(
    method: &Method,
    null_model: &PrecisionModel,
    n: usize,
    target: f64,
    delta: f64,
    reps: usize,
    seed: u64,
) -> Result<Tuning> {
    if reps < 100 {
        return Err(Error::Usage(format!("tuning needs at least 100 repetitions, got {reps}")));
    }
    if null_model.p() != method.model().p() {
        return Err(Error::Usage("null model and method differ in dimension".into()));
    }
    let pool = null_pool(null_model, n, reps, seed)?;
    tune_on_pool(method, &pool, target, delta)
}

/// Outcome of [`count_based_tune`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountTuning {
    pub b: f64,
    pub count: usize,
    /// The count equals the target.
    pub exact: bool,
    /// Grid steps where the count increased with `b`.
    pub monotonicity_violations: usize,
    /// `(b, count)` over the grid.
    pub path: Vec<(f64, usize)>,
}

/// Geometric grid of `points ≥ 2` scales over `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi / lo).ln() / (points - 1) as f64;
    (0..points).map(|k| lo * (step * k as f64).exp()).collect()
}

/// Smallest scale on `grid` (increasing) at which at most `target`
/// collective anomalies are detected in `data`. When no scale gives exactly
/// `target`, the result carries `exact = false`.
pub fn count_based_tune(data: &DataMatrix, method: &Method, target: usize, grid: &[f64]) -> Result<CountTuning> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Usage("scale grid must be non-empty and increasing".into()));
    }
    let counts: Vec<usize> = grid
        .par_iter()
        .map(|&b| Ok(method.anomalies(data, b)?.collective.len()))
        .collect::<Result<_>>()?;
    let path: Vec<(f64, usize)> = grid.iter().copied().zip(counts.iter().copied()).collect();
    let violations = counts.windows(2).filter(|w| w[1] > w[0]).count();
    if violations > 0 {
        log::warn!("detected count increased with b at {violations} grid steps; the grid may be too coarse");
    }
    let pick = match counts.iter().position(|&c| c <= target) {
        Some(k) => k,
        None => {
            log::warn!("no scale on the grid reduces the count to {target}");
            counts.len() - 1
        }
    };
    let exact = counts[pick] == target;
    if !exact {
        log::warn!("count {target} is not attainable on the grid; nearest is {}", counts[pick]);
    }
    Ok(CountTuning {
        b: grid[pick],
        count: counts[pick],
        exact,
        monotonicity_violations: violations,
        path,
    })
}

/// Detection accuracy on one data set or averaged over many.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub ari: f64,
    pub subset_precision: f64,
    pub subset_recall: f64,
    /// Fraction of true collective anomalies overlapped by a detection.
    pub power: f64,
    /// Fraction of detected collective anomalies overlapping no true one.
    pub false_positive_rate: f64,
    pub rmse_tau: Option<f64>,
}

fn overlap(a: (usize, usize), b: (usize, usize)) -> usize {
    a.1.min(b.1).saturating_sub(a.0.max(b.0))
}

/// Whether some detected collective anomaly overlaps `(s, e]`.
pub fn detects_window(pred: &AnomalySet, s: usize, e: usize) -> bool {
    pred.collective.iter().any(|a| overlap((a.s, a.e), (s, e)) > 0)
}

/// Compares detected anomalies with the truth over `n` observations. Subset
/// precision and recall average over the true collective anomalies, each
/// matched to the detection overlapping it most; unmatched ones score 0.
/// Without true collective anomalies, power is 0.
pub fn evaluate(truth: &AnomalySet, pred: &AnomalySet, n: usize) -> Result<EvaluationReport> {
    let ari = adjusted_rand_index(&truth.labels(n), &pred.labels(n))?;
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut hits = 0;
    for a in &truth.collective {
        let best = pred
            .collective
            .iter()
            .map(|d| (overlap((a.s, a.e), (d.s, d.e)), d))
            .filter(|(o, _)| *o > 0)
            .max_by_key(|(o, _)| *o);
        if let Some((_, d)) = best {
            let (pr, re) = subset_metrics(&a.subset, &d.subset);
            precision += pr;
            recall += re;
            hits += 1;
        }
    }
    let k = truth.collective.len();
    let (subset_precision, subset_recall, power) = if k == 0 {
        (0.0, 0.0, 0.0)
    } else {
        (precision / k as f64, recall / k as f64, hits as f64 / k as f64)
    };
    let false_alarms = pred
        .collective
        .iter()
        .filter(|d| !truth.collective.iter().any(|a| overlap((a.s, a.e), (d.s, d.e)) > 0))
        .count();
    let false_positive_rate = if pred.collective.is_empty() {
        0.0
    } else {
        false_alarms as f64 / pred.collective.len() as f64
    };
    Ok(EvaluationReport {
        ari,
        subset_precision,
        subset_recall,
        power,
        false_positive_rate,
        rmse_tau: None,
    })
}

/// Field-wise mean of `reports`.
pub fn average(reports: &[EvaluationReport]) -> Option<EvaluationReport> {
    if reports.is_empty() {
        return None;
    }
    let k = reports.len() as f64;
    let mean = |f: fn(&EvaluationReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    let taus: Vec<f64> = reports.iter().filter_map(|r| r.rmse_tau).collect();
    Some(EvaluationReport {
        ari: mean(|r| r.ari),
        subset_precision: mean(|r| r.subset_precision),
        subset_recall: mean(|r| r.subset_recall),
        power: mean(|r| r.power),
        false_positive_rate: mean(|r| r.false_positive_rate),
        rmse_tau: (taus.len() == reports.len())
            .then(|| (taus.iter().map(|x| x * x).sum::<f64>() / k).sqrt()),
    })
}

/// Root mean squared error of changepoint estimates.
pub fn rmse(estimates: &[usize], truth: usize) -> f64 {
    let ss: f64 = estimates.iter().map(|&t| (t as f64 - truth as f64).powi(2)).sum();
    (ss / estimates.len() as f64).sqrt()
}

/// Fraction of `reps` replicates of `sampler` flagged by `method` at `b`.
pub fn power(method: &Method, sampler: &Sampler, reps: usize, b: f64) -> Result<f64> {
    let hits = (0..reps as u64)
        .into_par_iter()
        .map(|rep| method.detects(&sampler.sample(rep)?.data, b))
        .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / reps as f64)
}

/// One point of a power curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub method: String,
    pub parameter: String,
    pub theta: f64,
    pub power: f64,
}

/// Power of every tuned method at each signal strength, rescaling all
/// anomalies of `scenario` to the same `theta`. All methods see the same
/// data sets.
pub fn power_curve(
    methods: &[(Method, f64)],
    scenario: &SimScenario,
    parameter: &str,
    thetas: &[f64],
    reps: usize,
) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::new();
    for &theta in thetas {
        let mut sc = scenario.clone();
        sc.anomalies.iter_mut().for_each(|a| a.theta = theta);
        let sampler = Sampler::new(sc)?;
        let data: Vec<DataMatrix> = (0..reps as u64)
            .into_par_iter()
            .map(|rep| Ok(sampler.sample(rep)?.data))
            .collect::<Result<_>>()?;
        for (m, b) in methods {
            let hits = data
                .par_iter()
                .map(|d| m.detects(d, *b))
                .collect::<Result<Vec<bool>>>()?;
            out.push(CurvePoint {
                method: m.name.clone(),
                parameter: parameter.to_string(),
                theta,
                power: hits.iter().filter(|&&h| h).count() as f64 / reps as f64,
            });
        }
    }
    Ok(out)
}
