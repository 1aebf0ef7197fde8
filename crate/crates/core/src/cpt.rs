//! Single-changepoint statistic for a change in mean of a subset of
//! variables, and multiple changepoints by binary segmentation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::bqp::BandedSolver;
use crate::error::{Error, Result};
use crate::graph::NeighborhoodPlan;
use crate::model::{default_penalties, DataMatrix, PenaltyScheme, PrecisionModel};
use crate::saving::{build_cpt_bqp, combine_regimes, SavingResult, SegmentMeans};

/// Penalties used inside binary segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyMode {
    /// The scheme passed in, computed for the full series.
    #[default]
    Global,
    /// Default penalties recomputed with `ψ = log n_sub` for every
    /// sub-segment, keeping the scale factors of the scheme passed in.
    PerSegment,
}

/// Mean a sub-segment is centred on before testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselineMode {
    #[default]
    SegmentMean,
    GlobalMean,
}

/// Binary segmentation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CptConfig {
    pub min_len: usize,
    pub penalty_mode: PenaltyMode,
    pub baseline: BaselineMode,
}

impl Default for CptConfig {
    fn default() -> Self {
        Self {
            min_len: 2,
            penalty_mode: PenaltyMode::Global,
            baseline: BaselineMode::SegmentMean,
        }
    }
}

/// A tested changepoint: the mean changes between observations `tau` and
/// `tau + 1` (1-based) in the variables `subset` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct ChangepointResult {
    pub tau: usize,
    pub subset: Vec<usize>,
    pub value: f64,
    pub detected: bool,
}

fn column_means(data: &DataMatrix) -> Vec<f64> {
    let n = data.n() as f64;
    let mut m = vec![0.0; data.p()];
    for t in 0..data.n() {
        for (a, &x) in m.iter_mut().zip(data.row(t)) {
            *a += x;
        }
    }
    m.iter_mut().for_each(|a| *a /= n);
    m
}

fn check_inputs(data: &DataMatrix, model: &PrecisionModel, plan: &NeighborhoodPlan, scheme: &PenaltyScheme) -> Result<()> {
    let p = data.p();
    if model.p() != p || plan.p() != p || scheme.p() != p {
        return Err(Error::invalid("dimension mismatch between data, model, plan and penalties"));
    }
    Ok(())
}

struct Scanner<'a> {
    means: SegmentMeans,
    model: &'a PrecisionModel,
    plan: &'a NeighborhoodPlan,
    scheme: &'a PenaltyScheme,
    solver: BandedSolver,
}

impl Scanner<'_> {
    fn statistic(&mut self, tau: usize) -> Result<SavingResult> {
        let n = self.means.n();
        let left = self.means.stats(0, tau)?;
        let right = self.means.stats(tau, n)?;
        let band = self.model.band();
        let inst = build_cpt_bqp(band, &left, &right, self.scheme)?;
        let dense = left.length as f64 * band.quad_form(&left.mean)
            + right.length as f64 * band.quad_form(&right.mean)
            - self.scheme.alpha_dense();
        combine_regimes(&mut self.solver, &inst, self.plan, self.scheme, dense)
    }

    fn best(&mut self, min_len: usize) -> Result<ChangepointResult> {
        let n = self.means.n();
        let mut best: Option<(usize, SavingResult)> = None;
        for tau in min_len..=n - min_len {
            let res = self.statistic(tau)?;
            if best.as_ref().is_none_or(|b| res.value > b.1.value) {
                best = Some((tau, res));
            }
        }
        let (tau, res) = best.ok_or_else(|| Error::invalid("empty changepoint range"))?;
        Ok(ChangepointResult {
            tau,
            subset: res.subset.iter().map(|j| j + 1).collect(),
            value: res.value,
            detected: res.value > 0.0,
        })
    }
}

/// Penalised saving of a changepoint after observation `tau`, with the data
/// centred on its column means.
pub fn cpt_statistic(
    data: &DataMatrix,
    model: &PrecisionModel,
    plan: &NeighborhoodPlan,
    scheme: &PenaltyScheme,
    tau: usize,
) -> Result<SavingResult> {
    check_inputs(data, model, plan, scheme)?;
    if tau < 1 || tau >= data.n() {
        return Err(Error::invalid(format!("changepoint {tau} outside 1..{}", data.n())));
    }
    let mut scan = Scanner {
        means: SegmentMeans::new(data, &column_means(data))?,
        model,
        plan,
        scheme,
        solver: BandedSolver::new(),
    };
    scan.statistic(tau)
}

/// Most likely single changepoint over `tau ∈ [l, n - l]`; the smallest
/// `tau` wins ties.
pub fn detect_single(
    data: &DataMatrix,
    model: &PrecisionModel,
    plan: &NeighborhoodPlan,
    scheme: &PenaltyScheme,
    min_len: usize,
) -> Result<ChangepointResult> {
    check_inputs(data, model, plan, scheme)?;
    detect_single_centred(data, model, plan, scheme, min_len, &column_means(data))
}

fn detect_single_centred(
    data: &DataMatrix,
    model: &PrecisionModel,
    plan: &NeighborhoodPlan,
    scheme: &PenaltyScheme,
    min_len: usize,
    centre: &[f64],
) -> Result<ChangepointResult> {
    if min_len < 1 || data.n() < 2 * min_len {
        return Err(Error::invalid(format!(
            "n = {} is too short for minimum segment length {min_len}",
            data.n()
        )));
    }
    let mut scan = Scanner {
        means: SegmentMeans::new(data, centre)?,
        model,
        plan,
        scheme,
        solver: BandedSolver::new(),
    };
    scan.best(min_len)
}

/// Binary segmentation; changepoints are returned in increasing order with
/// `tau` relative to the full series.
pub fn detect_multiple(
    data: &DataMatrix,
    model: &PrecisionModel,
    plan: &NeighborhoodPlan,
    scheme: &PenaltyScheme,
    config: &CptConfig,
) -> Result<Vec<ChangepointResult>> {
    check_inputs(data, model, plan, scheme)?;
    let l = config.min_len;
    if l < 1 || data.n() < 2 * l {
        return Err(Error::invalid(format!(
            "n = {} is too short for minimum segment length {l}",
            data.n()
        )));
    }
    let global = column_means(data);
    let mut found = Vec::new();
    let mut stack = vec![(0, data.n())];
    while let Some((a, b)) = stack.pop() {
        if b - a < 2 * l || b - a < 2 {
            continue;
        }
        let sub = data.slice_rows(a, b)?;
        let centre = match config.baseline {
            BaselineMode::SegmentMean => column_means(&sub),
            BaselineMode::GlobalMean => global.clone(),
        };
        let local;
        let scheme_here = match config.penalty_mode {
            PenaltyMode::Global => scheme,
            PenaltyMode::PerSegment => {
                local = default_penalties(b - a, data.p(), scheme.scale_b(), scheme.scale_b_point())?;
                &local
            }
        };
        let res = detect_single_centred(&sub, model, plan, scheme_here, l, &centre)?;
        if res.detected {
            let tau = a + res.tau;
            stack.push((a, tau));
            stack.push((tau, b));
            found.push(ChangepointResult { tau, ..res });
        }
    }
    found.sort_by_key(|c| c.tau);
    Ok(found)
}
