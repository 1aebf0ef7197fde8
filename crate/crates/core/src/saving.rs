//! Savings of a candidate segment `(s, e]`: exact subset-restricted savings,
//! the subset-truncated approximation as a binary quadratic program, and the
//! error bound of that approximation.
//!
//! Variable subsets in this module are 0-based and sorted.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::bqp::{BandedSolver, BqpInstance};
use crate::error::{Error, Result};
use crate::graph::NeighborhoodPlan;
use crate::linalg::{symmetric_eigen, BandMatrix, Matrix};
use crate::model::{DataMatrix, PenaltyScheme};

/// Centred mean of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStats {
    pub mean: Vec<f64>,
    pub length: usize,
}

impl SegmentStats {
    pub fn new(mean: Vec<f64>, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::invalid("segment length must be positive"));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("segment mean is not finite"));
        }
        Ok(Self { mean, length })
    }
}

/// Running sum with Neumaier compensation.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }
}

/// Mean of `(x_t - mu0)` over `t = s+1..=e` computed directly.
pub fn segment_stats(data: &DataMatrix, mu0: &[f64], s: usize, e: usize) -> Result<SegmentStats> {
    check_window(s, e, data.n())?;
    check_len(mu0.len(), data.p())?;
    let mut acc = vec![CompensatedSum::default(); data.p()];
    for t in s..e {
        for ((a, &x), &m) in acc.iter_mut().zip(data.row(t)).zip(mu0) {
            a.add(x - m);
        }
    }
    let len = (e - s) as f64;
    let mean = acc.iter().map(|a| (a.sum + a.carry) / len).collect();
    SegmentStats::new(mean, e - s)
}

/// Compensated cumulative sums of the centred data, answering segment-mean
/// queries in `O(p)`.
#[derive(Debug, Clone)]
pub struct SegmentMeans {
    n: usize,
    p: usize,
    sums: Vec<f64>,
    carries: Vec<f64>,
}

impl SegmentMeans {
    pub fn new(data: &DataMatrix, mu0: &[f64]) -> Result<Self> {
        let (n, p) = (data.n(), data.p());
        check_len(mu0.len(), p)?;
        let mut sums = vec![0.0; (n + 1) * p];
        let mut carries = vec![0.0; (n + 1) * p];
        let mut acc = vec![CompensatedSum::default(); p];
        for t in 0..n {
            let base = (t + 1) * p;
            for (j, a) in acc.iter_mut().enumerate() {
                a.add(data.row(t)[j] - mu0[j]);
                sums[base + j] = a.sum;
                carries[base + j] = a.carry;
            }
        }
        Ok(Self { n, p, sums, carries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Writes the mean over `(s, e]` into `out`.
    pub fn mean_into(&self, s: usize, e: usize, out: &mut [f64]) -> Result<()> {
        check_window(s, e, self.n)?;
        let len = (e - s) as f64;
        let (a, b) = (s * self.p, e * self.p);
        for (j, o) in out.iter_mut().enumerate().take(self.p) {
            let diff = (self.sums[b + j] - self.sums[a + j]) + (self.carries[b + j] - self.carries[a + j]);
            *o = diff / len;
        }
        Ok(())
    }

    pub fn stats(&self, s: usize, e: usize) -> Result<SegmentStats> {
        let mut mean = vec![0.0; self.p];
        self.mean_into(s, e, &mut mean)?;
        SegmentStats::new(mean, e - s)
    }
}

fn check_window(s: usize, e: usize, n: usize) -> Result<()> {
    if s >= e || e > n {
        return Err(Error::invalid(format!("empty or out-of-range segment ({s}, {e}] for n = {n}")));
    }
    Ok(())
}

fn check_len(got: usize, p: usize) -> Result<()> {
    if got != p {
        return Err(Error::invalid(format!("vector of length {got} where {p} was expected")));
    }
    Ok(())
}

fn check_subset(subset: &[usize], p: usize) -> Result<()> {
    if subset.windows(2).any(|w| w[0] >= w[1]) || subset.last().is_some_and(|&j| j >= p) {
        return Err(Error::invalid("subset must be sorted, unique and within 0..p"));
    }
    Ok(())
}

fn complement(subset: &[usize], p: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(p - subset.len());
    let mut k = 0;
    for j in 0..p {
        if k < subset.len() && subset[k] == j {
            k += 1;
        } else {
            out.push(j);
        }
    }
    out
}

/// Maximum likelihood estimate of the mean over `subset` when the remaining
/// components are held at zero: `x̄_J + Q_JJ^{-1} Q_{J,Jc} x̄_Jc`.
pub fn subset_mle(q: &Matrix, mean: &[f64], subset: &[usize]) -> Result<Vec<f64>> {
    let p = q.rows();
    check_len(mean.len(), p)?;
    check_subset(subset, p)?;
    if subset.is_empty() {
        return Err(Error::invalid("subset must be non-empty"));
    }
    let rest = complement(subset, p);
    let x_j: Vec<f64> = subset.iter().map(|&j| mean[j]).collect();
    if rest.is_empty() {
        return Ok(x_j);
    }
    let x_rest: Vec<f64> = rest.iter().map(|&j| mean[j]).collect();
    let rhs = q.select(subset, &rest).mul_vec(&x_rest);
    let chol = q
        .select(subset, subset)
        .cholesky()
        .map_err(|_| Error::numeric("Q_JJ is not positive definite"))?;
    let shift = chol.solve(&rhs);
    Ok(x_j.iter().zip(&shift).map(|(a, b)| a + b).collect())
}

/// `L x̄ᵀQx̄`, the saving of the full set (where the exact and approximate
/// estimators coincide).
fn full_saving(q: &BandMatrix, mean: &[f64], length: usize) -> f64 {
    length as f64 * q.quad_form(mean)
}

/// Exact saving `L (2x̄ - μ̂)ᵀ Q μ̂` with `μ̂` the subset-restricted MLE.
pub fn exact_saving(q: &Matrix, stats: &SegmentStats, subset: &[usize]) -> Result<f64> {
    let p = q.rows();
    check_len(stats.mean.len(), p)?;
    check_subset(subset, p)?;
    if subset.is_empty() {
        return Ok(0.0);
    }
    if subset.len() == p {
        return Ok(full_saving(&BandMatrix::from_dense(q, p - 1), &stats.mean, stats.length));
    }
    let est = subset_mle(q, &stats.mean, subset)?;
    let mut mu = vec![0.0; p];
    for (&j, &v) in subset.iter().zip(&est) {
        mu[j] = v;
    }
    let lhs: Vec<f64> = stats.mean.iter().zip(&mu).map(|(x, m)| 2.0 * x - m).collect();
    Ok(stats.length as f64 * q.bilinear(&lhs, &mu))
}

/// Approximate saving `L (2x̄ - x̄∘u)ᵀ Q (x̄∘u)` of the truncated mean.
pub fn truncated_saving(q: &BandMatrix, stats: &SegmentStats, subset: &[usize]) -> Result<f64> {
    let p = q.dim();
    check_len(stats.mean.len(), p)?;
    check_subset(subset, p)?;
    let mut v = vec![0.0; p];
    for &j in subset {
        v[j] = stats.mean[j];
    }
    let qv = q.mul_vec(&v);
    let lhs: f64 = stats
        .mean
        .iter()
        .zip(&v)
        .zip(&qv)
        .map(|((x, vi), qi)| (2.0 * x - vi) * qi)
        .sum();
    Ok(stats.length as f64 * lhs)
}

/// BQP whose objective at `u` is `Σ_k w_k (2x̄_k - x̄_k∘u)ᵀQ(x̄_k∘u) - β|u| + c`
/// for the weighted means `(w_k, x̄_k)`.
pub fn build_weighted_bqp(q: &BandMatrix, parts: &[(f64, &[f64])], beta: f64, c: f64) -> Result<BqpInstance> {
    let p = q.dim();
    let r = q.bandwidth();
    let mut a = BandMatrix::zeros(p, r);
    let mut b = vec![-beta; p];
    for &(w, mean) in parts {
        check_len(mean.len(), p)?;
        let qx = q.mul_vec(mean);
        for i in 0..p {
            b[i] += 2.0 * w * mean[i] * qx[i];
            for j in i.saturating_sub(r)..=i {
                let qij = q.get(i, j);
                if qij != 0.0 {
                    let v = a.get(i, j) - w * mean[i] * mean[j] * qij;
                    a.set(i, j, v)?;
                }
            }
        }
    }
    BqpInstance::new(a, b, c)
}

/// Sparse-regime BQP of a segment: `A = -L(x̄x̄ᵀ∘Q)`, `b = 2L(x̄∘Qx̄) - β`,
/// `c = -α_sparse`.
pub fn build_anomaly_bqp(q: &BandMatrix, stats: &SegmentStats, scheme: &PenaltyScheme) -> Result<BqpInstance> {
    build_weighted_bqp(
        q,
        &[(stats.length as f64, &stats.mean)],
        scheme.beta(),
        -scheme.alpha_sparse(),
    )
}

/// Sparse-regime BQP of a single changepoint splitting the data into
/// `left` and `right`, both centred on the overall mean.
pub fn build_cpt_bqp(
    q: &BandMatrix,
    left: &SegmentStats,
    right: &SegmentStats,
    scheme: &PenaltyScheme,
) -> Result<BqpInstance> {
    build_weighted_bqp(
        q,
        &[
            (left.length as f64, &left.mean),
            (right.length as f64, &right.mean),
        ],
        scheme.beta(),
        -scheme.alpha_sparse(),
    )
}

/// Which penalty branch produced a penalised saving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Sparse,
    Dense,
}

/// A penalised saving with its maximising subset (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct SavingResult {
    pub value: f64,
    pub subset: Vec<usize>,
    pub regime: Regime,
}

/// Chooses between the sparse BQP optimum and the dense value. The sparse
/// branch wins ties and is only eligible when the solver ran to completion.
pub(crate) fn combine_regimes(
    solver: &mut BandedSolver,
    instance: &BqpInstance,
    plan: &NeighborhoodPlan,
    scheme: &PenaltyScheme,
    dense_value: f64,
) -> Result<SavingResult> {
    let sparse = solver.solve(instance, plan, scheme.k_star())?;
    if !sparse.early_stopped && sparse.value >= dense_value {
        return Ok(SavingResult {
            value: sparse.value,
            subset: sparse.support(),
            regime: Regime::Sparse,
        });
    }
    Ok(SavingResult {
        value: dense_value,
        subset: (0..instance.dim()).collect(),
        regime: Regime::Dense,
    })
}

/// Approximate penalised saving `max_J [S̃(J) - P(|J|)]` of a segment, reusing
/// the buffers of `solver`.
pub fn approx_saving_with(
    solver: &mut BandedSolver,
    q: &BandMatrix,
    plan: &NeighborhoodPlan,
    stats: &SegmentStats,
    scheme: &PenaltyScheme,
) -> Result<SavingResult> {
    let instance = build_anomaly_bqp(q, stats, scheme)?;
    let dense = full_saving(q, &stats.mean, stats.length) - scheme.alpha_dense();
    combine_regimes(solver, &instance, plan, scheme, dense)
}

/// Approximate penalised saving of a segment: the larger of the sparse BQP
/// optimum and the exact full-set saving minus `α_dense`.
pub fn approx_saving(
    q: &BandMatrix,
    plan: &NeighborhoodPlan,
    stats: &SegmentStats,
    scheme: &PenaltyScheme,
) -> Result<SavingResult> {
    approx_saving_with(&mut BandedSolver::new(), q, plan, stats, scheme)
}

/// Upper bound `L λ_max(QW(Ĵ)) ‖x̄_{Ĵc}‖²` on the approximation error when
/// the exact penalised saving is maximised by `j_hat`.
///
/// `QW(Ĵ)` is block triangular with the symmetric positive semi-definite
/// block `Q_{Jc,J} Q_JJ^{-1} Q_{J,Jc}` on the diagonal, so its largest
/// eigenvalue is that of the block, computed here by a symmetric
/// eigendecomposition.
pub fn approximation_error_bound(q: &Matrix, stats: &SegmentStats, j_hat: &[usize]) -> Result<f64> {
    let p = q.rows();
    check_len(stats.mean.len(), p)?;
    check_subset(j_hat, p)?;
    if j_hat.is_empty() || j_hat.len() == p {
        return Ok(0.0);
    }
    let rest = complement(j_hat, p);
    let block = coupling_block(q, j_hat, &rest)?;
    let (values, _) = symmetric_eigen(&block)?;
    let lambda = values.last().copied().unwrap_or(0.0).max(0.0);
    let norm2: f64 = rest.iter().map(|&j| stats.mean[j] * stats.mean[j]).sum();
    Ok(stats.length as f64 * lambda * norm2)
}

/// `Q_{Jc,J} Q_JJ^{-1} Q_{J,Jc}`.
fn coupling_block(q: &Matrix, subset: &[usize], rest: &[usize]) -> Result<Matrix> {
    let chol = q
        .select(subset, subset)
        .cholesky()
        .map_err(|_| Error::numeric("Q_JJ is not positive definite"))?;
    let cross = q.select(subset, rest);
    let k = rest.len();
    let mut solved = Matrix::zeros(subset.len(), k);
    for c in 0..k {
        let col = chol.solve(&cross.column(c));
        for (r, v) in col.into_iter().enumerate() {
            solved[(r, c)] = v;
        }
    }
    let mut block = cross.transpose().mul(&solved)?;
    block.symmetrize();
    Ok(block)
}
