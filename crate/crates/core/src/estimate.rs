//! Robust estimation of the baseline mean, covariance and a precision matrix
//! with a prescribed sparsity pattern, and the whitening transform.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::linalg::{spectral_map, symmetric_eigen, Matrix};
use crate::model::{DataMatrix, PrecisionModel};
use crate::normal::inverse_normal_cdf;

/// Consistency constant making the median absolute deviation estimate the
/// standard deviation of Gaussian data.
pub const MAD_CONSISTENCY: f64 = 1.4826;

/// Median; the mean of the two central order statistics for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `constant · median(|x - median(x)|)`.
pub fn mad(values: &[f64], constant: f64) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|x| (x - m).abs()).collect();
    constant * median(&dev)
}

/// Per-series medians.
pub fn robust_baseline(data: &DataMatrix) -> Vec<f64> {
    (0..data.p()).map(|j| median(&data.column(j))).collect()
}

/// Ranks `1..=n` with ties replaced by their average rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn normal_scores(x: &[f64]) -> Vec<f64> {
    let denom = x.len() as f64 + 1.0;
    average_ranks(x)
        .into_iter()
        .map(|r| inverse_normal_cdf(r / denom))
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// Pearson correlation of the normal scores `Φ^{-1}(R/(n+1))` of the ranks.
pub fn gaussian_rank_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid("series lengths differ"));
    }
    if x.len() < 3 {
        return Err(Error::invalid("at least three observations are required"));
    }
    pearson(&normal_scores(x), &normal_scores(y))
        .ok_or_else(|| Error::UndefinedCorrelation("constant series".into()))
}

/// `s_ij = mad_i · mad_j · r_Gauss(x_i, x_j)` with `mad` scaled by
/// `mad_constant`.
pub fn robust_covariance(data: &DataMatrix, mad_constant: f64) -> Result<Matrix> {
    let (n, p) = (data.n(), data.p());
    if n < 3 {
        return Err(Error::invalid("robust covariance needs n >= 3"));
    }
    if !(mad_constant > 0.0 && mad_constant.is_finite()) {
        return Err(Error::invalid("mad constant must be positive"));
    }
    let columns: Vec<Vec<f64>> = (0..p).map(|j| data.column(j)).collect();
    let mut scales = Vec::with_capacity(p);
    for (j, col) in columns.iter().enumerate() {
        let s = mad(col, mad_constant);
        if !(s > 0.0) {
            return Err(Error::UndefinedCorrelation(format!(
                "column '{}' has zero median absolute deviation",
                data.column_names()[j]
            )));
        }
        scales.push(s);
    }
    let scores: Vec<Vec<f64>> = columns.iter().map(|c| normal_scores(c)).collect();
    let mut s = Matrix::zeros(p, p);
    for i in 0..p {
        s[(i, i)] = scales[i] * scales[i];
        for j in 0..i {
            let r = pearson(&scores[i], &scores[j]).ok_or_else(|| {
                Error::UndefinedCorrelation(format!(
                    "columns '{}' and '{}' have no rank variation",
                    data.column_names()[i],
                    data.column_names()[j]
                ))
            })?;
            let v = scales[i] * scales[j] * r;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

/// Clips the eigenvalues of `s` from below at `1e-8 · tr(s)/p`. Returns the
/// (possibly) repaired matrix and whether any eigenvalue was raised.
pub fn repair_positive_definite(s: &Matrix) -> Result<(Matrix, bool)> {
    let p = s.rows();
    let floor = 1e-8 * s.trace() / p as f64;
    let (values, _) = symmetric_eigen(s)?;
    if values.first().is_some_and(|&l| l >= floor) {
        return Ok((s.clone(), false));
    }
    log::warn!(
        "covariance estimate is not positive definite (smallest eigenvalue {:e}); clipping at {:e}",
        values.first().copied().unwrap_or(f64::NAN),
        floor
    );
    Ok((spectral_map(s, |l| l.max(floor))?, true))
}

/// Controls of the constrained precision fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the largest `|(Θ^{-1})_ij - s_ij|` over the
    /// free entries, relative to `max(1, max_i s_ii)`.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_sweeps: 500,
        }
    }
}

/// Result of [`structured_precision_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionFit {
    pub precision: PrecisionModel,
    pub sweeps: usize,
    pub max_mismatch: f64,
    /// `log det Θ - tr(SΘ)` after every sweep.
    pub objective_trace: Vec<f64>,
}

/// Gaussian maximum likelihood precision with `Θ_ij = 0` wherever `w_ij` is
/// false, using default [`FitOptions`].
pub fn structured_precision(s: &Matrix, w: &Adjacency) -> Result<PrecisionModel> {
    structured_precision_with(s, w, FitOptions::default()).map(|f| f.precision)
}

/// Covariance selection by iterative proportional fitting over the edges of
/// `w` (and the isolated vertices). Each step matches `(Θ^{-1})_CC` to `S_CC`
/// on one clique `C`, which maximises `log det Θ - tr(SΘ)` over `Θ_CC`.
pub fn structured_precision_with(s: &Matrix, w: &Adjacency, opts: FitOptions) -> Result<PrecisionFit> {
    let p = s.rows();
    if !s.is_square() || w.p() != p {
        return Err(Error::invalid("covariance and adjacency dimensions differ"));
    }
    if !w.is_symmetric() {
        return Err(Error::invalid("adjacency is not symmetric"));
    }
    if !s.is_symmetric(1e-10 * (1.0 + s.trace().abs())) {
        return Err(Error::invalid("covariance is not symmetric"));
    }
    let mut s = s.clone();
    s.symmetrize();
    s.cholesky()
        .map_err(|_| Error::NotPositiveDefinite("covariance estimate is not positive definite".into()))?;
    let objective = |theta: &Matrix| log_likelihood(&s, theta);
    let edges = w.edge_count();
    if edges == p * (p - 1) / 2 || edges == 0 {
        let theta = if edges == 0 {
            Matrix::from_diagonal(&s.diagonal().iter().map(|v| 1.0 / v).collect::<Vec<_>>())
        } else {
            s.spd_inverse()?
        };
        let obj = objective(&theta)?;
        return Ok(PrecisionFit {
            precision: PrecisionModel::new(vec![0.0; p], theta)?,
            sweeps: 0,
            max_mismatch: 0.0,
            objective_trace: vec![obj],
        });
    }

    let mut cliques: Vec<(usize, Option<usize>)> = Vec::new();
    for i in 0..p {
        let nb = w.neighbors(i);
        if nb.is_empty() {
            cliques.push((i, None));
        }
        for j in nb.into_iter().filter(|&j| j > i) {
            cliques.push((i, Some(j)));
        }
    }
    let scale = s.diagonal().into_iter().fold(1.0, f64::max);
    let mut theta = Matrix::from_diagonal(&s.diagonal().iter().map(|v| 1.0 / v).collect::<Vec<_>>());
    let mut sigma = Matrix::from_diagonal(&s.diagonal());
    let mut trace = Vec::new();
    let mut mismatch = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        for &(i, j) in &cliques {
            match j {
                None => fit_singleton(&mut theta, &mut sigma, &s, i),
                Some(j) => fit_pair(&mut theta, &mut sigma, &s, i, j)?,
            }
        }
        // refresh Σ to stop rank-update drift
        sigma = theta
            .spd_inverse()
            .map_err(|_| Error::numeric("precision iterate lost positive definiteness"))?;
        trace.push(objective(&theta)?);
        mismatch = 0.0;
        for i in 0..p {
            mismatch = f64::max(mismatch, (sigma[(i, i)] - s[(i, i)]).abs());
            for j in w.neighbors(i) {
                mismatch = f64::max(mismatch, (sigma[(i, j)] - s[(i, j)]).abs());
            }
        }
        if mismatch < opts.tolerance * scale {
            return Ok(PrecisionFit {
                precision: PrecisionModel::new(vec![0.0; p], theta)?,
                sweeps: sweep,
                max_mismatch: mismatch,
                objective_trace: trace,
            });
        }
    }
    let gap: f64 = (0..p)
        .map(|i| (0..p).map(|k| s[(i, k)] * theta[(k, i)]).sum::<f64>())
        .sum::<f64>()
        - p as f64;
    Err(Error::NonConvergence {
        max_mismatch: mismatch,
        duality_gap: gap,
        sweeps: opts.max_sweeps,
    })
}

fn fit_singleton(theta: &mut Matrix, sigma: &mut Matrix, s: &Matrix, i: usize) {
    let p = theta.rows();
    let (sii, target) = (sigma[(i, i)], s[(i, i)]);
    theta[(i, i)] += 1.0 / target - 1.0 / sii;
    // Σ ← Σ - Σ_{:,i} (sii - target)/sii² Σ_{i,:}
    let k = (sii - target) / (sii * sii);
    let col = sigma.column(i);
    for a in 0..p {
        for b in 0..p {
            sigma[(a, b)] -= col[a] * k * col[b];
        }
    }
}

fn inv2(m: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det > 0.0) {
        return Err(Error::numeric("2x2 block is not positive definite"));
    }
    Ok([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

fn fit_pair(theta: &mut Matrix, sigma: &mut Matrix, s: &Matrix, i: usize, j: usize) -> Result<()> {
    let p = theta.rows();
    let sig = [[sigma[(i, i)], sigma[(i, j)]], [sigma[(j, i)], sigma[(j, j)]]];
    let tgt = [[s[(i, i)], s[(i, j)]], [s[(j, i)], s[(j, j)]]];
    let sig_inv = inv2(sig)?;
    let tgt_inv = inv2(tgt)?;
    let idx = [i, j];
    for a in 0..2 {
        for b in 0..2 {
            theta[(idx[a], idx[b])] += tgt_inv[a][b] - sig_inv[a][b];
        }
    }
    // K = Σ_CC^{-1} (Σ_CC - S_CC) Σ_CC^{-1};  Σ ← Σ - Σ_{:,C} K Σ_{C,:}
    let mut diff = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            diff[a][b] = sig[a][b] - tgt[a][b];
        }
    }
    let mut k = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut v = 0.0;
            for c in 0..2 {
                for d in 0..2 {
                    v += sig_inv[a][c] * diff[c][d] * sig_inv[d][b];
                }
            }
            k[a][b] = v;
        }
    }
    let ci = sigma.column(i);
    let cj = sigma.column(j);
    for a in 0..p {
        let left = [ci[a] * k[0][0] + cj[a] * k[1][0], ci[a] * k[0][1] + cj[a] * k[1][1]];
        for b in 0..p {
            sigma[(a, b)] -= left[0] * ci[b] + left[1] * cj[b];
        }
    }
    Ok(())
}

/// `S^{-1/2} x_t` for every row.
pub fn whiten(data: &DataMatrix, s: &Matrix) -> Result<DataMatrix> {
    let p = data.p();
    if s.rows() != p || !s.is_square() {
        return Err(Error::invalid("covariance dimension does not match the data"));
    }
    let (values, _) = symmetric_eigen(s)?;
    if !values.first().is_some_and(|&l| l > 0.0) {
        return Err(Error::NotPositiveDefinite("whitening covariance is not positive definite".into()));
    }
    let root = spectral_map(s, |l| 1.0 / sqrt(l))?;
    let mut out = Vec::with_capacity(data.n() * p);
    for t in 0..data.n() {
        out.extend(root.mul_vec(data.row(t)));
    }
    DataMatrix::new(Matrix::from_row_major(data.n(), p, out)?, data.column_names().to_vec())
}

/// Robust baseline, covariance and structured precision of a data set.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustEstimates {
    pub mu0: Vec<f64>,
    pub covariance: Matrix,
    /// The covariance had to be repaired by eigenvalue clipping.
    pub repaired: bool,
    pub precision: PrecisionModel,
}

/// Estimates everything the detector needs from (mostly) baseline data.
pub fn robust_estimates(
    data: &DataMatrix,
    w: &Adjacency,
    mad_constant: f64,
    repair: bool,
    opts: FitOptions,
) -> Result<RobustEstimates> {
    let mu0 = robust_baseline(data);
    let raw = robust_covariance(data, mad_constant)?;
    let (covariance, repaired) = if repair {
        repair_positive_definite(&raw)?
    } else {
        (raw, false)
    };
    let fit = structured_precision_with(&covariance, w, opts)?;
    let precision = fit.precision.with_mu0(mu0.clone())?;
    Ok(RobustEstimates {
        mu0,
        covariance,
        repaired,
        precision,
    })
}

/// Gaussian log-likelihood objective `log det Θ - tr(SΘ)`.
pub fn log_likelihood(s: &Matrix, theta: &Matrix) -> Result<f64> {
    let chol = theta.cholesky()?;
    let p = s.rows();
    let tr: f64 = (0..p).map(|i| (0..p).map(|k| s[(i, k)] * theta[(k, i)]).sum::<f64>()).sum();
    Ok(chol.log_det() - tr)
}
