//! Observations, precision models, penalties and detection results.
//!
//! Time follows the segment convention `(s, e]`: a segment with start `s` and
//! end `e` covers observations `s + 1, ..., e` (1-based), which are rows
//! `s..e` of the data. Variables are 0-based inside the computational
//! modules; reported anomalies ([`AnomalySet`]) list them 1-based.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::linalg::{BandMatrix, Matrix};

/// Zero test used to derive the sparsity pattern of a precision matrix.
pub const PATTERN_TOL: f64 = 1e-12;
/// Symmetry tolerance accepted at [`PrecisionModel`] construction.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// An `n × p` panel of observations with time-ordered rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Matrix,
    column_names: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: Matrix, column_names: Vec<String>) -> Result<Self> {
        let (n, p) = (values.rows(), values.cols());
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 observations, got {n}")));
        }
        if p < 1 {
            return Err(Error::invalid("need at least one variable"));
        }
        if column_names.len() != p {
            return Err(Error::invalid(format!(
                "{} column names for {p} columns",
                column_names.len()
            )));
        }
        for t in 0..n {
            for (j, v) in values.row(t).iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::invalid(format!(
                        "non-finite value at time {} in column '{}'",
                        t + 1,
                        column_names[j]
                    )));
                }
            }
        }
        Ok(Self {
            values,
            column_names,
        })
    }

    /// Data with generated column names `x1, ..., xp`.
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        let names = (1..=values.cols()).map(|j| format!("x{j}")).collect();
        Self::new(values, names)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Row for 0-based time index `t`.
    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        self.values.row(t)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j)
    }

    /// Rows `start..end` as a new panel.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if end > self.n() || start >= end {
            return Err(Error::invalid("empty or out-of-range row slice"));
        }
        let p = self.p();
        let mut data = Vec::with_capacity((end - start) * p);
        for t in start..end {
            data.extend_from_slice(self.row(t));
        }
        let values = Matrix::from_row_major(end - start, p, data)?;
        Self::new(values, self.column_names.clone())
    }
}

/// Baseline mean and common precision matrix of the Gaussian model.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionModel {
    mu0: Vec<f64>,
    q: Matrix,
    band: BandMatrix,
    bandwidth: usize,
    adjacency: Adjacency,
}

impl PrecisionModel {
    /// Validates symmetry and positive definiteness and derives the
    /// sparsity pattern and bandwidth.
    pub fn new(mu0: Vec<f64>, q: Matrix) -> Result<Self> {
        let p = q.rows();
        if !q.is_square() || p == 0 {
            return Err(Error::invalid("precision matrix must be square and non-empty"));
        }
        if mu0.len() != p {
            return Err(Error::invalid(format!(
                "baseline mean has length {} but precision is {p}x{p}",
                mu0.len()
            )));
        }
        if !q.all_finite() || mu0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite entries in precision model"));
        }
        if !q.is_symmetric(SYMMETRY_TOL) {
            return Err(Error::invalid("precision matrix is not symmetric"));
        }
        let mut q = q;
        q.symmetrize();
        q.cholesky()?;
        let adjacency = Adjacency::from_pattern(&q, PATTERN_TOL);
        let bandwidth = adjacency.bandwidth();
        let band = BandMatrix::from_dense(&q, bandwidth);
        Ok(Self {
            mu0,
            q,
            band,
            bandwidth,
            adjacency,
        })
    }

    /// Zero mean and identity precision.
    pub fn identity(p: usize) -> Result<Self> {
        Self::new(alloc::vec![0.0; p], Matrix::identity(p))
    }

    /// Same precision with a different baseline mean.
    pub fn with_mu0(&self, mu0: Vec<f64>) -> Result<Self> {
        if mu0.len() != self.p() {
            return Err(Error::invalid("baseline mean length mismatch"));
        }
        Ok(Self {
            mu0,
            ..self.clone()
        })
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.q.rows()
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    /// Banded copy of `Q`, used by the linear-in-`p` saving computations.
    pub fn band(&self) -> &BandMatrix {
        &self.band
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    /// `Q^{-1}`.
    pub fn covariance(&self) -> Result<Matrix> {
        self.q.spd_inverse()
    }
}

/// Piecewise linear subset-size penalty `min(α_sparse + β|J|, α_dense)`
/// together with the point-anomaly slope `β'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyScheme {
    p: usize,
    alpha_sparse: f64,
    alpha_dense: f64,
    beta: f64,
    beta_point: f64,
    scale_b: f64,
    scale_b_point: f64,
    psi: f64,
}

impl PenaltyScheme {
    /// Scheme from explicit (already scaled) values.
    pub fn custom(
        p: usize,
        alpha_sparse: f64,
        alpha_dense: f64,
        beta: f64,
        beta_point: f64,
        psi: f64,
    ) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("p must be positive"));
        }
        for (name, v) in [
            ("alpha_sparse", alpha_sparse),
            ("alpha_dense", alpha_dense),
            ("beta", beta),
            ("beta_point", beta_point),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(Self {
            p,
            alpha_sparse,
            alpha_dense,
            beta,
            beta_point,
            scale_b: 1.0,
            scale_b_point: 1.0,
            psi,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn alpha_sparse(&self) -> f64 {
        self.alpha_sparse
    }

    pub fn alpha_dense(&self) -> f64 {
        self.alpha_dense
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn beta_point(&self) -> f64 {
        self.beta_point
    }

    pub fn scale_b(&self) -> f64 {
        self.scale_b
    }

    pub fn scale_b_point(&self) -> f64 {
        self.scale_b_point
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    /// Boundary between the sparse and dense regimes; `+∞` when `β = 0`.
    pub fn k_star(&self) -> f64 {
        if self.beta > 0.0 {
            (self.alpha_dense - self.alpha_sparse) / self.beta
        } else {
            f64::INFINITY
        }
    }

    /// Penalty for `j` affected variables, `j = 0` included.
    #[inline]
    pub fn penalty(&self, j: usize) -> f64 {
        (self.alpha_sparse + self.beta * j as f64).min(self.alpha_dense)
    }

    /// Largest penalty any subset can receive.
    pub fn max_penalty(&self) -> f64 {
        self.alpha_dense.max(self.penalty(self.p))
    }

    /// Copy with the collective penalties multiplied by `b` and `β'` by `b'`,
    /// relative to the unscaled values.
    pub fn rescaled(&self, scale_b: f64, scale_b_point: f64) -> Result<Self> {
        check_scale(scale_b)?;
        check_scale(scale_b_point)?;
        let rb = scale_b / self.scale_b;
        let rp = scale_b_point / self.scale_b_point;
        Ok(Self {
            alpha_sparse: self.alpha_sparse * rb,
            alpha_dense: self.alpha_dense * rb,
            beta: self.beta * rb,
            beta_point: self.beta_point * rp,
            scale_b,
            scale_b_point,
            ..*self
        })
    }
}

fn check_scale(v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::invalid(format!("scale factors must be positive, got {v}")));
    }
    Ok(())
}

/// Default penalties for `n` observations of `p` variables, with the
/// collective penalties scaled by `scale_b` and `β'` by `scale_b_point`.
///
/// With `ψ = log n`: `α_sparse = 2ψ`, `β = 2 log p`,
/// `α_dense = p + 2√(pψ) + 2ψ` and `β' = 2 log p + 2ψ`.
pub fn default_penalties(n: usize, p: usize, scale_b: f64, scale_b_point: f64) -> Result<PenaltyScheme> {
    if n < 2 {
        return Err(Error::invalid(format!("n must be at least 2, got {n}")));
    }
    if p < 1 {
        return Err(Error::invalid("p must be positive"));
    }
    check_scale(scale_b)?;
    check_scale(scale_b_point)?;
    let psi = libm::log(n as f64);
    let pf = p as f64;
    let log_p = libm::log(pf);
    Ok(PenaltyScheme {
        p,
        alpha_sparse: scale_b * 2.0 * psi,
        alpha_dense: scale_b * (pf + 2.0 * libm::sqrt(pf * psi) + 2.0 * psi),
        beta: scale_b * 2.0 * log_p,
        beta_point: scale_b_point * (2.0 * log_p + 2.0 * psi),
        scale_b,
        scale_b_point,
        psi,
    })
}

/// `min(α_sparse + β j, α_dense)` for `1 ≤ j ≤ p`.
pub fn penalty_of(scheme: &PenaltyScheme, j: usize) -> Result<f64> {
    if j < 1 || j > scheme.p {
        return Err(Error::invalid(format!(
            "subset size {j} outside 1..={}",
            scheme.p
        )));
    }
    Ok(scheme.penalty(j))
}

/// A candidate segment `(s, e]` with its length limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentWindow {
    pub s: usize,
    pub e: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl SegmentWindow {
    pub fn new(s: usize, e: usize, min_len: usize, max_len: usize, n: usize) -> Result<Self> {
        if min_len < 1 || e > n || s >= e {
            return Err(Error::invalid(format!("invalid segment ({s}, {e}] for n = {n}")));
        }
        let len = e - s;
        if len < min_len || len > max_len {
            return Err(Error::invalid(format!(
                "segment length {len} outside [{min_len}, {max_len}]"
            )));
        }
        Ok(Self { s, e, min_len, max_len })
    }

    pub fn len(&self) -> usize {
        self.e - self.s
    }

    pub fn is_empty(&self) -> bool {
        self.e == self.s
    }
}

/// A detected collective anomaly over `(s, e]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveAnomaly {
    pub s: usize,
    pub e: usize,
    /// Affected variables, 1-based and sorted.
    pub subset: Vec<usize>,
    /// Subset-restricted maximum likelihood estimate of the shifted mean,
    /// aligned with `subset`, on the original data scale.
    pub mean: Vec<f64>,
    pub saving: f64,
}

/// A detected point anomaly at 1-based time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointAnomaly {
    pub t: usize,
    /// Affected variables, 1-based and sorted.
    pub subset: Vec<usize>,
    pub saving: f64,
}

/// Output of the anomaly detector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnomalySet {
    pub collective: Vec<CollectiveAnomaly>,
    pub points: Vec<PointAnomaly>,
    /// Maximal penalised saving `C(n)`.
    pub total_cost: f64,
}

impl AnomalySet {
    pub fn is_empty(&self) -> bool {
        self.collective.is_empty() && self.points.is_empty()
    }

    /// Per-time anomalous flags (collective or point) for `n` observations.
    pub fn labels(&self, n: usize) -> Vec<bool> {
        let mut labels = alloc::vec![false; n];
        for a in &self.collective {
            for l in labels.iter_mut().take(a.e.min(n)).skip(a.s) {
                *l = true;
            }
        }
        for pt in &self.points {
            if pt.t >= 1 && pt.t <= n {
                labels[pt.t - 1] = true;
            }
        }
        labels
    }

    /// Checks the structural invariants for `n` observations, `p` variables
    /// and minimum collective length `min_len`.
    pub fn validate(&self, n: usize, p: usize, min_len: usize) -> Result<()> {
        let mut prev_end = 0;
        for a in &self.collective {
            if a.s < prev_end || a.e > n || a.e < a.s + min_len.max(2) {
                return Err(Error::invalid(format!("invalid collective anomaly ({}, {}]", a.s, a.e)));
            }
            check_subset(&a.subset, p)?;
            if a.mean.len() != a.subset.len() || !(a.saving > 0.0) {
                return Err(Error::invalid("collective anomaly record is inconsistent"));
            }
            prev_end = a.e;
        }
        let mut prev_t = 0;
        for pt in &self.points {
            if pt.t <= prev_t || pt.t > n || !(pt.saving > 0.0) {
                return Err(Error::invalid(format!("invalid point anomaly at {}", pt.t)));
            }
            check_subset(&pt.subset, p)?;
            if self.collective.iter().any(|a| pt.t > a.s && pt.t <= a.e) {
                return Err(Error::invalid(format!(
                    "point anomaly at {} lies inside a collective anomaly",
                    pt.t
                )));
            }
            prev_t = pt.t;
        }
        Ok(())
    }
}

fn check_subset(subset: &[usize], p: usize) -> Result<()> {
    if subset.is_empty()
        || subset.windows(2).any(|w| w[0] >= w[1])
        || subset.iter().any(|&j| j < 1 || j > p)
    {
        return Err(Error::invalid("subset must be sorted, unique and within 1..=p"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_penalties_n100_p10() {
        let s = default_penalties(100, 10, 1.0, 1.0).unwrap();
        let psi = 100f64.ln();
        assert!((s.psi() - 4.605170185988091).abs() < 1e-12);
        assert!((s.alpha_sparse() - 9.210340371976184).abs() < 1e-12);
        assert!((s.beta() - 4.605170185988092).abs() < 1e-12);
        let dense = 10.0 + 2.0 * (10.0 * psi).sqrt() + 2.0 * psi;
        assert!((s.alpha_dense() - dense).abs() < 1e-12);
        // direct evaluation gives 32.782621 (k* = 5.118656)
        assert!((s.alpha_dense() - 32.782621220806405).abs() < 1e-9);
        assert!((s.k_star() - 5.118655749260332).abs() < 1e-9);
        assert!((s.k_star() - (dense - 2.0 * psi) / (2.0 * 10f64.ln())).abs() < 1e-12);
        assert!((s.beta_point() - 13.81551).abs() < 1e-5);
    }

    #[test]
    fn default_penalties_single_variable() {
        let s = default_penalties(7, 1, 1.0, 1.0).unwrap();
        assert_eq!(s.beta(), 0.0);
        assert_eq!(s.k_star(), f64::INFINITY);
        // n = e^2 is not an integer; evaluate the closed forms at log n = 2
        let psi = 2.0f64;
        let dense = 1.0 + 2.0 * psi.sqrt() + 2.0 * psi;
        assert!((dense - (1.0 + 2.0 * 2f64.sqrt() + 4.0)).abs() < 1e-15);
        let exact = PenaltyScheme::custom(1, 2.0 * psi, dense, 0.0, 2.0 * psi, psi).unwrap();
        assert_eq!(exact.k_star(), f64::INFINITY);
        assert_eq!(exact.penalty(1), 4.0);
    }

    #[test]
    fn scaling_doubles_collective_penalties() {
        let one = default_penalties(100, 10, 1.0, 1.0).unwrap();
        let two = default_penalties(100, 10, 2.0, 1.0).unwrap();
        assert_eq!(two.alpha_sparse(), 2.0 * one.alpha_sparse());
        assert_eq!(two.alpha_dense(), 2.0 * one.alpha_dense());
        assert_eq!(two.beta(), 2.0 * one.beta());
        assert_eq!(two.beta_point(), one.beta_point());
        assert!((two.k_star() - one.k_star()).abs() < 1e-12);
        let re = one.rescaled(2.0, 1.0).unwrap();
        assert!((re.alpha_dense() - two.alpha_dense()).abs() < 1e-12);
    }

    #[test]
    fn default_penalties_rejects_bad_input() {
        assert!(default_penalties(1, 10, 1.0, 1.0).is_err());
        assert!(default_penalties(100, 0, 1.0, 1.0).is_err());
        assert!(default_penalties(100, 10, 0.0, 1.0).is_err());
        assert!(default_penalties(100, 10, 1.0, -1.0).is_err());
    }

    #[test]
    fn penalty_of_branches() {
        let s = default_penalties(100, 10, 1.0, 1.0).unwrap();
        assert!((penalty_of(&s, 1).unwrap() - 13.81551).abs() < 1e-5);
        for j in 6..=10 {
            assert_eq!(penalty_of(&s, j).unwrap(), s.alpha_dense());
        }
        assert!(penalty_of(&s, 0).is_err());
        assert!(penalty_of(&s, 11).is_err());
        let flat = PenaltyScheme::custom(3, 2.0, 5.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(penalty_of(&flat, 2).unwrap(), 2.0);
    }

    #[test]
    fn data_matrix_rejects_nan() {
        let m = Matrix::from_rows(&[alloc::vec![1.0, f64::NAN], alloc::vec![0.0, 0.0]]).unwrap();
        assert!(DataMatrix::from_matrix(m).is_err());
        let short = Matrix::from_rows(&[alloc::vec![1.0]]).unwrap();
        assert!(DataMatrix::from_matrix(short).is_err());
    }

    #[test]
    fn precision_model_pattern_and_pd() {
        let q = Matrix::from_rows(&[
            alloc::vec![1.0, -0.5, 0.0],
            alloc::vec![-0.5, 2.0, -0.5],
            alloc::vec![0.0, -0.5, 1.0],
        ])
        .unwrap();
        let m = PrecisionModel::new(alloc::vec![0.0; 3], q).unwrap();
        assert_eq!(m.bandwidth(), 1);
        assert!(m.adjacency().get(0, 1));
        assert!(!m.adjacency().get(0, 2));
        let bad = Matrix::from_rows(&[alloc::vec![1.0, 2.0], alloc::vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            PrecisionModel::new(alloc::vec![0.0; 2], bad),
            Err(Error::NotPositiveDefinite(_))
        ));
        let asym = Matrix::from_rows(&[alloc::vec![1.0, 0.1], alloc::vec![0.0, 1.0]]).unwrap();
        assert!(PrecisionModel::new(alloc::vec![0.0; 2], asym).is_err());
    }
}
