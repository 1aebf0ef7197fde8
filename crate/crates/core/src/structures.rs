//! Precision matrices of the simulation models.

use alloc::format;
use alloc::vec;

use libm::sqrt;

use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::linalg::Matrix;
use crate::model::PrecisionModel;

/// Unstandardised CAR precision `diag(W1) - ρW`.
pub fn car_matrix(w: &Adjacency, rho: f64) -> Matrix {
    let p = w.p();
    let mut q = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if w.get(i, j) {
                q[(i, j)] = -rho;
                q[(i, i)] += 1.0;
            }
        }
    }
    q
}

/// CAR precision rescaled so that its inverse is a correlation matrix:
/// `D^{1/2} Q D^{1/2}` with `D = diag(Q^{-1})`.
pub fn car_precision(w: &Adjacency, rho: f64) -> Result<PrecisionModel> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("CAR correlation {rho} outside (0, 1)")));
    }
    let p = w.p();
    if let Some(i) = (0..p).find(|&i| w.neighbors(i).is_empty()) {
        return Err(Error::NotPositiveDefinite(format!(
            "variable {} has no neighbours, so diag(W1) - ρW is singular",
            i + 1
        )));
    }
    let q = car_matrix(w, rho);
    let cov = q
        .spd_inverse()
        .map_err(|_| Error::NotPositiveDefinite("CAR precision is not positive definite".into()))?;
    let d: vec::Vec<f64> = cov.diagonal().into_iter().map(sqrt).collect();
    let standardised = Matrix::from_fn(p, p, |i, j| d[i] * q[(i, j)] * d[j]);
    PrecisionModel::new(vec![0.0; p], standardised)
}

/// `(ρ11ᵀ + (1-ρ)I)^{-1}` in closed form.
pub fn constant_correlation_precision(p: usize, rho: f64) -> Result<PrecisionModel> {
    if p == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let lower = if p > 1 { -1.0 / (p as f64 - 1.0) } else { f64::NEG_INFINITY };
    if !(rho > lower && rho < 1.0) {
        return Err(Error::invalid(format!(
            "constant correlation {rho} outside ({lower}, 1) for p = {p}"
        )));
    }
    // (aI + ρ11ᵀ)^{-1} = I/a - ρ/(a(a + pρ)) 11ᵀ with a = 1 - ρ
    let a = 1.0 - rho;
    let off = -rho / (a * (a + p as f64 * rho));
    let q = Matrix::from_fn(p, p, |i, j| if i == j { 1.0 / a + off } else { off });
    PrecisionModel::new(vec![0.0; p], q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{banded_adjacency, lattice_adjacency};

    #[test]
    fn car_three_variables() {
        let w = banded_adjacency(3, 1).unwrap();
        let q = car_matrix(&w, 0.5);
        let expect = Matrix::from_rows(&[
            vec![1.0, -0.5, 0.0],
            vec![-0.5, 2.0, -0.5],
            vec![0.0, -0.5, 1.0],
        ])
        .unwrap();
        assert_eq!(q, expect);
        let model = car_precision(&w, 0.5).unwrap();
        let cov = model.covariance().unwrap();
        for i in 0..3 {
            assert!((cov[(i, i)] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn car_small_rho_is_nearly_independent() {
        let w = banded_adjacency(6, 1).unwrap();
        let cov = car_precision(&w, 1e-6).unwrap().covariance().unwrap();
        assert!(cov.max_abs_diff(&Matrix::identity(6)) < 1e-5);
    }

    #[test]
    fn study_grid_is_positive_definite() {
        for rho in [0.3, 0.5, 0.7, 0.9, 0.99] {
            for r in 1..=3 {
                let model = car_precision(&banded_adjacency(10, r).unwrap(), rho).unwrap();
                assert_eq!(model.bandwidth(), r);
            }
            car_precision(&lattice_adjacency(4).unwrap(), rho).unwrap();
            constant_correlation_precision(10, rho).unwrap();
        }
    }

    #[test]
    fn car_rejects_isolated_variables() {
        let w = banded_adjacency(4, 0).unwrap();
        assert!(car_precision(&w, 0.5).is_err());
        assert!(car_precision(&banded_adjacency(4, 1).unwrap(), 1.0).is_err());
    }

    #[test]
    fn constant_correlation_inverse() {
        assert_eq!(constant_correlation_precision(4, 0.0).unwrap().q(), &Matrix::identity(4));
        let q = constant_correlation_precision(2, 0.5).unwrap();
        let expect = [[1.0 / 0.75, -0.5 / 0.75], [-0.5 / 0.75, 1.0 / 0.75]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((q.q()[(i, j)] - expect[i][j]).abs() < 1e-12);
            }
        }
        for (p, rho) in [(3, 0.2), (10, 0.5), (7, -0.1), (25, 0.9)] {
            let q = constant_correlation_precision(p, rho).unwrap();
            let sigma = Matrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho });
            let prod = q.q().mul(&sigma).unwrap();
            assert!(prod.max_abs_diff(&Matrix::identity(p)) < 1e-10);
            assert_eq!(q.bandwidth(), if rho == 0.0 { 0 } else { p - 1 });
        }
        assert!(constant_correlation_precision(3, -0.5).is_err());
        assert!(constant_correlation_precision(3, 1.0).is_err());
    }
}
