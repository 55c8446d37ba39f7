//! Scalar and matrix special functions shared by the samplers and the
//! marginal-likelihood evaluation. Everything here works in log domain.

mod sample;

pub use sample::{
    log_matrix_normal_pdf, log_wishart_pdf, sample_canonical_mvn, sample_inverse_wishart,
    sample_matrix_normal, sample_std_normal_vec, sample_truncated_normal, sample_wishart,
    truncated_normal_ln_pdf, RowScale,
};

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

/// log of the multivariate gamma function Γₚ(a).
///
/// Requires a > (p−1)/2.
pub fn log_multivariate_gamma(p: usize, a: f64) -> Result<f64> {
    if p == 0 {
        return Ok(0.0);
    }
    if a <= (p as f64 - 1.0) / 2.0 {
        return Err(Error::Domain(format!(
            "log_multivariate_gamma: a = {a} must exceed (p-1)/2 = {}",
            (p as f64 - 1.0) / 2.0
        )));
    }
    let mut s = (p * (p - 1)) as f64 / 4.0 * std::f64::consts::PI.ln();
    for j in 1..=p {
        s += ln_gamma(a + (1.0 - j as f64) / 2.0);
    }
    Ok(s)
}

/// Cholesky factor of an SPD matrix plus its log-determinant.
#[derive(Debug, Clone)]
pub struct CholFactor {
    lower: DMatrix<f64>,
    log_det: f64,
}

impl CholFactor {
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solve A x = b where A = L Lᵀ.
    pub fn solve_vec(&self, b: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        let mut x = b.clone();
        self.lower.solve_lower_triangular_mut(&mut x);
        self.lower.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// Solve A X = B column-wise.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.lower.solve_lower_triangular_mut(&mut x);
        self.lower.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// Solve Lᵀ x = b (used for N(μ, Q⁻¹) perturbations).
    pub fn tr_solve_vec(&self, b: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        let mut x = b.clone();
        self.lower.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// Explicit inverse of the factored matrix.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve_mat(&DMatrix::identity(self.dim(), self.dim()))
    }
}

fn try_cholesky(a: &DMatrix<f64>) -> Option<CholFactor> {
    nalgebra::Cholesky::new(a.clone()).map(|c| {
        let lower = c.l();
        let log_det = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        CholFactor { lower, log_det }
    })
}

/// Cholesky factorization with the jitter policy: on failure retry with
/// 1e-10·(mean diagonal)·I added, escalating tenfold up to 1e-6 before
/// reporting not-positive-definite.
pub fn cholesky(a: &DMatrix<f64>) -> Result<CholFactor> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "cholesky: matrix is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Ok(CholFactor {
            lower: DMatrix::zeros(0, 0),
            log_det: 0.0,
        });
    }
    if let Some(f) = try_cholesky(a) {
        return Ok(f);
    }
    let mean_diag = a.diagonal().iter().copied().sum::<f64>() / a.nrows() as f64;
    let base = mean_diag.abs().max(f64::MIN_POSITIVE);
    let mut eps = 1e-10;
    while eps <= 1e-6 {
        let mut jittered = a.clone();
        for i in 0..a.nrows() {
            jittered[(i, i)] += eps * base;
        }
        if let Some(f) = try_cholesky(&jittered) {
            return Ok(f);
        }
        eps *= 10.0;
    }
    Err(Error::NotPositiveDefinite)
}
