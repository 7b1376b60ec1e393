use nalgebra::{DMatrix, DVector};

use super::RetrievalError;

/// Shared-parameter LinUCB over arm contexts.
///
/// Holds the ridge statistics `A = lambda I + sum z z^T` and `b = sum r z`.
/// Arms are scored by `theta^T z + alpha sqrt(z^T A^-1 z)` with `theta = A^-1 b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    a: DMatrix<f64>,
    b: DVector<f64>,
    alpha: f64,
    lambda: f64,
}

/// Two UCB values closer than this (relative) count as tied.
const TIE_TOL: f64 = 1e-12;

impl BanditState {
    pub fn new(k: usize, alpha: f64, lambda: f64) -> Result<Self, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidConfig("context dimension must be >= 1".into()));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(RetrievalError::InvalidConfig("lambda must be > 0".into()));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(RetrievalError::InvalidConfig("alpha must be >= 0".into()));
        }
        Ok(Self {
            a: DMatrix::identity(k, k) * lambda,
            b: DVector::zeros(k),
            alpha,
            lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn factor(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, RetrievalError> {
        self.a
            .clone()
            .cholesky()
            .ok_or(RetrievalError::LinearAlgebra)
    }

    pub fn theta(&self) -> Result<DVector<f64>, RetrievalError> {
        Ok(self.factor()?.solve(&self.b))
    }

    /// UCB of every context, in order.
    pub fn ucb_scores(&self, contexts: &[DVector<f64>]) -> Result<Vec<f64>, RetrievalError> {
        let chol = self.factor()?;
        let theta = chol.solve(&self.b);
        let l = chol.l();
        Ok(contexts
            .iter()
            .map(|z| {
                // z^T A^-1 z = |L^-1 z|^2
                let v = l
                    .solve_lower_triangular(z)
                    .expect("cholesky factor has a positive diagonal");
                theta.dot(z) + self.alpha * v.norm_squared().max(0.0).sqrt()
            })
            .collect())
    }

    /// Index of the max-UCB context; near-ties go to the earliest index.
    pub fn select(&self, contexts: &[DVector<f64>]) -> Result<usize, RetrievalError> {
        let scores = self.ucb_scores(contexts)?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            let incumbent = scores[best];
            if s > incumbent + TIE_TOL * incumbent.abs().max(1.0) {
                best = i;
            }
        }
        if scores.is_empty() {
            return Err(RetrievalError::EmptySource);
        }
        Ok(best)
    }

    pub fn update(&mut self, z: &DVector<f64>, reward: f64) {
        self.a += z * z.transpose();
        self.b += z * reward;
    }

    /// Cholesky succeeds iff `A` is numerically positive definite.
    pub fn is_positive_definite(&self) -> bool {
        self.factor().is_ok()
    }
}
