use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regression basis of the trend `F(x) β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrendKind {
    /// `f_0 ≡ 1`.
    Constant,
    /// `f_0 ≡ 1, f_l(x) = x_l`.
    #[default]
    Linear,
}

impl TrendKind {
    /// Number of basis functions for inputs of dimension `d`.
    pub fn n_basis(self, d: usize) -> usize {
        match self {
            TrendKind::Constant => 1,
            TrendKind::Linear => d + 1,
        }
    }

    /// Row `F(x)`.
    pub fn row(self, x: &[f64]) -> Vec<f64> {
        match self {
            TrendKind::Constant => vec![1.0],
            TrendKind::Linear => std::iter::once(1.0).chain(x.iter().copied()).collect(),
        }
    }

    pub fn eval(self, x: &[f64], beta: &[f64]) -> f64 {
        match self {
            TrendKind::Constant => beta[0],
            TrendKind::Linear => beta[0] + x.iter().zip(&beta[1..]).map(|(xi, bi)| xi * bi).sum::<f64>(),
        }
    }

    /// Slope of the trend along input `l` (zero for a constant trend).
    pub fn slope(self, beta: &[f64], l: usize) -> f64 {
        match self {
            TrendKind::Constant => 0.0,
            TrendKind::Linear => beta[l + 1],
        }
    }
}

/// Generalized exponential correlation parameters and process variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub sigma2: f64,
}

impl KernelParams {
    pub fn new(theta: Vec<f64>, p: Vec<f64>, sigma2: f64) -> Result<Self> {
        if theta.len() != p.len() {
            return Err(Error::DimensionMismatch { expected: theta.len(), got: p.len() });
        }
        if theta.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidConfig(format!("theta must be finite and >= 0, got {theta:?}")));
        }
        if p.iter().any(|&pl| !(pl > 0.0 && pl <= 2.0)) {
            return Err(Error::InvalidConfig(format!("p must lie in (0, 2], got {p:?}")));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma2 must be > 0, got {sigma2}")));
        }
        Ok(Self { theta, p, sigma2 })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// One-dimensional factor `R_l(delta)`.
    #[inline]
    pub fn corr_1d(&self, l: usize, delta: f64) -> f64 {
        corr_1d(self.theta[l], self.p[l], delta)
    }
}

#[inline]
pub(crate) fn corr_1d(theta: f64, p: f64, delta: f64) -> f64 {
    (-theta * abs_pow(delta, p)).exp()
}

#[inline]
pub(crate) fn abs_pow(delta: f64, p: f64) -> f64 {
    if p == 2.0 {
        delta * delta
    } else {
        delta.abs().powf(p)
    }
}

/// `R(x - u) = ∏ exp(-θ_l |x_l - u_l|^{p_l})`.
pub fn correlation(params: &KernelParams, x: &[f64], u: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), params.dim());
    debug_assert_eq!(u.len(), params.dim());
    correlation_raw(&params.theta, &params.p, x, u)
}

#[inline]
pub(crate) fn correlation_raw(theta: &[f64], p: &[f64], x: &[f64], u: &[f64]) -> f64 {
    let mut s = 0.0;
    for l in 0..x.len() {
        s += theta[l] * abs_pow(x[l] - u[l], p[l]);
    }
    (-s).exp()
}
