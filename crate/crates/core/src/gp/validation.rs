use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{trend_matrix, FittedGp};
use crate::error::{Error, Result};
use crate::inputs::Design;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMethod {
    Holdout,
    LeaveOneOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub q2: f64,
    pub rmse: f64,
    pub n_test: usize,
    pub method: ValidationMethod,
    /// `Y_i − Ŷ_i`.
    pub residuals: Vec<f64>,
    /// `Σ (Ȳ − Y_i)²`.
    pub total_sum_squares: f64,
}

impl ValidationReport {
    fn from_residuals(observed: &[f64], residuals: Vec<f64>, method: ValidationMethod) -> Result<Self> {
        let n = observed.len();
        let mean = observed.iter().sum::<f64>() / n as f64;
        let total: f64 = observed.iter().map(|y| (mean - y) * (mean - y)).sum();
        if total <= 0.0 {
            return Err(Error::ZeroTestVariance);
        }
        let rss: f64 = residuals.iter().map(|e| e * e).sum();
        Ok(Self {
            q2: 1.0 - rss / total,
            rmse: (rss / n as f64).sqrt(),
            n_test: n,
            method,
            residuals,
            total_sum_squares: total,
        })
    }
}

/// `Q2(Y, Ŷ) = 1 − Σ(Y_i − Ŷ_i)² / Σ(Ȳ − Y_i)²`.
pub fn q2(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() {
        return Err(Error::DimensionMismatch { expected: observed.len(), got: predicted.len() });
    }
    let residuals = observed.iter().zip(predicted).map(|(y, yh)| y - yh).collect();
    Ok(ValidationReport::from_residuals(observed, residuals, ValidationMethod::Holdout)?.q2)
}

/// Holdout predictivity on an independent test sample.
pub fn q2_score(gp: &FittedGp, test: &Design) -> Result<ValidationReport> {
    let observed = test
        .responses
        .as_ref()
        .ok_or_else(|| Error::InvalidDesign("test design has no responses".into()))?;
    if test.dim() != gp.dim() {
        return Err(Error::DimensionMismatch { expected: gp.dim(), got: test.dim() });
    }
    let residuals = test.points.iter().zip(observed).map(|(x, y)| y - gp.predict_mean(x)).collect();
    ValidationReport::from_residuals(observed, residuals, ValidationMethod::Holdout)
}

/// Leave-one-out residuals at fixed hyperparameters, with `β` re-estimated on
/// each reduced sample, obtained without refitting:
/// `e_i = (Q y)_i / Q_ii` where `Q = R⁻¹ − R⁻¹F (FᵀR⁻¹F)⁻¹ FᵀR⁻¹`.
pub fn loo_residuals(gp: &FittedGp) -> Result<Vec<f64>> {
    let n = gp.n();
    let k = gp.trend().n_basis(gp.dim());
    if n < 3 || n <= k {
        return Err(Error::InvalidDesign(format!("leave-one-out needs more than {k} points (and at least 3)")));
    }
    let f = trend_matrix(gp.points(), gp.trend());
    let r_inv = gp.inverse_correlation();
    let ri_f = &r_inv * &f;
    let m = f.transpose() * &ri_f;
    let m_inv = m
        .cholesky()
        .ok_or_else(|| Error::DegenerateDesign("singular trend information matrix".into()))?
        .inverse();
    let q: DMatrix<f64> = &r_inv - &ri_f * m_inv * ri_f.transpose();
    let y = DVector::from_column_slice(gp.responses());
    let qy = &q * y;
    Ok((0..n).map(|i| qy[i] / q[(i, i)]).collect())
}

/// Leave-one-out (virtual cross-validation) predictivity.
pub fn loo_q2(gp: &FittedGp) -> Result<ValidationReport> {
    let residuals = loo_residuals(gp)?;
    ValidationReport::from_residuals(gp.responses(), residuals, ValidationMethod::LeaveOneOut)
}
