//! First-order Sobol indices of a fitted Gaussian process.
//!
//! Two estimators are provided. The predictor-only index treats the
//! conditional mean `m(x)` as the model:
//!
//! ```text
//! S_i = Var_{X_i} E[m(X) | X_i] / Var_X m(X)
//! ```
//!
//! The global-model index `S̃_i = Var_{X_i} A_i / E_Ω Var_X Y` keeps the whole
//! conditional process; its mean and standard deviation over the process are
//! returned. Everything is assembled from [`KernelIntegralTable`] entries, the
//! trend coefficients and `α = (R_s + ρI)⁻¹(Y_s − F_s β̂)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effect::MainEffectProcess;
use crate::error::{Error, Result};
use crate::gp::FittedGp;
use crate::inputs::InputSpace;
use crate::integrals::KernelIntegralTable;

/// Ratio below which a negative numerator is treated as round-off.
pub const NEGATIVE_TOLERANCE: f64 = 1e-6;
/// Denominators at or below this multiple of `σ²` are rejected.
pub const CONSTANT_PREDICTOR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    PredictorOnly,
    GlobalModel,
}

impl Approach {
    pub fn as_str(self) -> &'static str {
        match self {
            Approach::PredictorOnly => "predictor_only",
            Approach::GlobalModel => "global_model",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolEstimate {
    /// 1-based.
    pub input_index: usize,
    pub approach: Approach,
    pub value: f64,
    pub std: Option<f64>,
    pub ci: Option<ConfidenceInterval>,
}

/// Numerators `Var_{X_i}(…)` over a common total variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub total_variance: f64,
    pub numerators: Vec<f64>,
}

impl VarianceDecomposition {
    pub fn indices(&self) -> Vec<f64> {
        self.numerators.iter().map(|v| v / self.total_variance).collect()
    }
}

fn check_inputs(gp: &FittedGp, space: &InputSpace, table: &KernelIntegralTable) -> Result<()> {
    if space.dim() != gp.dim() {
        return Err(Error::DimensionMismatch { expected: gp.dim(), got: space.dim() });
    }
    if table.dim() != gp.dim() {
        return Err(Error::DimensionMismatch { expected: gp.dim(), got: table.dim() });
    }
    if table.n() != gp.n() {
        return Err(Error::DimensionMismatch { expected: gp.n(), got: table.n() });
    }
    Ok(())
}

/// Shared pieces of both decompositions.
struct Pieces {
    /// `Q_i(j) = ∏_{l≠i} U1_l(j)` per input.
    q: Vec<DVector<f64>>,
    slopes: Vec<f64>,
}

impl Pieces {
    fn new(gp: &FittedGp, table: &KernelIntegralTable) -> Self {
        let d = gp.dim();
        let q = (0..d).map(|i| table.u1_product(Some(i))).collect();
        let slopes = (0..d).map(|l| gp.trend().slope(gp.beta(), l)).collect();
        Self { q, slopes }
    }
}

/// `Var_{X_i}` of the main effect of the conditional mean.
fn predictor_numerator(gp: &FittedGp, table: &KernelIntegralTable, pieces: &Pieces, i: usize) -> f64 {
    let dim = &table.dims[i];
    let c = gp.alpha().component_mul(&pieces.q[i]);
    let b = pieces.slopes[i];
    let cov_t = (&dim.t1 - &dim.u1 * dim.mean).dot(&c);
    let cu1 = c.dot(&dim.u1);
    let quad = (&dim.u2 * &c).dot(&c) - cu1 * cu1;
    b * b * dim.variance + 2.0 * b * cov_t + quad
}

fn predictor_denominator(gp: &FittedGp, table: &KernelIntegralTable, pieces: &Pieces) -> f64 {
    let alpha = gp.alpha();
    let mut total = 0.0;
    for (l, dim) in table.dims.iter().enumerate() {
        let b = pieces.slopes[l];
        if b != 0.0 {
            let cov_t = (&dim.t1 - &dim.u1 * dim.mean).component_mul(&pieces.q[l]).dot(alpha);
            total += b * b * dim.variance + 2.0 * b * cov_t;
        }
    }
    let u1 = table.u1_product(None);
    let au1 = alpha.dot(&u1);
    total + (table.u2_product() * alpha).dot(alpha) - au1 * au1
}

/// `Σ_jk A_jk B_jk`.
fn frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn finish(decomp_input: usize, value: f64, denom: f64) -> Result<f64> {
    let ratio = value / denom;
    if ratio >= 0.0 {
        Ok(value)
    } else if ratio >= -NEGATIVE_TOLERANCE {
        Ok(0.0)
    } else {
        Err(Error::NegativeVariance { input: decomp_input + 1, value: ratio })
    }
}

fn check_denominator(gp: &FittedGp, denom: f64) -> Result<()> {
    if !(denom > CONSTANT_PREDICTOR_RATIO * gp.sigma2()) {
        return Err(Error::ConstantPredictor(denom));
    }
    Ok(())
}

/// Numerators and total variance of the conditional mean.
pub fn predictor_decomposition(
    gp: &FittedGp,
    space: &InputSpace,
    table: &KernelIntegralTable,
) -> Result<VarianceDecomposition> {
    check_inputs(gp, space, table)?;
    let pieces = Pieces::new(gp, table);
    let total_variance = predictor_denominator(gp, table, &pieces);
    check_denominator(gp, total_variance)?;
    let numerators = (0..gp.dim())
        .into_par_iter()
        .map(|i| finish(i, predictor_numerator(gp, table, &pieces, i), total_variance))
        .collect::<Result<Vec<_>>>()?;
    Ok(VarianceDecomposition { total_variance, numerators })
}

/// `E_Ω Var_{X_i} A_i` over `E_Ω Var_X Y`.
pub fn global_decomposition(
    gp: &FittedGp,
    space: &InputSpace,
    table: &KernelIntegralTable,
) -> Result<VarianceDecomposition> {
    check_inputs(gp, space, table)?;
    let pieces = Pieces::new(gp, table);
    let sigma2 = gp.sigma2();
    let rinv = gp.inverse_correlation();
    let u1 = table.u1_product(None);
    let w_all = table.w_product(None);

    let mean_var = predictor_denominator(gp, table, &pieces);
    let integrated_var = sigma2 * (1.0 - frobenius(&rinv, &table.u2_product()));
    let l_u1 = gp.solve_lower(&u1);
    let double_cov = sigma2 * (w_all - l_u1.norm_squared());
    let total_variance = mean_var + integrated_var - double_cov;
    check_denominator(gp, total_variance)?;

    let numerators = (0..gp.dim())
        .into_par_iter()
        .map(|i| {
            let dim = &table.dims[i];
            let q = &pieces.q[i];
            // Σ_jk R⁻¹_jk Q_j Q_k (U2_i(j,k) − U1_i(j) U1_i(k))
            let mut centered = dim.u2.clone() - &dim.u1 * dim.u1.transpose();
            for j in 0..gp.n() {
                for k in 0..gp.n() {
                    centered[(j, k)] *= q[j] * q[k];
                }
            }
            let process = sigma2 * (table.w_product(Some(i)) - w_all) - sigma2 * frobenius(&rinv, &centered);
            let value = predictor_numerator(gp, table, &pieces, i) + process;
            finish(i, value, total_variance)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VarianceDecomposition { total_variance, numerators })
}

fn estimates(decomp: &VarianceDecomposition, approach: Approach) -> Vec<SobolEstimate> {
    decomp
        .indices()
        .into_iter()
        .enumerate()
        .map(|(i, value)| SobolEstimate { input_index: i + 1, approach, value, std: None, ci: None })
        .collect()
}

/// Predictor-only indices `S_i`.
pub fn sobol_predictor(gp: &FittedGp, space: &InputSpace, table: &KernelIntegralTable) -> Result<Vec<SobolEstimate>> {
    Ok(estimates(&predictor_decomposition(gp, space, table)?, Approach::PredictorOnly))
}

/// Means `μ_S̃i` of the global-model indices.
pub fn sobol_global_mean(gp: &FittedGp, space: &InputSpace, table: &KernelIntegralTable) -> Result<Vec<SobolEstimate>> {
    Ok(estimates(&global_decomposition(gp, space, table)?, Approach::GlobalModel))
}

/// Variance of `V = Σ_j w_j (A_j − Σ_k w_k A_k)²` for `A ~ N(μ, C)` on the
/// grid of `effect`.
pub fn discrete_variance_moments(effect: &MainEffectProcess) -> (f64, f64) {
    let w = &effect.weights;
    let lambda = DMatrix::from_diagonal(w) - w * w.transpose();
    let lc = &lambda * &effect.cov;
    let lambda_mu = &lambda * &effect.mean;
    let mean = effect.mean.dot(&lambda_mu) + lc.trace();
    let var = 2.0 * frobenius(&lc, &lc.transpose()) + 4.0 * lambda_mu.dot(&(&effect.cov * &lambda_mu));
    (mean, var.max(0.0))
}

/// `μ_S̃i` together with `σ_S̃i` from the discretized main effects, one per
/// input in order.
pub fn sobol_global_std(
    gp: &FittedGp,
    space: &InputSpace,
    table: &KernelIntegralTable,
    effects: &[MainEffectProcess],
) -> Result<Vec<SobolEstimate>> {
    if effects.len() != gp.dim() {
        return Err(Error::DimensionMismatch { expected: gp.dim(), got: effects.len() });
    }
    let decomp = global_decomposition(gp, space, table)?;
    let mut out = estimates(&decomp, Approach::GlobalModel);
    for (est, effect) in out.iter_mut().zip(effects) {
        if effect.input_index != est.input_index {
            return Err(Error::InvalidConfig(format!(
                "main effect for input {} supplied in slot {}",
                effect.input_index, est.input_index
            )));
        }
        effect.check_psd()?;
        let (_, var) = discrete_variance_moments(effect);
        est.std = Some(var.sqrt() / decomp.total_variance);
    }
    Ok(out)
}

/// `Σ_i (truth_i − estimate_i)²`.
pub fn l2_error(estimates: &[SobolEstimate], truth: &[f64]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: estimates.len() });
    }
    Ok(estimates.iter().zip(truth).map(|(e, t)| (t - e.value).powi(2)).sum())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

/// CSV rows `input,approach,value,std,ci_lo,ci_hi`; absent fields stay empty.
pub fn write_estimates_csv<W: Write>(estimates: &[SobolEstimate], mut out: W) -> std::io::Result<()> {
    writeln!(out, "input,approach,value,std,ci_lo,ci_hi")?;
    for e in estimates {
        writeln!(
            out,
            "{},{},{:.16e},{},{},{}",
            e.input_index,
            e.approach.as_str(),
            e.value,
            fmt_opt(e.std),
            fmt_opt(e.ci.map(|c| c.lower)),
            fmt_opt(e.ci.map(|c| c.upper)),
        )?;
    }
    Ok(())
}

pub fn estimates_to_json(estimates: &[SobolEstimate]) -> Result<String> {
    Ok(serde_json::to_string_pretty(estimates)?)
}
