//! Gaussian-process metamodel: trend plus a stationary product-correlation
//! process, fitted by maximum likelihood and conditioned on the learning
//! sample.
//!
//! Internally everything is kept on the correlation scale: the factored matrix
//! is `R_s + ρ I` with `ρ` the nugget ratio, so the absolute nugget is `ρ σ²`
//! and `Σ_s + nugget I = σ² (R_s + ρ I)`.

mod kernel;
mod optim;
mod validation;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inputs::{Design, InputSpace};

pub use kernel::{correlation, KernelParams, TrendKind};
pub(crate) use kernel::{corr_1d, correlation_raw};
pub use optim::{maximin_lhs, PatternSearch, SearchResult};
pub use validation::{loo_q2, loo_residuals, q2, q2_score, ValidationMethod, ValidationReport};

pub const DEFAULT_NUGGET_RATIO: f64 = 1e-8;
/// Bound on `θ_l · range_l^{p_l}` during the likelihood search.
const THETA_SCALED_BOUND: f64 = 1e3;
const P_LOWER: f64 = 0.5;
const P_UPPER: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Relative nugget: `τ² = nugget_ratio · σ̂²`.
    pub nugget_ratio: f64,
    /// Exponent used for every dimension when `p` is not estimated.
    pub p: f64,
    /// Estimate each `p_l` in `[0.5, 2]` alongside `θ`.
    pub estimate_p: bool,
    /// Skip the likelihood search and use these correlation lengths.
    pub theta: Option<Vec<f64>>,
    pub n_starts: usize,
    /// Pattern search stops once every step is below this (log-θ units).
    pub step_tol: f64,
    /// Likelihood evaluations allowed per start.
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            nugget_ratio: DEFAULT_NUGGET_RATIO,
            p: 2.0,
            estimate_p: false,
            theta: None,
            n_starts: 5,
            step_tol: 1e-4,
            max_evals: 4000,
            seed: 0,
        }
    }
}

/// One multi-start of the likelihood search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub initial_theta: Vec<f64>,
    pub initial_p: Vec<f64>,
    pub initial_log_likelihood: f64,
    pub final_log_likelihood: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitTrace {
    pub starts: Vec<StartRecord>,
    pub best_start: usize,
}

/// Trained metamodel conditioned on its learning sample.
#[derive(Debug, Clone)]
pub struct FittedGp {
    design: Design,
    responses: Vec<f64>,
    trend: TrendKind,
    params: KernelParams,
    beta: Vec<f64>,
    nugget_ratio: f64,
    log_likelihood: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    trace: FitTrace,
}

/// Serialized form of a [`FittedGp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub trend: TrendKind,
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub sigma2: f64,
    pub beta: Vec<f64>,
    pub nugget_ratio: f64,
    pub nugget: f64,
    pub log_likelihood: f64,
    pub design: Design,
}

pub const MODEL_FORMAT: &str = "gpsobol-model";
pub const MODEL_VERSION: u32 = 1;

struct Profile {
    beta: Vec<f64>,
    sigma2: f64,
    log_likelihood: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn correlation_matrix(points: &[Vec<f64>], theta: &[f64], p: &[f64], nugget_ratio: f64) -> DMatrix<f64> {
    let n = points.len();
    let mut r = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0 + nugget_ratio;
        for j in 0..i {
            let v = correlation_raw(theta, p, &points[i], &points[j]);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

fn trend_matrix(points: &[Vec<f64>], trend: TrendKind) -> DMatrix<f64> {
    let d = points[0].len();
    let k = trend.n_basis(d);
    DMatrix::from_fn(points.len(), k, |i, j| if j == 0 { 1.0 } else { points[i][j - 1] })
}

fn sample_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Generalized least squares for `β`, then `α = (R + ρI)⁻¹ (y − Fβ)`.
fn gls(chol: &Cholesky<f64, Dyn>, f: &DMatrix<f64>, y: &DVector<f64>) -> Option<Vec<f64>> {
    let l = chol.l_dirty();
    let ft = l.solve_lower_triangular(f)?;
    let yt = l.solve_lower_triangular(y)?;
    let qr = ft.qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    if r.diagonal().iter().any(|v| v.abs() <= 1e-12 * diag_max.max(f64::MIN_POSITIVE)) {
        return None;
    }
    let qty = qr.q().transpose() * yt;
    let beta = r.solve_upper_triangular(&qty)?;
    Some(beta.iter().copied().collect())
}

fn alpha_for(chol: &Cholesky<f64, Dyn>, f: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64]) -> DVector<f64> {
    let resid = y - f * DVector::from_column_slice(beta);
    chol.solve(&resid)
}

fn profile(
    points: &[Vec<f64>],
    y: &DVector<f64>,
    f: &DMatrix<f64>,
    theta: &[f64],
    p: &[f64],
    nugget_ratio: f64,
    sigma2_floor: f64,
) -> Option<Profile> {
    let n = points.len() as f64;
    let chol = correlation_matrix(points, theta, p, nugget_ratio).cholesky()?;
    let beta = gls(&chol, f, y)?;
    let alpha = alpha_for(&chol, f, y, &beta);
    let resid = y - f * DVector::from_column_slice(&beta);
    let sigma2 = (resid.dot(&alpha) / n).max(sigma2_floor);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let log_likelihood = -0.5 * (n * (2.0 * std::f64::consts::PI * sigma2).ln() + log_det + n);
    if !log_likelihood.is_finite() {
        return None;
    }
    Some(Profile { beta, sigma2, log_likelihood, chol, alpha })
}

/// Per-dimension coordinate spread of the design; 1 for a constant column.
fn design_ranges(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    (0..d)
        .map(|l| {
            let (lo, hi) = points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[l]), hi.max(p[l])));
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        })
        .collect()
}

/// Fits the metamodel by maximizing the profile likelihood.
///
/// The search runs in `z_l = ln(θ_l · range_l^{p_l})` over `[-ln 1e3, ln 1e3]`
/// (plus `p_l ∈ [0.5, 2]` when estimated), from `n_starts` maximin LHS points.
/// `β̂` and `σ̂²` are profiled out in closed form at every candidate.
pub fn fit(design: &Design, space: &InputSpace, trend: TrendKind, options: &FitOptions) -> Result<FittedGp> {
    let y_vec = design
        .responses
        .clone()
        .ok_or_else(|| Error::InvalidDesign("design has no responses".into()))?;
    design.check_inside(space)?;
    let n = design.len();
    let d = design.dim();
    let k = trend.n_basis(d);
    if n <= k {
        return Err(Error::InvalidDesign(format!("{n} points cannot identify {k} trend coefficients")));
    }
    let var_y = sample_variance(&y_vec);
    if var_y <= 0.0 {
        return Err(Error::ConstantResponse);
    }
    if !(options.nugget_ratio >= 0.0 && options.nugget_ratio.is_finite()) {
        return Err(Error::InvalidConfig("nugget_ratio must be >= 0".into()));
    }
    if !(options.p > 0.0 && options.p <= 2.0) {
        return Err(Error::InvalidConfig(format!("p must lie in (0, 2], got {}", options.p)));
    }
    for i in 0..n {
        for j in 0..i {
            if design.points[i] == design.points[j] {
                return Err(Error::DegenerateDesign(format!("points {j} and {i} coincide")));
            }
        }
    }

    let points = &design.points;
    let y = DVector::from_vec(y_vec.clone());
    let f = trend_matrix(points, trend);
    let floor = var_y * 1e-16;
    let eval = |theta: &[f64], p: &[f64]| profile(points, &y, &f, theta, p, options.nugget_ratio, floor);

    let (theta, p, prof, trace) = match &options.theta {
        Some(theta) => {
            if theta.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: theta.len() });
            }
            let p = vec![options.p; d];
            KernelParams::new(theta.clone(), p.clone(), 1.0)?;
            let prof = eval(theta, &p).ok_or_else(|| {
                Error::DegenerateDesign("correlation matrix is singular for the given theta".into())
            })?;
            (theta.clone(), p, prof, FitTrace::default())
        }
        None => search(points, options, &eval)?,
    };

    let params = KernelParams::new(theta, p, prof.sigma2)?;
    Ok(FittedGp {
        design: Design { points: points.clone(), responses: Some(y_vec.clone()) },
        responses: y_vec,
        trend,
        params,
        beta: prof.beta,
        nugget_ratio: options.nugget_ratio,
        log_likelihood: prof.log_likelihood,
        chol: prof.chol,
        alpha: prof.alpha,
        trace,
    })
}

type Eval<'a> = dyn Fn(&[f64], &[f64]) -> Option<Profile> + Sync + 'a;

fn search(
    points: &[Vec<f64>],
    options: &FitOptions,
    eval: &Eval<'_>,
) -> Result<(Vec<f64>, Vec<f64>, Profile, FitTrace)> {
    let d = points[0].len();
    let ranges = design_ranges(points);
    let dims = if options.estimate_p { 2 * d } else { d };
    let z_bound = THETA_SCALED_BOUND.ln();
    let mut lower = vec![-z_bound; d];
    let mut upper = vec![z_bound; d];
    if options.estimate_p {
        lower.extend(std::iter::repeat_n(P_LOWER, d));
        upper.extend(std::iter::repeat_n(P_UPPER, d));
    }
    let decode = |z: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let p: Vec<f64> = if options.estimate_p { z[d..].to_vec() } else { vec![options.p; d] };
        let theta = (0..d).map(|l| z[l].exp() / ranges[l].powf(p[l])).collect();
        (theta, p)
    };
    let objective = |z: &[f64]| {
        let (theta, p) = decode(z);
        eval(&theta, &p).map_or(f64::NEG_INFINITY, |prof| prof.log_likelihood)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let n_starts = options.n_starts.max(1);
    let starts: Vec<Vec<f64>> = maximin_lhs(&mut rng, n_starts, dims, 20)
        .into_iter()
        .map(|u| u.iter().enumerate().map(|(i, ui)| lower[i] + ui * (upper[i] - lower[i])).collect())
        .collect();
    let pattern = PatternSearch {
        lower: &lower,
        upper: &upper,
        initial_step: lower.iter().zip(&upper).map(|(lo, hi)| (hi - lo) / 8.0).collect(),
        min_step: options.step_tol,
        max_evals: options.max_evals,
    };

    let runs: Vec<(StartRecord, SearchResult)> = starts
        .par_iter()
        .map(|z0| {
            let initial = objective(z0);
            let res = pattern.maximize(&objective, z0);
            let (initial_theta, initial_p) = decode(z0);
            let record = StartRecord {
                initial_theta,
                initial_p,
                initial_log_likelihood: initial,
                final_log_likelihood: res.value,
                evals: res.evals,
            };
            (record, res)
        })
        .collect();

    // best likelihood, earliest start on ties
    let mut best = 0;
    for (i, (_, res)) in runs.iter().enumerate() {
        if res.value > runs[best].1.value {
            best = i;
        }
    }
    let (theta, p) = decode(&runs[best].1.x);
    let prof = eval(&theta, &p).ok_or_else(|| {
        Error::DegenerateDesign("no hyperparameters give a factorizable correlation matrix".into())
    })?;
    log::debug!("likelihood search: best start {best}, logL {:.6}", prof.log_likelihood);
    let trace = FitTrace { starts: runs.into_iter().map(|(r, _)| r).collect(), best_start: best };
    Ok((theta, p, prof, trace))
}

impl FittedGp {
    /// Conditions a model with given hyperparameters. `β` is re-estimated by
    /// GLS unless supplied; `σ²` is taken from `params`.
    pub fn from_parts(
        design: Design,
        trend: TrendKind,
        params: KernelParams,
        beta: Option<Vec<f64>>,
        nugget_ratio: f64,
    ) -> Result<Self> {
        let y_vec = design
            .responses
            .clone()
            .ok_or_else(|| Error::InvalidDesign("design has no responses".into()))?;
        if params.dim() != design.dim() {
            return Err(Error::DimensionMismatch { expected: design.dim(), got: params.dim() });
        }
        let k = trend.n_basis(design.dim());
        let y = DVector::from_vec(y_vec.clone());
        let f = trend_matrix(&design.points, trend);
        let chol = correlation_matrix(&design.points, &params.theta, &params.p, nugget_ratio)
            .cholesky()
            .ok_or_else(|| Error::DegenerateDesign("correlation matrix is not positive definite".into()))?;
        let beta = match beta {
            Some(b) if b.len() == k => b,
            Some(b) => return Err(Error::DimensionMismatch { expected: k, got: b.len() }),
            None => gls(&chol, &f, &y).ok_or_else(|| Error::DegenerateDesign("singular GLS system".into()))?,
        };
        let alpha = alpha_for(&chol, &f, &y, &beta);
        let n = design.len() as f64;
        let resid = &y - &f * DVector::from_column_slice(&beta);
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let quad = resid.dot(&alpha) / params.sigma2;
        let log_likelihood = -0.5 * (n * (2.0 * std::f64::consts::PI * params.sigma2).ln() + log_det + quad);
        Ok(Self {
            design,
            responses: y_vec,
            trend,
            params,
            beta,
            nugget_ratio,
            log_likelihood,
            chol,
            alpha,
            trace: FitTrace::default(),
        })
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.design.points
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn trend(&self) -> TrendKind {
        self.trend
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn sigma2(&self) -> f64 {
        self.params.sigma2
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn nugget_ratio(&self) -> f64 {
        self.nugget_ratio
    }

    /// Absolute nugget `τ²` added to the diagonal of `Σ_s`.
    pub fn nugget(&self) -> f64 {
        self.nugget_ratio * self.params.sigma2
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn trace(&self) -> &FitTrace {
        &self.trace
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    /// `(R_s + ρI)⁻¹ (Y_s − F_s β̂)`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Lower Cholesky factor of `R_s + ρI` (correlation scale).
    pub fn chol_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `(R_s + ρI)⁻¹`.
    pub fn inverse_correlation(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `L⁻¹ v` with `L` the Cholesky factor.
    pub fn solve_lower(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.l_dirty().solve_lower_triangular(v).expect("Cholesky factor has a positive diagonal")
    }

    /// `r(x) = (R(x, x⁽¹⁾), …, R(x, x⁽ⁿ⁾))`, so `k(x) = σ² r(x)` off the design.
    pub fn cross_correlation(&self, x: &[f64]) -> DVector<f64> {
        assert_eq!(x.len(), self.dim(), "point dimension");
        DVector::from_iterator(
            self.n(),
            self.design.points.iter().map(|xi| correlation_raw(&self.params.theta, &self.params.p, x, xi)),
        )
    }

    /// Index of the learning point equal to `x`, if any.
    pub fn design_index(&self, x: &[f64]) -> Option<usize> {
        self.design.points.iter().position(|xi| xi.as_slice() == x)
    }

    /// Cross-correlation including the nugget at a coincident learning point,
    /// i.e. the column of `R_s + ρI` when `x` is a design site. The nugget is
    /// part of the process covariance, so the conditional mean interpolates and
    /// the kriging variance vanishes at the data.
    fn cross_correlation_at(&self, x: &[f64]) -> (DVector<f64>, Option<usize>) {
        let mut r = self.cross_correlation(x);
        let site = self.design_index(x);
        if let Some(i) = site {
            r[i] += self.nugget_ratio;
        }
        (r, site)
    }

    pub fn trend_value(&self, x: &[f64]) -> f64 {
        self.trend.eval(x, &self.beta)
    }

    /// Conditional mean `F(x)β̂ + k(x)ᵀ Σ_s⁻¹ (Y_s − F_s β̂)`.
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        self.trend_value(x) + self.cross_correlation_at(x).0.dot(&self.alpha)
    }

    /// Conditional covariance `σ² (R(x, u) − r(x)ᵀ (R_s + ρI)⁻¹ r(u))`, unclamped.
    pub fn predict_cov(&self, x: &[f64], u: &[f64]) -> f64 {
        let (rx, site) = self.cross_correlation_at(x);
        let vx = self.solve_lower(&rx);
        let rxu = correlation(&self.params, x, u);
        if x == u {
            let prior = rxu + if site.is_some() { self.nugget_ratio } else { 0.0 };
            return self.params.sigma2 * (prior - vx.norm_squared());
        }
        let vu = self.solve_lower(&self.cross_correlation_at(u).0);
        self.params.sigma2 * (rxu - vx.dot(&vu))
    }

    /// Kriging variance, clamped at zero.
    pub fn predict_var(&self, x: &[f64]) -> f64 {
        let v = self.predict_cov(x, x);
        debug_assert!(v >= -1e-8 * self.params.sigma2, "kriging variance {v} below round-off");
        v.max(0.0)
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            trend: self.trend,
            theta: self.params.theta.clone(),
            p: self.params.p.clone(),
            sigma2: self.params.sigma2,
            beta: self.beta.clone(),
            nugget_ratio: self.nugget_ratio,
            nugget: self.nugget(),
            log_likelihood: self.log_likelihood,
            design: self.design.clone(),
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self> {
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        let design = Design::new(doc.design.points, doc.design.responses)?;
        let params = KernelParams::new(doc.theta, doc.p, doc.sigma2)?;
        let mut gp = Self::from_parts(design, doc.trend, params, Some(doc.beta), doc.nugget_ratio)?;
        gp.log_likelihood = doc.log_likelihood;
        Ok(gp)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }
}
