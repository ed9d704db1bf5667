//! Main-effect process of one input and simulation of its random Sobol index.
//!
//! Averaging the conditional process over every input but `X_i` leaves a
//! one-dimensional Gaussian process `A_i`. It is discretized on the midpoints
//! of `n_dis` equal-probability cells of `X_i` (weights `1/n_dis`; Weibull and
//! trapezoidal inputs use smoothstep-graded cells), factored once, and sampled `k_sim` times; each draw yields one realization of
//! `S̃_i = Σ_j w_j (A_j − Σ_k w_k A_k)² / denom`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{corr_1d, FittedGp};
use crate::inputs::{InputDistribution, InputSpace};
use crate::quadrature::smoothstep;
use crate::integrals::KernelIntegralTable;
use crate::sobol::ConfidenceInterval;

/// Largest tolerated negative eigenvalue, relative to `σ²`.
pub const PSD_TOLERANCE: f64 = 1e-8;
const MAX_JITTER: f64 = 1e-6;
/// Relative drift above which a simulation is flagged as not converged.
pub const DRIFT_LIMIT: f64 = 0.02;
const STREAM_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq)]
pub struct MainEffectProcess {
    /// 1-based.
    pub input_index: usize,
    pub grid: Vec<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_dis: usize,
    pub k_sim: usize,
    pub seed: u64,
    /// Initial diagonal jitter, relative to `σ²`.
    pub jitter: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { n_dis: 200, k_sim: 10_000, seed: 0, jitter: 1e-10 }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_dis < 8 {
            return Err(Error::InvalidConfig(format!("n_dis must be at least 8, got {}", self.n_dis)));
        }
        if self.k_sim < 100 {
            return Err(Error::InvalidConfig(format!("k_sim must be at least 100, got {}", self.k_sim)));
        }
        if !(self.jitter >= 0.0 && self.jitter <= MAX_JITTER) {
            return Err(Error::InvalidConfig(format!("jitter must lie in [0, 1e-6], got {}", self.jitter)));
        }
        Ok(())
    }
}

/// Realizations of one random index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexDistribution {
    pub input_index: usize,
    pub samples: Vec<f64>,
}

impl IndexDistribution {
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Sample standard deviation (`n − 1` divisor).
    pub fn std(&self) -> f64 {
        let m = self.mean();
        let ss: f64 = self.samples.iter().map(|s| (s - m) * (s - m)).sum();
        (ss / (self.samples.len() as f64 - 1.0)).sqrt()
    }

    /// Linear-interpolation empirical quantile.
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::ProbabilityOutOfRange(prob));
        }
        let mut sorted = self.samples.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(sorted_quantile(&sorted, prob))
    }

    /// Equal-tailed interval at `level`.
    pub fn ci(&self, level: f64) -> Result<ConfidenceInterval> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidConfig(format!("confidence level must lie in (0, 1), got {level}")));
        }
        let mut sorted = self.samples.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(ConfidenceInterval {
            level,
            lower: sorted_quantile(&sorted, 0.5 * (1.0 - level)),
            upper: sorted_quantile(&sorted, 0.5 * (1.0 + level)),
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "draw,value")?;
        for (k, s) in self.samples.iter().enumerate() {
            writeln!(out, "{k},{s:.16e}")?;
        }
        Ok(())
    }
}

fn sorted_quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Midpoints in probability with weights `1/n_dis`. Laws whose quantile is
/// singular at an end of `(0, 1)` take the midpoints in the smoothstep
/// coordinate instead, so that the tail cells stop dominating the error.
fn probability_grid(dist: &InputDistribution, n_dis: usize) -> (Vec<f64>, DVector<f64>) {
    let n = n_dis as f64;
    if !dist.has_singular_quantile() {
        let grid = (0..n_dis).map(|j| dist.quantile_unchecked((j as f64 + 0.5) / n)).collect();
        return (grid, DVector::from_element(n_dis, 1.0 / n));
    }
    let (u, du): (Vec<f64>, Vec<f64>) = (0..n_dis).map(|j| smoothstep((j as f64 + 0.5) / n)).unzip();
    let total: f64 = du.iter().sum();
    let grid = u.iter().map(|&u| dist.quantile_unchecked(u)).collect();
    (grid, DVector::from_iterator(n_dis, du.iter().map(|w| w / total)))
}

/// Mean and covariance of `A_i` on the probability grid of `X_i`.
pub fn build_main_effect(
    gp: &FittedGp,
    space: &InputSpace,
    table: &KernelIntegralTable,
    input_index: usize,
    n_dis: usize,
) -> Result<MainEffectProcess> {
    let d = gp.dim();
    if input_index == 0 || input_index > d {
        return Err(Error::InvalidConfig(format!("input index {input_index} outside 1..={d}")));
    }
    if space.dim() != d || table.dim() != d || table.n() != gp.n() {
        return Err(Error::DimensionMismatch { expected: d, got: space.dim().min(table.dim()) });
    }
    if n_dis < 2 {
        return Err(Error::InvalidConfig(format!("n_dis must be at least 2, got {n_dis}")));
    }
    let i = input_index - 1;
    let dist = space.get(i);
    let (grid, weights) = probability_grid(dist, n_dis);

    let params = gp.params();
    let (theta, p) = (params.theta[i], params.p[i]);
    let q = table.u1_product(Some(i));
    let xi: Vec<f64> = gp.points().iter().map(|x| x[i]).collect();
    // B[j, g] = R_i(g − x_ji) Q_i(j)
    let b = DMatrix::from_fn(gp.n(), n_dis, |j, g| corr_1d(theta, p, grid[g] - xi[j]) * q[j]);

    let mut anchor: Vec<f64> = table.dims.iter().map(|dim| dim.mean).collect();
    let mean = DVector::from_iterator(
        n_dis,
        grid.iter().enumerate().map(|(g, &t)| {
            anchor[i] = t;
            gp.trend().eval(&anchor, gp.beta()) + b.column(g).dot(gp.alpha())
        }),
    );

    let lb = gp.chol_factor().solve_lower_triangular(&b).expect("Cholesky factor has a positive diagonal");
    let w_rest = table.w_product(Some(i));
    let mut cov = lb.tr_mul(&lb);
    for g in 0..n_dis {
        for h in 0..n_dis {
            cov[(g, h)] = params.sigma2 * (corr_1d(theta, p, grid[g] - grid[h]) * w_rest - cov[(g, h)]);
        }
    }
    cov = (&cov + cov.transpose()) * 0.5;

    let effect = MainEffectProcess { input_index, grid, mean, cov, weights, sigma2: params.sigma2 };
    effect.check_psd()?;
    Ok(effect)
}

impl MainEffectProcess {
    pub fn n_dis(&self) -> usize {
        self.grid.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.cov.clone().symmetric_eigenvalues().min()
    }

    pub fn check_psd(&self) -> Result<()> {
        let min = self.min_eigenvalue();
        if min < -PSD_TOLERANCE * self.sigma2 {
            return Err(Error::NotPositiveSemidefinite(min));
        }
        Ok(())
    }

    /// Square-root factor `L` with `L Lᵀ ≈ cov`: Cholesky with escalating
    /// jitter, then a clipped eigendecomposition.
    pub fn factor(&self, jitter: f64) -> Result<DMatrix<f64>> {
        let n = self.n_dis();
        if self.cov.iter().all(|&c| c == 0.0) {
            return Ok(DMatrix::zeros(n, n));
        }
        let mut eps = jitter;
        loop {
            let shifted = &self.cov + DMatrix::identity(n, n) * (eps * self.sigma2);
            if let Some(chol) = shifted.cholesky() {
                log::debug!("main effect {} factored with jitter {eps:e}", self.input_index);
                return Ok(chol.unpack());
            }
            if eps >= MAX_JITTER {
                break;
            }
            eps = if eps == 0.0 { 1e-10 } else { (eps * 10.0).min(MAX_JITTER) };
        }
        let eig = self.cov.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < -PSD_TOLERANCE * self.sigma2 {
            return Err(Error::NotPositiveSemidefinite(min));
        }
        log::debug!("main effect {} factored by eigendecomposition", self.input_index);
        let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let mut l = eig.eigenvectors;
        for (mut col, r) in l.column_iter_mut().zip(roots.iter()) {
            col *= *r;
        }
        Ok(l)
    }
}

/// `k_sim` realizations of `S̃_i`. Draw `k` uses its own ChaCha stream, so the
/// result does not depend on the thread count.
pub fn simulate_index(effect: &MainEffectProcess, denom: f64, cfg: &SimulationConfig) -> Result<IndexDistribution> {
    cfg.validate()?;
    if !(denom > 0.0) {
        return Err(Error::InvalidConfig(format!("denominator must be positive, got {denom}")));
    }
    let l = effect.factor(cfg.jitter)?;
    let n = effect.n_dis();
    let seed = cfg.seed ^ (effect.input_index as u64).wrapping_mul(STREAM_MIX);
    let w = &effect.weights;
    let samples = (0..cfg.k_sim)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
            let v = &effect.mean + &l * z;
            let centre = w.dot(&v);
            v.iter().zip(w.iter()).map(|(vj, wj)| wj * (vj - centre) * (vj - centre)).sum::<f64>() / denom
        })
        .collect();
    Ok(IndexDistribution { input_index: effect.input_index, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl From<&IndexDistribution> for Moments {
    fn from(d: &IndexDistribution) -> Self {
        Self { mean: d.mean(), std: d.std() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub input_index: usize,
    pub base: Moments,
    /// Same draws on a grid of `2·n_dis` points.
    pub finer_grid: Moments,
    /// `2·k_sim` draws on the base grid.
    pub more_draws: Moments,
    pub grid_drift: f64,
    pub draw_drift: f64,
    pub converged: bool,
}

fn drift(a: Moments, b: Moments) -> f64 {
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE);
    rel(a.mean, b.mean).max(rel(a.std, b.std))
}

/// Reruns the simulation with a doubled grid and with doubled draws and
/// flags drifts of the mean or std above 2%.
pub fn convergence_check(
    gp: &FittedGp,
    space: &InputSpace,
    table: &KernelIntegralTable,
    effect: &MainEffectProcess,
    denom: f64,
    cfg: &SimulationConfig,
) -> Result<ConvergenceReport> {
    let base = Moments::from(&simulate_index(effect, denom, cfg)?);
    let fine_effect = build_main_effect(gp, space, table, effect.input_index, 2 * effect.n_dis())?;
    let finer_grid = Moments::from(&simulate_index(&fine_effect, denom, cfg)?);
    let doubled = SimulationConfig { k_sim: 2 * cfg.k_sim, ..*cfg };
    let more_draws = Moments::from(&simulate_index(effect, denom, &doubled)?);
    let grid_drift = drift(base, finer_grid);
    let draw_drift = drift(base, more_draws);
    let converged = grid_drift <= DRIFT_LIMIT && draw_drift <= DRIFT_LIMIT;
    if !converged {
        log::warn!(
            "simulation for input {} not converged: grid drift {grid_drift:.3e}, draw drift {draw_drift:.3e}",
            effect.input_index
        );
    }
    Ok(ConvergenceReport { input_index: effect.input_index, base, finer_grid, more_draws, grid_drift, draw_drift, converged })
}
