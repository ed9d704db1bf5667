//! Benchmark functions with known indices, a pick-freeze Monte-Carlo oracle
//! and the replicated convergence / coverage studies.

use std::f64::consts::PI;
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effect::{build_main_effect, simulate_index, SimulationConfig};
use crate::error::{Error, Result};
use crate::gp::{fit, q2, FitOptions, FittedGp, TrendKind};
use crate::inputs::{lhs_sample, InputDistribution, InputSpace};
use crate::integrals::{build_table, refine_until_stable, KernelIntegralTable, DEFAULT_TOLERANCE};
use crate::sobol::{global_decomposition, l2_error, predictor_decomposition, sobol_global_std, ConfidenceInterval};

pub const GSOBOL_DEFAULT_A: [f64; 5] = [0.0, 1.0, 4.5, 9.0, 99.0];
const PICK_FREEZE_CHUNK: usize = 8192;
const FALLBACK_NODES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FunctionKind {
    Gsobol { a: Vec<f64> },
    Ishigami { a: f64, b: f64 },
}

/// Analytical benchmark with its input space and first-order indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub name: String,
    pub kind: FunctionKind,
    pub space: InputSpace,
    pub truth: Vec<f64>,
}

impl TestFunction {
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match &self.kind {
            FunctionKind::Gsobol { a } => a.iter().zip(x).map(|(ak, xk)| ((4.0 * xk - 2.0).abs() + ak) / (1.0 + ak)).product(),
            FunctionKind::Ishigami { a, b } => {
                let s2 = x[1].sin();
                x[0].sin() + a * s2 * s2 + b * x[2].powi(4) * x[0].sin()
            }
        }
    }

    pub fn from_kind(kind: FunctionKind) -> Result<Self> {
        match kind {
            FunctionKind::Gsobol { a } => gsobol(&a),
            FunctionKind::Ishigami { a, b } => ishigami_with(a, b),
        }
    }
}

/// `∏_k (|4x_k − 2| + a_k) / (1 + a_k)` on `[0, 1]^d`.
pub fn gsobol(a: &[f64]) -> Result<TestFunction> {
    if a.is_empty() || a.iter().any(|&ak| !(ak >= 0.0) || !ak.is_finite()) {
        return Err(Error::InvalidConfig(format!("g-Sobol coefficients must be finite and nonnegative, got {a:?}")));
    }
    let partial: Vec<f64> = a.iter().map(|ak| 1.0 / (3.0 * (1.0 + ak) * (1.0 + ak))).collect();
    let total = partial.iter().map(|v| 1.0 + v).product::<f64>() - 1.0;
    Ok(TestFunction {
        name: "gsobol".into(),
        kind: FunctionKind::Gsobol { a: a.to_vec() },
        space: InputSpace::iid(InputDistribution::uniform(0.0, 1.0)?, a.len())?,
        truth: partial.iter().map(|v| v / total).collect(),
    })
}

/// `sin x₁ + 7 sin² x₂ + 0.1 x₃⁴ sin x₁` on `[−π, π]³`.
pub fn ishigami() -> TestFunction {
    ishigami_with(7.0, 0.1).expect("valid constants")
}

fn ishigami_with(a: f64, b: f64) -> Result<TestFunction> {
    let pi4 = PI.powi(4);
    let v1 = 0.5 * (1.0 + b * pi4 / 5.0).powi(2);
    let v2 = a * a / 8.0;
    let total = a * a / 8.0 + b * pi4 / 5.0 + b * b * pi4 * pi4 / 18.0 + 0.5;
    Ok(TestFunction {
        name: "ishigami".into(),
        kind: FunctionKind::Ishigami { a, b },
        space: InputSpace::iid(InputDistribution::uniform(-PI, PI)?, 3)?,
        truth: vec![v1 / total, v2 / total, 0.0],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PickFreezeEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// First-order index of input `input` (1-based) from `n` pairs of samples that
/// share that coordinate, with a delta-method standard error.
pub fn pick_freeze<F>(f: &F, space: &InputSpace, input: usize, n: usize, seed: u64) -> Result<PickFreezeEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n < 1000 {
        return Err(Error::InvalidConfig(format!("pick-freeze needs at least 1000 pairs, got {n}")));
    }
    if input == 0 || input > space.dim() {
        return Err(Error::InvalidConfig(format!("input index {input} outside 1..={}", space.dim())));
    }
    let i = input - 1;
    let chunks = n.div_ceil(PICK_FREEZE_CHUNK);
    let pairs: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = PICK_FREEZE_CHUNK.min(n - c * PICK_FREEZE_CHUNK);
            (0..len)
                .map(|_| {
                    let x = space.sample(&mut rng);
                    let mut x2 = space.sample(&mut rng);
                    x2[i] = x[i];
                    (f(&x), f(&x2))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let nf = n as f64;
    let mu = pairs.iter().map(|(a, b)| a + b).sum::<f64>() / (2.0 * nf);
    let var = pairs.iter().map(|(a, b)| 0.5 * ((a - mu).powi(2) + (b - mu).powi(2))).sum::<f64>() / nf;
    if !(var > 0.0) {
        return Err(Error::ZeroTestVariance);
    }
    let cross = pairs.iter().map(|(a, b)| (a - mu) * (b - mu)).sum::<f64>() / nf;
    let s = cross / var;
    let psi: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| (a - mu) * (b - mu) - 0.5 * s * ((a - mu).powi(2) + (b - mu).powi(2)))
        .collect();
    let psi_mean = psi.iter().sum::<f64>() / nf;
    let psi_var = psi.iter().map(|p| (p - psi_mean).powi(2)).sum::<f64>() / (nf - 1.0);
    Ok(PickFreezeEstimate { estimate: s, std_error: (psi_var / nf).sqrt() / var })
}

/// Knobs shared by every replicate of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub test_size: usize,
    pub level: f64,
    pub tolerance: f64,
    pub trend: TrendKind,
    pub fit: FitOptions,
    pub simulation: SimulationConfig,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            test_size: 10_000,
            level: 0.9,
            tolerance: DEFAULT_TOLERANCE,
            trend: TrendKind::Linear,
            fit: FitOptions { estimate_p: true, ..FitOptions::default() },
            simulation: SimulationConfig::default(),
            seed: 0,
        }
    }
}

/// Outcome of one design / fit / analysis cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub n: usize,
    pub replicate: usize,
    pub q2: f64,
    pub quadrature_nodes: usize,
    pub quadrature_converged: bool,
    pub predictor: Vec<f64>,
    pub global_mean: Vec<f64>,
    pub global_std: Option<Vec<f64>>,
    pub ci: Option<Vec<ConfidenceInterval>>,
    pub hits: Option<Vec<bool>>,
    pub err_l2_predictor: f64,
    pub err_l2_global: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub function: String,
    pub truth: Vec<f64>,
    pub level: Option<f64>,
    pub records: Vec<ReplicateRecord>,
}

/// Independent seed for replicate `r` at size `n`.
pub fn replicate_seed(seed: u64, n: usize, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) | r as u64);
    rng.next_u64()
}

fn table_for(gp: &FittedGp, space: &InputSpace, tol: f64) -> Result<(KernelIntegralTable, bool)> {
    match refine_until_stable(gp, space, tol) {
        Ok(t) => Ok((t, true)),
        Err(Error::QuadratureNotConverged { entry, change, .. }) => {
            log::warn!("quadrature not converged ({entry} moved by {change:e}); using {FALLBACK_NODES} nodes");
            Ok((build_table(gp, space, FALLBACK_NODES)?, false))
        }
        Err(e) => Err(e),
    }
}

/// One LHS design of size `n`, its fit, `Q2` on an independent Monte-Carlo
/// test sample and both sets of indices; with `simulate`, also `σ_S̃` and the
/// simulated confidence intervals.
pub fn run_replicate(
    f: &TestFunction,
    n: usize,
    replicate: usize,
    cfg: &StudyConfig,
    simulate: bool,
) -> Result<ReplicateRecord> {
    let seed = replicate_seed(cfg.seed, n, replicate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = lhs_sample(&f.space, n, rng.next_u64())?.evaluate(|x| f.evaluate(x));
    let fit_opts = FitOptions { seed: rng.next_u64(), ..cfg.fit.clone() };
    let gp = fit(&design, &f.space, cfg.trend, &fit_opts)?;

    let mut test_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
    let (observed, predicted): (Vec<f64>, Vec<f64>) = (0..cfg.test_size)
        .map(|_| {
            let x = f.space.sample(&mut test_rng);
            (f.evaluate(&x), gp.predict_mean(&x))
        })
        .unzip();
    let q2 = q2(&observed, &predicted)?;

    let (table, converged) = table_for(&gp, &f.space, cfg.tolerance)?;
    let predictor = predictor_decomposition(&gp, &f.space, &table)?.indices();
    let global = global_decomposition(&gp, &f.space, &table)?;
    let global_mean = global.indices();

    let (global_std, ci, hits) = if simulate {
        let sim = SimulationConfig { seed: rng.next_u64(), ..cfg.simulation };
        let effects = (1..=f.dim())
            .map(|i| build_main_effect(&gp, &f.space, &table, i, sim.n_dis))
            .collect::<Result<Vec<_>>>()?;
        let std = sobol_global_std(&gp, &f.space, &table, &effects)?.iter().map(|e| e.std.unwrap_or(0.0)).collect();
        let ci = effects
            .iter()
            .map(|e| simulate_index(e, global.total_variance, &sim)?.ci(cfg.level))
            .collect::<Result<Vec<_>>>()?;
        let hits = ci.iter().zip(&f.truth).map(|(c, t)| c.lower <= *t && *t <= c.upper).collect();
        (Some(std), Some(ci), Some(hits))
    } else {
        (None, None, None)
    };

    let as_estimates = |v: &[f64]| {
        v.iter()
            .enumerate()
            .map(|(i, &value)| crate::sobol::SobolEstimate {
                input_index: i + 1,
                approach: crate::sobol::Approach::PredictorOnly,
                value,
                std: None,
                ci: None,
            })
            .collect::<Vec<_>>()
    };
    Ok(ReplicateRecord {
        n,
        replicate,
        q2,
        quadrature_nodes: table.n_nodes,
        quadrature_converged: converged,
        err_l2_predictor: l2_error(&as_estimates(&predictor), &f.truth)?,
        err_l2_global: l2_error(&as_estimates(&global_mean), &f.truth)?,
        predictor,
        global_mean,
        global_std,
        ci,
        hits,
    })
}

fn run_study(f: &TestFunction, sizes: &[usize], replicates: usize, cfg: &StudyConfig, simulate: bool) -> Result<StudyResult> {
    let jobs: Vec<(usize, usize)> = sizes.iter().flat_map(|&n| (0..replicates).map(move |r| (n, r))).collect();
    let records = jobs
        .par_iter()
        .map(|&(n, r)| {
            let rec = run_replicate(f, n, r, cfg, simulate);
            if let Ok(rec) = &rec {
                log::info!("{} n={n} replicate={r} Q2={:.4}", f.name, rec.q2);
            }
            rec
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyResult { function: f.name.clone(), truth: f.truth.clone(), level: simulate.then_some(cfg.level), records })
}

/// Both estimators over `replicates` designs per size.
pub fn convergence_study(f: &TestFunction, sizes: &[usize], replicates: usize, cfg: &StudyConfig) -> Result<StudyResult> {
    if replicates < 10 {
        return Err(Error::InvalidConfig(format!("at least 10 replicates required, got {replicates}")));
    }
    run_study(f, sizes, replicates, cfg, false)
}

/// As [`convergence_study`], plus simulated `level` intervals and whether
/// each contains the true index.
pub fn coverage_study(
    f: &TestFunction,
    sizes: &[usize],
    replicates: usize,
    level: f64,
    cfg: &StudyConfig,
) -> Result<StudyResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if replicates == 0 {
        return Err(Error::InvalidConfig("at least one replicate required".into()));
    }
    let cfg = StudyConfig { level, ..cfg.clone() };
    run_study(f, sizes, replicates, &cfg, true)
}

/// Linear-interpolation quantile of unsorted data.
pub fn empirical_quantile(values: &[f64], prob: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn std(values: &[f64]) -> f64 {
    let m = mean(values);
    if values.len() < 2 {
        return 0.0;
    }
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
}

impl Band {
    fn of(values: &[f64]) -> Self {
        Self { mean: mean(values), q05: empirical_quantile(values, 0.05), q95: empirical_quantile(values, 0.95) }
    }

    pub fn width(&self) -> f64 {
        self.q95 - self.q05
    }
}

impl StudyResult {
    /// Distinct sizes in ascending order.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.records.iter().map(|r| r.n).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    fn at(&self, n: usize) -> Vec<&ReplicateRecord> {
        self.records.iter().filter(|r| r.n == n).collect()
    }

    pub fn q2_mean(&self, n: usize) -> f64 {
        mean(&self.at(n).iter().map(|r| r.q2).collect::<Vec<_>>())
    }

    pub fn q2_std(&self, n: usize) -> f64 {
        std(&self.at(n).iter().map(|r| r.q2).collect::<Vec<_>>())
    }

    /// Sampling band of input `i` (0-based) at size `n`.
    pub fn band(&self, n: usize, global: bool, i: usize) -> Band {
        let v: Vec<f64> = self.at(n).iter().map(|r| if global { r.global_mean[i] } else { r.predictor[i] }).collect();
        Band::of(&v)
    }

    pub fn mean_err_l2(&self, n: usize, global: bool) -> f64 {
        mean(&self.at(n).iter().map(|r| if global { r.err_l2_global } else { r.err_l2_predictor }).collect::<Vec<_>>())
    }

    /// Fraction of replicates whose interval covers the truth, at one size or
    /// pooled over all sizes.
    pub fn observed_level(&self, n: Option<usize>, i: usize) -> Option<f64> {
        let recs: Vec<&ReplicateRecord> = match n {
            Some(n) => self.at(n),
            None => self.records.iter().collect(),
        };
        let hits: Option<Vec<bool>> = recs.iter().map(|r| r.hits.as_ref().map(|h| h[i])).collect();
        let hits = hits?;
        if hits.is_empty() {
            return None;
        }
        Some(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
    }

    /// `n,q2_mean,q2_std`.
    pub fn write_table1<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,q2_mean,q2_std")?;
        for n in self.sizes() {
            writeln!(out, "{n},{:.16e},{:.16e}", self.q2_mean(n), self.q2_std(n))?;
        }
        Ok(())
    }

    /// `n,q2_mean,approach,input,mean,q05,q95,err_l2_mean`.
    pub fn write_convergence<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,q2_mean,approach,input,mean,q05,q95,err_l2_mean")?;
        for n in self.sizes() {
            let q2 = self.q2_mean(n);
            for (global, name) in [(false, "predictor_only"), (true, "global_model")] {
                let err = self.mean_err_l2(n, global);
                for i in 0..self.truth.len() {
                    let b = self.band(n, global, i);
                    writeln!(out, "{n},{q2:.16e},{name},{},{:.16e},{:.16e},{:.16e},{err:.16e}", i + 1, b.mean, b.q05, b.q95)?;
                }
            }
        }
        Ok(())
    }

    /// `function,n,q2_mean,input,observed_level`; `header` false appends
    /// rows of a further study to the same file.
    pub fn write_coverage<W: Write>(&self, mut out: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "function,n,q2_mean,input,observed_level")?;
        }
        for n in self.sizes() {
            let q2 = self.q2_mean(n);
            for i in 0..self.truth.len() {
                if let Some(level) = self.observed_level(Some(n), i) {
                    writeln!(out, "{},{n},{q2:.16e},{},{level:.16e}", self.function, i + 1)?;
                }
            }
        }
        Ok(())
    }

    /// `input,truth,mu_mean,observed_level` pooled over all sizes.
    pub fn write_table2<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "input,truth,mu_mean,observed_level")?;
        for (i, t) in self.truth.iter().enumerate() {
            let mu = mean(&self.records.iter().map(|r| r.global_mean[i]).collect::<Vec<_>>());
            let level = self.observed_level(None, i).map(|l| format!("{l:.16e}")).unwrap_or_default();
            writeln!(out, "{},{t:.16e},{mu:.16e},{level}", i + 1)?;
        }
        Ok(())
    }
}

/// Preset study scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Ci,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub sizes: Vec<usize>,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePlan {
    pub gsobol_convergence: StudyPlan,
    pub gsobol_coverage: StudyPlan,
    pub ishigami_coverage: StudyPlan,
}

impl Profile {
    pub fn plan(self) -> ProfilePlan {
        match self {
            Profile::Ci => ProfilePlan {
                gsobol_convergence: StudyPlan { sizes: vec![25, 55, 95], replicates: 20 },
                gsobol_coverage: StudyPlan { sizes: vec![20, 35, 50], replicates: 20 },
                ishigami_coverage: StudyPlan { sizes: vec![130], replicates: 50 },
            },
            Profile::Full => ProfilePlan {
                gsobol_convergence: StudyPlan { sizes: (25..=95).step_by(10).collect(), replicates: 100 },
                gsobol_coverage: StudyPlan { sizes: (20..=50).step_by(5).collect(), replicates: 100 },
                ishigami_coverage: StudyPlan { sizes: (30..=130).step_by(20).collect(), replicates: 100 },
            },
        }
    }
}
