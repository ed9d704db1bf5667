use std::fs;
use std::path::{Path, PathBuf};

use gpsobol_core::bench::{convergence_study, coverage_study, gsobol, ishigami, StudyConfig, StudyResult};
use gpsobol_core::effect::{build_main_effect, convergence_check, simulate_index, ConvergenceReport, SimulationConfig};
use gpsobol_core::gp::{fit, loo_q2, FitOptions, FitTrace, FittedGp, TrendKind};
use gpsobol_core::inputs::{lhs_sample, InputSpace};
use gpsobol_core::integrals::{build_table, refine_until_stable, KernelIntegralTable};
use gpsobol_core::sobol::{global_decomposition, predictor_decomposition, sobol_global_std, ConfidenceInterval};
use gpsobol_core::Error;
use serde::Serialize;

use crate::config::{BenchConfig, FitConfig, LhsConfig, SobolConfig};
use crate::csvio::{read_design, write_design};
use crate::error::{CliError, CliResult};

const FALLBACK_NODES: usize = 4096;

pub struct Common {
    pub seed: u64,
    pub out: PathBuf,
    pub allow_nonconverged: bool,
}

fn write_file(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError { kind: crate::error::Kind::Io, message: format!("{}: {e}", path.display()) })?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn require(config: Option<&Path>) -> CliResult<&Path> {
    config.ok_or_else(|| CliError::schema("--config is required for this command"))
}

pub fn lhs(config: Option<&Path>, common: &Common) -> CliResult<()> {
    let cfg = LhsConfig::load(require(config)?)?;
    let mut design = lhs_sample(&cfg.space, cfg.n, common.seed)?;
    if let Some(f) = &cfg.function {
        design = design.evaluate(|x| f.evaluate(x));
    }
    write_file(&common.out, "design.csv", csv_bytes(|b| write_design(&design, b))?)
}

#[derive(Serialize)]
struct LooSummary {
    q2: f64,
    rmse: f64,
    n: usize,
}

#[derive(Serialize)]
struct FitReport<'a> {
    n: usize,
    dim: usize,
    trend: TrendKind,
    theta: &'a [f64],
    p: &'a [f64],
    sigma2: f64,
    beta: &'a [f64],
    nugget: f64,
    log_likelihood: f64,
    loo: LooSummary,
    options: &'a FitOptions,
    search: &'a FitTrace,
}

pub fn fit_cmd(config: Option<&Path>, common: &Common) -> CliResult<()> {
    let cfg = FitConfig::load(require(config)?)?;
    let design = read_design(&cfg.design, cfg.space.dim())?;
    let options = FitOptions { seed: common.seed, ..cfg.fit };
    let gp = fit(&design, &cfg.space, cfg.trend, &options)?;
    let loo = loo_q2(&gp)?;
    log::info!("LOO Q2 = {:.4}", loo.q2);
    let params = gp.params();
    let report = FitReport {
        n: gp.n(),
        dim: gp.dim(),
        trend: gp.trend(),
        theta: &params.theta,
        p: &params.p,
        sigma2: params.sigma2,
        beta: gp.beta(),
        nugget: gp.nugget(),
        log_likelihood: gp.log_likelihood(),
        loo: LooSummary { q2: loo.q2, rmse: loo.rmse, n: loo.n_test },
        options: &options,
        search: gp.trace(),
    };
    let mut model = gp.to_json()?;
    model.push('\n');
    write_file(&common.out, "model.json", model)?;
    write_file(&common.out, "fit_report.json", json_bytes(&report)?)
}

#[derive(Serialize)]
struct QuadratureSummary {
    converged: bool,
    nodes_per_cell: usize,
    rule_sizes: Vec<usize>,
    tolerance: f64,
}

#[derive(Serialize)]
struct IndexRow {
    input: usize,
    s: f64,
    mu: f64,
    sigma: f64,
    ci: ConfidenceInterval,
    simulated_mean: f64,
    simulated_std: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    convergence: Option<ConvergenceReport>,
}

#[derive(Serialize)]
struct SobolReport {
    converged: bool,
    level: f64,
    quadrature: QuadratureSummary,
    predictor_variance: f64,
    global_variance: f64,
    simulation: SimulationConfig,
    indices: Vec<IndexRow>,
}

fn quadrature(gp: &FittedGp, space: &InputSpace, tol: f64) -> CliResult<(KernelIntegralTable, bool)> {
    match refine_until_stable(gp, space, tol) {
        Ok(t) => Ok((t, true)),
        Err(Error::QuadratureNotConverged { n_nodes, entry, change }) => {
            log::warn!("quadrature not converged at {n_nodes} nodes per cell: {entry} moved by {change:e}");
            Ok((build_table(gp, space, FALLBACK_NODES)?, false))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn sobol(config: Option<&Path>, common: &Common) -> CliResult<()> {
    let path = require(config)?;
    let cfg = SobolConfig::load(path)?;
    let text = fs::read_to_string(&cfg.model)
        .map_err(|e| CliError::schema(format!("cannot read model {}: {e}", cfg.model.display())))?;
    let gp = FittedGp::from_json(&text).map_err(|e| CliError::schema(format!("{}: {e}", cfg.model.display())))?;
    if gp.dim() != cfg.space.dim() {
        return Err(CliError::schema(format!(
            "model has {} inputs but {} distributions were given",
            gp.dim(),
            cfg.space.dim()
        )));
    }
    let space = &cfg.space;
    let sim = SimulationConfig { seed: common.seed, ..cfg.simulation };

    let (table, quad_ok) = quadrature(&gp, space, cfg.tolerance)?;
    let predictor = predictor_decomposition(&gp, space, &table)?;
    let global = global_decomposition(&gp, space, &table)?;
    let effects = (1..=gp.dim())
        .map(|i| build_main_effect(&gp, space, &table, i, sim.n_dis))
        .collect::<gpsobol_core::Result<Vec<_>>>()?;
    let std = sobol_global_std(&gp, space, &table, &effects)?;

    let mut rows = Vec::with_capacity(gp.dim());
    let mut sim_ok = true;
    for (k, effect) in effects.iter().enumerate() {
        let draws = simulate_index(effect, global.total_variance, &sim)?;
        let convergence = if cfg.convergence_check {
            let report = convergence_check(&gp, space, &table, effect, global.total_variance, &sim)?;
            sim_ok &= report.converged;
            Some(report)
        } else {
            None
        };
        if cfg.samples {
            let name = format!("samples_{}.csv", k + 1);
            write_file(&common.out, &name, csv_bytes(|b| draws.write_csv(b))?)?;
        }
        rows.push(IndexRow {
            input: k + 1,
            s: predictor.numerators[k] / predictor.total_variance,
            mu: global.numerators[k] / global.total_variance,
            sigma: std[k].std.unwrap_or(0.0),
            ci: draws.ci(cfg.level)?,
            simulated_mean: draws.mean(),
            simulated_std: draws.std(),
            convergence,
        });
    }

    let converged = quad_ok && sim_ok;
    let csv = csv_bytes(|b| {
        use std::io::Write;
        writeln!(b, "input,S,mu,sigma,ci_lo,ci_hi")?;
        for r in &rows {
            writeln!(b, "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", r.input, r.s, r.mu, r.sigma, r.ci.lower, r.ci.upper)?;
        }
        Ok(())
    })?;
    let report = SobolReport {
        converged,
        level: cfg.level,
        quadrature: QuadratureSummary {
            converged: quad_ok,
            nodes_per_cell: table.n_nodes,
            rule_sizes: table.rule_sizes.clone(),
            tolerance: cfg.tolerance,
        },
        predictor_variance: predictor.total_variance,
        global_variance: global.total_variance,
        simulation: sim,
        indices: rows,
    };
    write_file(&common.out, "sobol.csv", csv)?;
    write_file(&common.out, "sobol.json", json_bytes(&report)?)?;

    if converged || common.allow_nonconverged {
        Ok(())
    } else {
        let what = match (quad_ok, sim_ok) {
            (false, false) => "quadrature and simulation",
            (false, true) => "quadrature",
            _ => "simulation",
        };
        Err(CliError::not_converged(format!("{what} did not converge; see sobol.json or rerun with --allow-nonconverged")))
    }
}

#[derive(Serialize)]
struct BenchDocument<'a> {
    profile: gpsobol_core::bench::Profile,
    study: &'a StudyConfig,
    gsobol_convergence: &'a StudyResult,
    gsobol_coverage: &'a StudyResult,
    ishigami_coverage: &'a StudyResult,
}

pub fn bench(config: Option<&Path>, common: &Common) -> CliResult<()> {
    let cfg = BenchConfig::load(config)?;
    let study = StudyConfig { seed: common.seed, ..cfg.study.clone() };
    let plan = cfg.plan();
    let g = gsobol(&cfg.gsobol_a).map_err(|e| CliError::schema(e.to_string()))?;
    let ish = ishigami();

    log::info!("g-Sobol convergence study");
    let conv = convergence_study(&g, &plan.gsobol_convergence.sizes, plan.gsobol_convergence.replicates, &study)?;
    log::info!("g-Sobol coverage study");
    let g_cov = coverage_study(&g, &plan.gsobol_coverage.sizes, plan.gsobol_coverage.replicates, study.level, &study)?;
    log::info!("Ishigami coverage study");
    let i_cov = coverage_study(&ish, &plan.ishigami_coverage.sizes, plan.ishigami_coverage.replicates, study.level, &study)?;

    let out = &common.out;
    write_file(out, "table1.csv", csv_bytes(|b| conv.write_table1(b))?)?;
    write_file(out, "fig_convergence.csv", csv_bytes(|b| conv.write_convergence(b))?)?;
    write_file(
        out,
        "fig_coverage.csv",
        csv_bytes(|b| {
            g_cov.write_coverage(&mut *b, true)?;
            i_cov.write_coverage(b, false)
        })?,
    )?;
    write_file(out, "table2.csv", csv_bytes(|b| g_cov.write_table2(b))?)?;
    let doc = BenchDocument {
        profile: cfg.profile,
        study: &study,
        gsobol_convergence: &conv,
        gsobol_coverage: &g_cov,
        ishigami_coverage: &i_cov,
    };
    write_file(out, "bench.json", json_bytes(&doc)?)
}
