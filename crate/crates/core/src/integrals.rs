//! Density-weighted integrals of the one-dimensional correlation factors.
//!
//! With independent inputs and a product kernel, every Sobol quantity reduces
//! to the following per-dimension primitives, evaluated at the learning
//! coordinates `x⁽ʲ⁾_l`:
//!
//! ```text
//! U1_l(j)    = ∫ R_l(t − x⁽ʲ⁾_l) dη_l(t)
//! U2_l(j, k) = ∫ R_l(t − x⁽ʲ⁾_l) R_l(t − x⁽ᵏ⁾_l) dη_l(t)
//! T_l(j)     = ∫ t R_l(t − x⁽ʲ⁾_l) dη_l(t)
//! W_l        = ∬ R_l(t − t') dη_l(t) dη_l(t')
//! ```
//!
//! plus the first two moments of each input for the linear trend.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gp::{corr_1d, FittedGp};
use crate::inputs::InputSpace;
use crate::inputs::InputDistribution;
use crate::quadrature::{build_composite_rule, build_rule, QuadratureRule};

pub const DEFAULT_NODES: usize = 64;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
const REFINE_START: usize = 32;
const REFINE_MAX: usize = 4096;
const ABSOLUTE_FLOOR: f64 = 1e-12;

/// Integral primitives for one input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionIntegrals {
    pub u1: DVector<f64>,
    pub u2: DMatrix<f64>,
    pub t1: DVector<f64>,
    pub w: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelIntegralTable {
    pub dims: Vec<DimensionIntegrals>,
    /// Nodes per probability cell.
    pub n_nodes: usize,
    /// Total rule size per dimension.
    pub rule_sizes: Vec<usize>,
}

/// Plain rule for smooth integrands; cells split at the density kinks and, for
/// `p < 2`, at every learning coordinate.
fn dimension_rule(dist: &InputDistribution, p: f64, coords: &[f64], n_nodes: usize) -> Result<QuadratureRule> {
    if p < 2.0 {
        build_composite_rule(dist, n_nodes, coords)
    } else if !dist.interior_knots().is_empty() {
        build_composite_rule(dist, n_nodes, &[])
    } else {
        build_rule(dist, n_nodes)
    }
}

/// `W = ∫ (∫ R(t − s) dη(s)) dη(t)`. For `p < 2` the inner integral is split
/// at `t`, where the kernel has its kink.
fn double_integral(dist: &InputDistribution, theta: f64, p: f64, n_nodes: usize) -> Result<f64> {
    if theta == 0.0 {
        return Ok(1.0);
    }
    let outer = dimension_rule(dist, 2.0, &[], n_nodes)?;
    let mut total = 0.0;
    for (t, wt) in outer.nodes.iter().zip(&outer.weights) {
        let inner = if p < 2.0 {
            build_composite_rule(dist, n_nodes, &[*t])?.integrate(|s| corr_1d(theta, p, t - s))
        } else {
            outer.integrate(|s| corr_1d(theta, p, t - s))
        };
        total += wt * inner;
    }
    Ok(total)
}

fn dimension_integrals(rule: &QuadratureRule, coords: &[f64], theta: f64, p: f64, w: f64) -> DimensionIntegrals {
    let m = rule.len();
    let n = coords.len();
    // K[q, j] = R_l(t_q − x_j)
    let k = DMatrix::from_fn(m, n, |q, j| corr_1d(theta, p, rule.nodes[q] - coords[j]));
    let weights = DVector::from_column_slice(&rule.weights);
    let u1 = k.tr_mul(&weights);
    let wt = DVector::from_iterator(m, rule.weights.iter().zip(&rule.nodes).map(|(w, t)| w * t));
    let t1 = k.tr_mul(&wt);
    let mut wk = k.clone();
    for (q, mut row) in wk.row_iter_mut().enumerate() {
        row *= rule.weights[q];
    }
    let mut u2 = k.tr_mul(&wk);
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (u2[(i, j)] + u2[(j, i)]);
            u2[(i, j)] = v;
            u2[(j, i)] = v;
        }
    }
    DimensionIntegrals { u1, u2, t1, w, mean: rule.mean(), variance: rule.variance() }
}

fn check_compatible(gp: &FittedGp, space: &InputSpace) -> Result<()> {
    if gp.dim() != space.dim() {
        return Err(Error::DimensionMismatch { expected: gp.dim(), got: space.dim() });
    }
    gp.design().check_inside(space)
}

/// Tabulates every primitive with an `n_nodes`-point rule per dimension.
pub fn build_table(gp: &FittedGp, space: &InputSpace, n_nodes: usize) -> Result<KernelIntegralTable> {
    check_compatible(gp, space)?;
    let params = gp.params();
    let built = (0..gp.dim())
        .into_par_iter()
        .map(|l| {
            let dist = space.get(l);
            let (theta, p) = (params.theta[l], params.p[l]);
            let coords: Vec<f64> = gp.points().iter().map(|x| x[l]).collect();
            let rule = dimension_rule(dist, p, &coords, n_nodes)?;
            let w = double_integral(dist, theta, p, n_nodes)?;
            Ok((dimension_integrals(&rule, &coords, theta, p, w), rule.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (dims, rule_sizes) = built.into_iter().unzip();
    Ok(KernelIntegralTable { dims, n_nodes, rule_sizes })
}

/// Doubles the node count (per cell) from 32 until no table entry moves by more than
/// `tol` (relative, with a 1e-12 absolute floor).
pub fn refine_until_stable(gp: &FittedGp, space: &InputSpace, tol: f64) -> Result<KernelIntegralTable> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    let mut coarse = build_table(gp, space, REFINE_START)?;
    let mut n_nodes = REFINE_START;
    loop {
        n_nodes *= 2;
        let fine = build_table(gp, space, n_nodes)?;
        let (entry, change) = coarse.worst_change(&fine, tol);
        if change <= 1.0 {
            log::debug!("kernel integrals converged at {n_nodes} nodes");
            return Ok(fine);
        }
        if n_nodes >= REFINE_MAX {
            return Err(Error::QuadratureNotConverged { n_nodes, entry, change: change * tol });
        }
        coarse = fine;
    }
}

fn scaled_change(a: f64, b: f64, tol: f64) -> f64 {
    (a - b).abs() / (tol * b.abs()).max(ABSOLUTE_FLOOR)
}

impl KernelIntegralTable {
    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn n(&self) -> usize {
        self.dims.first().map_or(0, |d| d.u1.len())
    }

    /// Largest entry change relative to its allowance `max(tol·|b|, 1e-12)`,
    /// with the entry's name.
    pub fn worst_change(&self, other: &Self, tol: f64) -> (String, f64) {
        let mut worst = (String::new(), 0.0);
        let mut track = |name: &dyn Fn() -> String, a: f64, b: f64| {
            let c = scaled_change(a, b, tol);
            if c > worst.1 || c.is_nan() {
                worst = (name(), c);
            }
        };
        for (l, (a, b)) in self.dims.iter().zip(&other.dims).enumerate() {
            track(&|| format!("W[{l}]"), a.w, b.w);
            track(&|| format!("mean[{l}]"), a.mean, b.mean);
            track(&|| format!("variance[{l}]"), a.variance, b.variance);
            for j in 0..a.u1.len() {
                track(&|| format!("U1[{l}][{j}]"), a.u1[j], b.u1[j]);
                track(&|| format!("T[{l}][{j}]"), a.t1[j], b.t1[j]);
                for k in 0..=j {
                    track(&|| format!("U2[{l}][{j},{k}]"), a.u2[(j, k)], b.u2[(j, k)]);
                }
            }
        }
        worst
    }

    /// Largest absolute difference over all entries.
    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        let mut m: f64 = 0.0;
        for (a, b) in self.dims.iter().zip(&other.dims) {
            m = m
                .max((a.w - b.w).abs())
                .max((a.mean - b.mean).abs())
                .max((a.variance - b.variance).abs())
                .max((&a.u1 - &b.u1).amax())
                .max((&a.t1 - &b.t1).amax())
                .max((&a.u2 - &b.u2).amax());
        }
        m
    }

    /// `∏_{l ≠ skip} U1_l(j)` for every learning point.
    pub fn u1_product(&self, skip: Option<usize>) -> DVector<f64> {
        let mut out = DVector::from_element(self.n(), 1.0);
        for (l, d) in self.dims.iter().enumerate() {
            if Some(l) != skip {
                out.component_mul_assign(&d.u1);
            }
        }
        out
    }

    /// `∏_{l ≠ skip} W_l`.
    pub fn w_product(&self, skip: Option<usize>) -> f64 {
        self.dims.iter().enumerate().filter(|(l, _)| Some(*l) != skip).map(|(_, d)| d.w).product()
    }

    /// Element-wise `∏_l U2_l`.
    pub fn u2_product(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::from_element(n, n, 1.0);
        for d in &self.dims {
            out.component_mul_assign(&d.u2);
        }
        out
    }

    /// Diagnostic dump: `dim,entry,j,k,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "dim,entry,j,k,value")?;
        for (l, d) in self.dims.iter().enumerate() {
            writeln!(out, "{l},W,,,{:.16e}", d.w)?;
            writeln!(out, "{l},mean,,,{:.16e}", d.mean)?;
            writeln!(out, "{l},variance,,,{:.16e}", d.variance)?;
            for j in 0..d.u1.len() {
                writeln!(out, "{l},U1,{j},,{:.16e}", d.u1[j])?;
                writeln!(out, "{l},T,{j},,{:.16e}", d.t1[j])?;
                for k in 0..=j {
                    writeln!(out, "{l},U2,{j},{k},{:.16e}", d.u2[(j, k)])?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{FitOptions, KernelParams, TrendKind};
    use crate::inputs::{lhs_sample, Design, InputDistribution};

    fn model(space: &InputSpace, theta: Vec<f64>, p: Vec<f64>, n: usize) -> FittedGp {
        let design = lhs_sample(space, n, 4)
            .unwrap()
            .evaluate(|x| x.iter().enumerate().map(|(i, v)| ((i + 1) as f64 * v).sin()).sum());
        let params = KernelParams::new(theta, p, 1.0).unwrap();
        FittedGp::from_parts(design, TrendKind::Linear, params, None, 1e-8).unwrap()
    }

    fn unit(d: usize) -> InputSpace {
        InputSpace::iid(InputDistribution::uniform(0.0, 1.0).unwrap(), d).unwrap()
    }

    #[test]
    fn flat_kernel_limit() {
        let space = unit(2);
        let gp = model(&space, vec![0.0, 3.0], vec![2.0, 2.0], 10);
        let table = build_table(&gp, &space, 64).unwrap();
        let flat = &table.dims[0];
        assert!(flat.u1.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(flat.u2.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert_eq!(flat.w, 1.0);
    }

    #[test]
    fn single_entry_against_reference() {
        // ∫_0^1 exp(−(t − 0.5)²) dt = √π erf(0.5)
        let space = unit(1);
        let design = Design::new(vec![vec![0.5], vec![0.1], vec![0.9]], Some(vec![0.0, 1.0, 0.5])).unwrap();
        let params = KernelParams::new(vec![1.0], vec![2.0], 1.0).unwrap();
        let gp = FittedGp::from_parts(design, TrendKind::Constant, params, None, 1e-8).unwrap();
        let table = build_table(&gp, &space, 64).unwrap();
        // √π erf(x) = 2 Σ (−1)ⁿ x^(2n+1) / (n! (2n+1))
        let mut reference = 0.0;
        let mut term = 0.5;
        for n in 0..30 {
            reference += 2.0 * term / (2 * n + 1) as f64;
            term *= -0.25 / (n + 1) as f64;
        }
        assert!((table.dims[0].u1[0] - reference).abs() < 1e-13);
        assert!((table.dims[0].u1[0] - 0.92256).abs() < 1e-5);
    }

    #[test]
    fn bound_chain_and_symmetry() {
        let space = InputSpace::new(vec![
            InputDistribution::uniform(-1.0, 2.0).unwrap(),
            InputDistribution::weibull(1.5, 2.0, 0.0).unwrap(),
            InputDistribution::trapezoidal(0.0, 1.0, 2.0, 4.0).unwrap(),
        ])
        .unwrap();
        let gp = model(&space, vec![2.0, 0.7, 1.3], vec![2.0, 1.5, 1.0], 15);
        let table = build_table(&gp, &space, 128).unwrap();
        for d in &table.dims {
            assert!(d.w > 0.0 && d.w <= 1.0);
            for j in 0..15 {
                assert!(d.u1[j] > 0.0 && d.u1[j] <= 1.0);
                for k in 0..15 {
                    let v = d.u2[(j, k)];
                    assert_eq!(v, d.u2[(k, j)]);
                    assert!(v > 0.0 && v <= d.u1[j].min(d.u1[k]) + 1e-15);
                    assert!(v * v <= d.u2[(j, j)] * d.u2[(k, k)] * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn refinement_converges_for_smooth_kernel() {
        let space = unit(2);
        let gp = model(&space, vec![3.0, 10.0], vec![2.0, 2.0], 12);
        let table = refine_until_stable(&gp, &space, 1e-8).unwrap();
        assert!(table.n_nodes <= 64, "needed {} nodes", table.n_nodes);
    }

    #[test]
    fn rough_kernel_needs_more_nodes() {
        let space = unit(1);
        let smooth = model(&space, vec![5.0], vec![2.0], 12);
        let rough = model(&space, vec![5.0], vec![1.0], 12);
        let a = refine_until_stable(&smooth, &space, 1e-5).unwrap();
        let b = refine_until_stable(&rough, &space, 1e-5).unwrap();
        assert!(b.rule_sizes[0] > a.rule_sizes[0], "smooth {:?} rough {:?}", a.rule_sizes, b.rule_sizes);
    }

    #[test]
    fn loose_tolerance_is_close_to_tight() {
        let space = unit(2);
        let gp = model(&space, vec![4.0, 1.0], vec![2.0, 2.0], 10);
        let loose = refine_until_stable(&gp, &space, 1e-2).unwrap();
        let tight = refine_until_stable(&gp, &space, 1e-10).unwrap();
        assert!(loose.max_abs_difference(&tight) <= 1e-2);
    }

    #[test]
    fn non_convergence_is_reported() {
        let space = unit(1);
        // correlation length far below the node spacing
        let gp = model(&space, vec![1e9], vec![2.0], 8);
        match refine_until_stable(&gp, &space, 1e-8) {
            Err(Error::QuadratureNotConverged { n_nodes, .. }) => assert_eq!(n_nodes, 4096),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn csv_dump_has_every_entry() {
        let space = unit(1);
        let gp = model(&space, vec![1.0], vec![2.0], 3);
        let table = build_table(&gp, &space, 16).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        // header + 3 scalars + 3·(U1, T) + 6 U2
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 3 + 6 + 6);
    }

    #[test]
    fn fitted_model_table_matches_design() {
        let space = unit(2);
        let design = lhs_sample(&space, 12, 2).unwrap().evaluate(|x| x[0] + x[1] * x[1]);
        let gp = crate::gp::fit(&design, &space, TrendKind::Linear, &FitOptions::default()).unwrap();
        let table = build_table(&gp, &space, 32).unwrap();
        assert_eq!(table.n(), 12);
        assert_eq!(table.dim(), 2);
        assert!(build_table(&gp, &unit(3), 32).is_err());
    }
}
