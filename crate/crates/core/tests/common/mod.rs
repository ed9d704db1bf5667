//! Brute-force reference values for the variance decompositions.
//!
//! Everything is integrated on a full tensor Gauss-Legendre grid over all
//! inputs using the predictor itself and the full (non-factorized)
//! correlation function; the inverse correlation matrix comes from a dense LU
//! solve. Nothing here uses the per-dimension integral table.
#![allow(dead_code)]

use gpsobol_core::gp::FittedGp;
use gpsobol_core::inputs::InputSpace;
use gpsobol_core::quadrature::build_rule;
use nalgebra::{DMatrix, DVector};

pub struct Reference {
    pub predictor_total: f64,
    pub predictor_numerators: Vec<f64>,
    pub global_total: f64,
    pub global_numerators: Vec<f64>,
}

fn kernel(gp: &FittedGp, a: &[f64], b: &[f64]) -> f64 {
    let p = gp.params();
    let mut s = 0.0;
    for l in 0..a.len() {
        s += p.theta[l] * (a[l] - b[l]).abs().powf(p.p[l]);
    }
    (-s).exp()
}

struct Grid {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    /// Multi-index of each point.
    index: Vec<Vec<usize>>,
    /// Per-dimension weights.
    marginal: Vec<Vec<f64>>,
    nodes: Vec<Vec<f64>>,
}

fn tensor(space: &InputSpace, m: usize) -> Grid {
    let rules: Vec<_> = space.dims().iter().map(|d| build_rule(d, m).unwrap()).collect();
    let d = rules.len();
    let total = m.pow(d as u32);
    let mut g = Grid {
        points: Vec::with_capacity(total),
        weights: Vec::with_capacity(total),
        index: Vec::with_capacity(total),
        marginal: rules.iter().map(|r| r.weights.clone()).collect(),
        nodes: rules.iter().map(|r| r.nodes.clone()).collect(),
    };
    for flat in 0..total {
        let mut rem = flat;
        let mut idx = vec![0; d];
        for slot in idx.iter_mut() {
            *slot = rem % m;
            rem /= m;
        }
        g.points.push((0..d).map(|l| rules[l].nodes[idx[l]]).collect());
        g.weights.push((0..d).map(|l| rules[l].weights[idx[l]]).product());
        g.index.push(idx);
    }
    g
}

fn weighted_variance(values: &[f64], w: &[f64]) -> f64 {
    let mean: f64 = values.iter().zip(w).map(|(v, w)| v * w).sum();
    values.iter().zip(w).map(|(v, w)| w * (v - mean) * (v - mean)).sum()
}

pub fn nested_quadrature(gp: &FittedGp, space: &InputSpace, m: usize) -> Reference {
    let d = gp.dim();
    let n = gp.n();
    let x = gp.points();
    let sigma2 = gp.sigma2();
    let grid = tensor(space, m);

    let r_mat = DMatrix::from_fn(n, n, |i, j| kernel(gp, &x[i], &x[j]) + if i == j { gp.nugget_ratio() } else { 0.0 });
    let lu = r_mat.lu();

    let means: Vec<f64> = grid.points.iter().map(|p| gp.predict_mean(p)).collect();
    let rvecs: Vec<DVector<f64>> =
        grid.points.iter().map(|p| DVector::from_fn(n, |j, _| kernel(gp, p, &x[j]))).collect();
    let solved: Vec<DVector<f64>> = rvecs.iter().map(|r| lu.solve(r).unwrap()).collect();

    let predictor_total = weighted_variance(&means, &grid.weights);

    // ∫ v dη
    let integrated_var: f64 = rvecs
        .iter()
        .zip(&solved)
        .zip(&grid.weights)
        .map(|((r, s), w)| w * sigma2 * (1.0 - r.dot(s)))
        .sum();
    // ∬ c dη dη = σ² (∬R − ūᵀ R⁻¹ ū)
    let mut u_bar = DVector::zeros(n);
    for (r, w) in rvecs.iter().zip(&grid.weights) {
        u_bar += r * *w;
    }
    let mut double_r = 0.0;
    for (p, wp) in grid.points.iter().zip(&grid.weights) {
        let mut row = 0.0;
        for (q, wq) in grid.points.iter().zip(&grid.weights) {
            row += wq * kernel(gp, p, q);
        }
        double_r += wp * row;
    }
    let double_c = sigma2 * (double_r - u_bar.dot(&lu.solve(&u_bar).unwrap()));
    let global_total = predictor_total + integrated_var - double_c;

    let mut predictor_numerators = Vec::with_capacity(d);
    let mut global_numerators = Vec::with_capacity(d);
    for i in 0..d {
        let wi = &grid.marginal[i];
        // conditional mean and averaged cross-correlation at each node of X_i
        let mut cond = vec![0.0; m];
        let mut b: Vec<DVector<f64>> = vec![DVector::zeros(n); m];
        for (k, idx) in grid.index.iter().enumerate() {
            let w_rest = grid.weights[k] / wi[idx[i]];
            cond[idx[i]] += w_rest * means[k];
            b[idx[i]] += &rvecs[k] * w_rest;
        }
        let num1 = weighted_variance(&cond, wi);
        predictor_numerators.push(num1);

        // ∬ ∏_{l≠i} R_l over two independent copies of X_{−i}
        let slice: Vec<usize> = (0..grid.points.len()).filter(|&k| grid.index[k][i] == 0).collect();
        let mut k_rest = 0.0;
        for &p in &slice {
            for &q in &slice {
                let wp = grid.weights[p] / wi[0];
                let wq = grid.weights[q] / wi[0];
                k_rest += wp * wq * kernel(gp, &grid.points[p], &grid.points[q]);
            }
        }
        let b_solved: Vec<DVector<f64>> = b.iter().map(|v| lu.solve(v).unwrap()).collect();
        let theta = gp.params().theta[i];
        let pw = gp.params().p[i];
        let t = &grid.nodes[i];
        let c_a = |a: usize, c: usize| {
            let ri = (-theta * (t[a] - t[c]).abs().powf(pw)).exp();
            sigma2 * (ri * k_rest - b[a].dot(&b_solved[c]))
        };
        let diag: f64 = (0..m).map(|a| wi[a] * c_a(a, a)).sum();
        let mut double = 0.0;
        for a in 0..m {
            for c in 0..m {
                double += wi[a] * wi[c] * c_a(a, c);
            }
        }
        global_numerators.push(num1 + diag - double);
    }

    Reference { predictor_total, predictor_numerators, global_total, global_numerators }
}
