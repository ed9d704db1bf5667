//! Gauss-Legendre rules in probability space.
//!
//! Nodes are Gauss-Legendre abscissae on `[0, 1]` pushed through the quantile
//! function of the target law, so the weights already carry the density:
//! `∫ g dη ≈ Σ w_i g(x_i)` with `Σ w_i = 1`. Nodes cluster where the law puts
//! its mass.
//!
//! For non-uniform laws a quintic smoothstep substitution is inserted between
//! the Gauss-Legendre variable and the probability variable.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};
use crate::inputs::InputDistribution;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub target: InputDistribution,
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, ascending.
pub fn unit_gauss_legendre(n_nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let degree = NonZeroUsize::new(n_nodes).expect("n_nodes > 0");
    let mut pairs: Vec<(f64, f64)> = GaussLegendre::new(degree)
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Quintic smoothstep `u = 10s³ − 15s⁴ + 6s⁵` and its derivative. Flattens the
/// map near both ends so endpoint singularities of the quantile function are
/// damped.
pub(crate) fn smoothstep(s: f64) -> (f64, f64) {
    let u = s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
    let du = 30.0 * s * s * (1.0 - s) * (1.0 - s);
    (u, du)
}

/// Probability-space Gauss-Legendre rule for `dist`. Laws with endpoint
/// singularities in their quantile function (Weibull, trapezoidal) go through
/// an extra smoothstep substitution; the weights still sum to one.
pub fn build_rule(dist: &InputDistribution, n_nodes: usize) -> Result<QuadratureRule> {
    if n_nodes < 2 {
        return Err(Error::InvalidConfig(format!("quadrature needs at least 2 nodes, got {n_nodes}")));
    }
    let (mut unit, mut weights) = unit_gauss_legendre(n_nodes);
    if dist.has_singular_quantile() {
        for (s, w) in unit.iter_mut().zip(weights.iter_mut()) {
            let (u, du) = smoothstep(*s);
            *s = u;
            *w *= du;
        }
    }
    let nodes = unit.iter().map(|&u| dist.quantile_unchecked(u)).collect();
    Ok(QuadratureRule { nodes, weights, target: *dist })
}

/// Composite rule: an `nodes_per_panel`-point smoothstep Gauss-Legendre rule on
/// each probability cell between consecutive cut points. Cuts are given in
/// value space; the kinks of the density are always added. Integrands that are
/// only piecewise smooth (kernels with `p < 2`) converge fast when their kinks
/// sit on cell boundaries.
pub fn build_composite_rule(dist: &InputDistribution, nodes_per_panel: usize, cuts: &[f64]) -> Result<QuadratureRule> {
    if nodes_per_panel < 2 {
        return Err(Error::InvalidConfig(format!("quadrature needs at least 2 nodes, got {nodes_per_panel}")));
    }
    let mut probs = vec![0.0, 1.0];
    probs.extend(cuts.iter().chain(&dist.interior_knots()).map(|&x| dist.cdf(x)).filter(|u| *u > 0.0 && *u < 1.0));
    probs.sort_by(f64::total_cmp);
    probs.dedup_by(|b, a| *b - *a <= MIN_CELL);
    let (unit, unit_w) = unit_gauss_legendre(nodes_per_panel);
    let cells = probs.len() - 1;
    let mut nodes = Vec::with_capacity(cells * nodes_per_panel);
    let mut weights = Vec::with_capacity(cells * nodes_per_panel);
    for cell in probs.windows(2) {
        let width = cell[1] - cell[0];
        for (s, w) in unit.iter().zip(&unit_w) {
            let (u, du) = smoothstep(*s);
            nodes.push(dist.quantile_unchecked(cell[0] + width * u));
            weights.push(w * du * width);
        }
    }
    Ok(QuadratureRule { nodes, weights, target: *dist })
}

const MIN_CELL: f64 = 1e-14;

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫ g dη` for the target law.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * g(x)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|t| t)
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.integrate(|t| (t - mean) * (t - mean))
    }
}
