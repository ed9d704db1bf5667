mod common;

use common::nested_quadrature;
use gpsobol_core::bench::pick_freeze;
use gpsobol_core::gp::{fit, FitOptions, FittedGp, KernelParams, TrendKind};
use gpsobol_core::inputs::{lhs_sample, InputDistribution, InputSpace};
use gpsobol_core::integrals::build_table;
use gpsobol_core::sobol::{global_decomposition, predictor_decomposition};

fn check(gp: &FittedGp, space: &InputSpace, nodes: usize) {
    let table = build_table(gp, space, 128).unwrap();
    let pred = predictor_decomposition(gp, space, &table).unwrap();
    let glob = global_decomposition(gp, space, &table).unwrap();
    let oracle = nested_quadrature(gp, space, nodes);

    let tol = 1e-6 * oracle.predictor_total;
    assert!((pred.total_variance - oracle.predictor_total).abs() <= tol, "{} vs {}", pred.total_variance, oracle.predictor_total);
    for (a, b) in pred.numerators.iter().zip(&oracle.predictor_numerators) {
        assert!((a - b).abs() <= tol, "predictor numerator {a} vs {b}");
    }
    let tol = 1e-6 * oracle.global_total;
    assert!((glob.total_variance - oracle.global_total).abs() <= tol, "{} vs {}", glob.total_variance, oracle.global_total);
    for (a, b) in glob.numerators.iter().zip(&oracle.global_numerators) {
        assert!((a - b).abs() <= tol, "global numerator {a} vs {b}");
    }
}

fn unit(d: usize) -> InputSpace {
    InputSpace::iid(InputDistribution::uniform(0.0, 1.0).unwrap(), d).unwrap()
}

fn fitted(space: &InputSpace, n: usize, trend: TrendKind, f: impl Fn(&[f64]) -> f64) -> FittedGp {
    let design = lhs_sample(space, n, 17).unwrap().evaluate(f);
    fit(&design, space, trend, &FitOptions { seed: 3, ..Default::default() }).unwrap()
}

#[test]
fn two_inputs_linear_trend() {
    let space = unit(2);
    let gp = fitted(&space, 15, TrendKind::Linear, |x| (3.0 * x[0]).sin() + x[1] * x[1] + x[0] * x[1]);
    check(&gp, &space, 40);
}

#[test]
fn three_inputs_constant_trend() {
    let space = InputSpace::iid(InputDistribution::uniform(-1.0, 2.0).unwrap(), 3).unwrap();
    let gp = fitted(&space, 20, TrendKind::Constant, |x| x[0].cos() + 0.5 * x[1] - x[2] * x[2] * x[0]);
    check(&gp, &space, 20);
}

#[test]
fn fixed_rough_parameters() {
    let space = unit(2);
    let design = lhs_sample(&space, 12, 5).unwrap().evaluate(|x| (5.0 * x[0]).sin() * x[1] + x[1]);
    let params = KernelParams::new(vec![8.0, 3.0], vec![2.0, 2.0], 2.5).unwrap();
    let gp = FittedGp::from_parts(design, TrendKind::Linear, params, None, 1e-8).unwrap();
    check(&gp, &space, 48);
}

#[test]
fn weibull_and_trapezoidal_inputs() {
    let space = InputSpace::new(vec![
        InputDistribution::weibull(2.0, 1.0, 0.0).unwrap(),
        InputDistribution::trapezoidal(0.0, 1.0, 2.0, 3.0).unwrap(),
    ])
    .unwrap();
    let gp = fitted(&space, 20, TrendKind::Linear, |x| x[0] * x[0] + (x[1]).sin() + 0.3 * x[1] * x[0]);
    check(&gp, &space, 64);
}

#[test]
fn pick_freeze_on_the_predictor() {
    let space = InputSpace::new(vec![
        InputDistribution::uniform(0.0, 1.0).unwrap(),
        InputDistribution::weibull(1.5, 1.0, 0.0).unwrap(),
    ])
    .unwrap();
    let gp = fitted(&space, 15, TrendKind::Linear, |x| (3.0 * x[0]).sin() + x[1] + x[0] * x[1]);
    let table = build_table(&gp, &space, 128).unwrap();
    let s = predictor_decomposition(&gp, &space, &table).unwrap().indices();
    let f = |x: &[f64]| gp.predict_mean(x);
    for i in 0..2 {
        let mc = pick_freeze(&f, &space, i + 1, 2_000_000, 11 + i as u64).unwrap();
        assert!((mc.estimate - s[i]).abs() <= 3.0 * mc.std_error, "input {}: {} vs {} ± {}", i + 1, s[i], mc.estimate, mc.std_error);
    }
}
