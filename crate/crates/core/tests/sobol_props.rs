use gpsobol_core::bench::{gsobol, ishigami, pick_freeze, GSOBOL_DEFAULT_A};
use gpsobol_core::effect::build_main_effect;
use gpsobol_core::gp::{fit, FitOptions, TrendKind};
use gpsobol_core::inputs::{lhs_sample, InputDistribution, InputSpace};
use gpsobol_core::integrals::refine_until_stable;
use gpsobol_core::sobol::{sobol_global_mean, sobol_global_std, sobol_predictor};

#[test]
fn ishigami_indices_from_a_good_model() {
    let f = ishigami();
    let design = lhs_sample(&f.space, 200, 5).unwrap().evaluate(|x| f.evaluate(x));
    let gp = fit(&design, &f.space, TrendKind::Linear, &FitOptions { seed: 5, ..Default::default() }).unwrap();
    let table = refine_until_stable(&gp, &f.space, 1e-8).unwrap();
    let s = sobol_predictor(&gp, &f.space, &table).unwrap();
    for (e, t) in s.iter().zip(&f.truth) {
        assert!((e.value - t).abs() < 0.03, "input {}: {} vs {t}", e.input_index, e.value);
    }
}

#[test]
fn vanishing_process_variance_merges_the_approaches() {
    let space = InputSpace::iid(InputDistribution::uniform(0.0, 1.0).unwrap(), 2).unwrap();
    let design = lhs_sample(&space, 60, 3).unwrap().evaluate(|x| 2.0 * x[0] + x[1] + 0.05 * (3.0 * x[0]).sin());
    let gp = fit(&design, &space, TrendKind::Linear, &FitOptions::default()).unwrap();
    let table = refine_until_stable(&gp, &space, 1e-8).unwrap();
    let s = sobol_predictor(&gp, &space, &table).unwrap();
    let mu = sobol_global_mean(&gp, &space, &table).unwrap();
    for (a, b) in s.iter().zip(&mu) {
        assert!((a.value - b.value).abs() < 0.01);
    }
}

#[test]
fn global_std_shrinks_with_more_data() {
    let f = ishigami();
    let mut means = vec![];
    for n in [30, 80, 130] {
        let mut total = [0.0; 2];
        for seed in 0..3u64 {
            let design = lhs_sample(&f.space, n, 40 + seed).unwrap().evaluate(|x| f.evaluate(x));
            let gp = fit(&design, &f.space, TrendKind::Linear, &FitOptions { seed, ..Default::default() }).unwrap();
            let table = refine_until_stable(&gp, &f.space, 1e-8).unwrap();
            let effects: Vec<_> = (1..=3).map(|i| build_main_effect(&gp, &f.space, &table, i, 100).unwrap()).collect();
            let est = sobol_global_std(&gp, &f.space, &table, &effects).unwrap();
            for i in 0..2 {
                let sd = est[i].std.unwrap();
                assert!(sd > 0.0);
                total[i] += sd / 3.0;
            }
        }
        means.push(total);
    }
    for i in 0..2 {
        assert!(means[0][i] > means[1][i] && means[1][i] > means[2][i], "input {}: {means:?}", i + 1);
    }
}

#[test]
fn analytical_truth_agrees_with_pick_freeze() {
    let g = gsobol(&GSOBOL_DEFAULT_A).unwrap();
    for i in 0..5 {
        let mc = pick_freeze(&|x: &[f64]| g.evaluate(x), &g.space, i + 1, 1_000_000, 100 + i as u64).unwrap();
        assert!((mc.estimate - g.truth[i]).abs() <= 3.0 * mc.std_error, "g-Sobol {}: {} vs {}", i + 1, mc.estimate, g.truth[i]);
    }
    let f = ishigami();
    for i in 0..3 {
        let mc = pick_freeze(&|x: &[f64]| f.evaluate(x), &f.space, i + 1, 1_000_000, 200 + i as u64).unwrap();
        assert!((mc.estimate - f.truth[i]).abs() <= 3.0 * mc.std_error, "Ishigami {}: {} vs {}", i + 1, mc.estimate, f.truth[i]);
        assert!((mc.estimate - f.truth[i]).abs() < 0.005);
    }
}
