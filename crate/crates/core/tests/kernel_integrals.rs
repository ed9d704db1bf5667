use gpsobol_core::gp::{FittedGp, KernelParams, TrendKind};
use gpsobol_core::inputs::{lhs_sample, InputDistribution, InputSpace};
use gpsobol_core::integrals::{build_table, refine_until_stable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Acc {
    sum: f64,
    sum_sq: f64,
}

impl Acc {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn mean_se(&self, n: f64) -> (f64, f64) {
        let m = self.sum / n;
        (m, ((self.sum_sq / n - m * m).max(0.0) / n).sqrt())
    }
}

/// Every table entry against a plain Monte-Carlo average over 10⁶ draws.
#[test]
fn entries_match_monte_carlo() {
    let space = InputSpace::new(vec![
        InputDistribution::weibull(1.5, 2.0, 0.5).unwrap(),
        InputDistribution::trapezoidal(-1.0, 0.0, 0.5, 2.0).unwrap(),
        InputDistribution::uniform(0.0, 3.0).unwrap(),
    ])
    .unwrap();
    let design = lhs_sample(&space, 6, 3).unwrap().evaluate(|x| x[0] + x[1] * x[2]);
    let params = KernelParams::new(vec![0.8, 2.0, 0.3], vec![2.0, 1.0, 1.7], 1.0).unwrap();
    let gp = FittedGp::from_parts(design, TrendKind::Linear, params.clone(), None, 1e-8).unwrap();
    let table = build_table(&gp, &space, 512).unwrap();
    let n = gp.n();
    let draws = 1_000_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for l in 0..3 {
        let dist = space.get(l);
        let xs: Vec<f64> = gp.points().iter().map(|p| p[l]).collect();
        let zero = || Acc { sum: 0.0, sum_sq: 0.0 };
        let mut u1: Vec<Acc> = (0..n).map(|_| zero()).collect();
        let mut u2: Vec<Acc> = (0..n * n).map(|_| zero()).collect();
        let mut w = zero();
        for _ in 0..draws {
            let t = dist.quantile(rng.random()).unwrap();
            let t2 = dist.quantile(rng.random()).unwrap();
            let r: Vec<f64> = xs.iter().map(|x| params.corr_1d(l, t - x)).collect();
            for j in 0..n {
                u1[j].push(r[j]);
                for k in 0..n {
                    u2[j * n + k].push(r[j] * r[k]);
                }
            }
            w.push(params.corr_1d(l, t - t2));
        }
        let dim = &table.dims[l];
        let nf = draws as f64;
        let check = |name: &str, acc: &Acc, value: f64| {
            let (m, se) = acc.mean_se(nf);
            assert!((m - value).abs() <= 4.0 * se, "{name}: table {value}, MC {m} ± {se}");
        };
        check(&format!("W[{l}]"), &w, dim.w);
        for j in 0..n {
            check(&format!("U1[{l}][{j}]"), &u1[j], dim.u1[j]);
            for k in 0..n {
                check(&format!("U2[{l}][{j},{k}]"), &u2[j * n + k], dim.u2[(j, k)]);
            }
        }
    }
}

#[test]
fn rough_kernel_needs_more_nodes() {
    let space = InputSpace::iid(InputDistribution::uniform(0.0, 1.0).unwrap(), 1).unwrap();
    let design = lhs_sample(&space, 8, 1).unwrap().evaluate(|x| x[0].sin());
    let smooth = KernelParams::new(vec![3.0], vec![2.0], 1.0).unwrap();
    let rough = KernelParams::new(vec![3.0], vec![1.0], 1.0).unwrap();
    let a = FittedGp::from_parts(design.clone(), TrendKind::Linear, smooth, None, 1e-8).unwrap();
    let b = FittedGp::from_parts(design, TrendKind::Linear, rough, None, 1e-8).unwrap();
    let ta = refine_until_stable(&a, &space, 1e-8).unwrap();
    let tb = refine_until_stable(&b, &space, 1e-8).unwrap();
    assert!(ta.n_nodes <= 64);
    assert!(tb.rule_sizes[0] > ta.rule_sizes[0]);
}
