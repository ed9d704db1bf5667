//! Box-constrained Hooke-Jeeves pattern search (maximization).

use rand::Rng;

use crate::inputs::lhs_unit;

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

pub struct PatternSearch<'a> {
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub initial_step: Vec<f64>,
    pub min_step: f64,
    pub max_evals: usize,
}

impl PatternSearch<'_> {
    fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Coordinate-wise probe around `base`; returns the improved point and value.
    fn explore<F: FnMut(&[f64]) -> f64>(
        &self,
        f: &mut F,
        base: &[f64],
        base_value: f64,
        step: &[f64],
        evals: &mut usize,
    ) -> (Vec<f64>, f64) {
        let mut x = base.to_vec();
        let mut best = base_value;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                if *evals >= self.max_evals {
                    return (x, best);
                }
                let old = x[i];
                let trial = (old + dir * step[i]).clamp(self.lower[i], self.upper[i]);
                if trial == old {
                    continue;
                }
                x[i] = trial;
                let v = f(&x);
                *evals += 1;
                if v > best {
                    best = v;
                    break;
                }
                x[i] = old;
            }
        }
        (x, best)
    }

    /// Maximizes `f` from `start`. The returned value is never below `f(start)`.
    pub fn maximize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, start: &[f64]) -> SearchResult {
        let mut base = start.to_vec();
        self.clamp(&mut base);
        let mut base_value = f(&base);
        let mut evals = 1;
        let mut step = self.initial_step.clone();

        while step.iter().cloned().fold(0.0, f64::max) >= self.min_step && evals < self.max_evals {
            let (x, v) = self.explore(&mut f, &base, base_value, &step, &mut evals);
            if v > base_value {
                // pattern moves along the successful direction
                let mut prev = base;
                base = x;
                base_value = v;
                loop {
                    let mut jump: Vec<f64> = base.iter().zip(&prev).map(|(b, p)| 2.0 * b - p).collect();
                    self.clamp(&mut jump);
                    if evals >= self.max_evals {
                        break;
                    }
                    let jv = f(&jump);
                    evals += 1;
                    let (xe, ve) = self.explore(&mut f, &jump, jv, &step, &mut evals);
                    if ve > base_value {
                        prev = std::mem::replace(&mut base, xe);
                        base_value = ve;
                    } else {
                        break;
                    }
                }
            } else {
                step.iter_mut().for_each(|s| *s *= 0.5);
            }
        }
        SearchResult { x: base, value: base_value, evals }
    }
}

/// `n` points of `[0,1)^d` chosen as the best of `candidates` Latin hypercubes
/// under the maximin distance criterion.
pub fn maximin_lhs<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize, candidates: usize) -> Vec<Vec<f64>> {
    let mut best = lhs_unit(rng, n, d);
    let mut best_score = min_distance(&best);
    for _ in 1..candidates {
        let cand = lhs_unit(rng, n, d);
        let score = min_distance(&cand);
        if score > best_score {
            best = cand;
            best_score = score;
        }
    }
    best
}

fn min_distance(points: &[Vec<f64>]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..i {
            let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            m = m.min(d2);
        }
    }
    m
}
