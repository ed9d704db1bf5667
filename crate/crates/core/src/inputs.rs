//! Independent input laws, input spaces, experimental designs and Latin
//! hypercube sampling.
//!
//! Every distribution lives on a finite box `[lo, hi]`. The Weibull law is
//! unbounded above, so it is truncated at its `1 - 1e-12` quantile and
//! renormalized; quadrature and grid discretization then always see a closed
//! interval.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper-tail probability mass removed from the Weibull law.
pub const WEIBULL_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawDistribution {
    Uniform { a: f64, b: f64 },
    Weibull { shape: f64, scale: f64, #[serde(default)] location: f64 },
    Trapezoidal { a: f64, b: f64, c: f64, d: f64 },
}

/// A one-dimensional probability law with finite support.
///
/// JSON form: `{"kind": "uniform", "a": 0, "b": 1}`,
/// `{"kind": "weibull", "shape": 2, "scale": 1, "location": 0}` or
/// `{"kind": "trapezoidal", "a": 0, "b": 1, "c": 2, "d": 3}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub enum InputDistribution {
    Uniform { a: f64, b: f64 },
    Weibull { shape: f64, scale: f64, location: f64 },
    Trapezoidal { a: f64, b: f64, c: f64, d: f64 },
}

impl TryFrom<RawDistribution> for InputDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        match raw {
            RawDistribution::Uniform { a, b } => Self::uniform(a, b),
            RawDistribution::Weibull { shape, scale, location } => {
                Self::weibull(shape, scale, location)
            }
            RawDistribution::Trapezoidal { a, b, c, d } => Self::trapezoidal(a, b, c, d),
        }
    }
}

impl From<InputDistribution> for RawDistribution {
    fn from(d: InputDistribution) -> Self {
        match d {
            InputDistribution::Uniform { a, b } => RawDistribution::Uniform { a, b },
            InputDistribution::Weibull { shape, scale, location } => {
                RawDistribution::Weibull { shape, scale, location }
            }
            InputDistribution::Trapezoidal { a, b, c, d } => {
                RawDistribution::Trapezoidal { a, b, c, d }
            }
        }
    }
}

fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

impl InputDistribution {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !all_finite(&[a, b]) || a >= b {
            return Err(Error::InvalidDistribution(format!("uniform requires a < b, got ({a}, {b})")));
        }
        Ok(Self::Uniform { a, b })
    }

    pub fn weibull(shape: f64, scale: f64, location: f64) -> Result<Self> {
        if !all_finite(&[shape, scale, location]) || shape <= 0.0 || scale <= 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "weibull requires shape > 0 and scale > 0, got ({shape}, {scale})"
            )));
        }
        Ok(Self::Weibull { shape, scale, location })
    }

    pub fn trapezoidal(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if !all_finite(&[a, b, c, d]) || !(a <= b && b <= c && c <= d && a < d) {
            return Err(Error::InvalidDistribution(format!(
                "trapezoidal requires a <= b <= c <= d with a < d, got ({a}, {b}, {c}, {d})"
            )));
        }
        Ok(Self::Trapezoidal { a, b, c, d })
    }

    /// Closed support interval `(lo, hi)`.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Uniform { a, b } => (a, b),
            Self::Weibull { location, .. } => (location, self.weibull_quantile(1.0)),
            Self::Trapezoidal { a, d, .. } => (a, d),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(lo..=hi).contains(&x) {
            return 0.0;
        }
        match *self {
            Self::Uniform { a, b } => 1.0 / (b - a),
            Self::Weibull { shape, scale, location } => {
                let z = (x - location) / scale;
                if z == 0.0 {
                    return match shape {
                        s if s < 1.0 => f64::INFINITY,
                        s if s == 1.0 => 1.0 / scale / (1.0 - WEIBULL_TAIL),
                        _ => 0.0,
                    };
                }
                shape / scale * z.powf(shape - 1.0) * (-z.powf(shape)).exp() / (1.0 - WEIBULL_TAIL)
            }
            Self::Trapezoidal { a, b, c, d } => {
                let h = trapezoid_height(a, b, c, d);
                if x < b {
                    h * (x - a) / (b - a)
                } else if x <= c {
                    h
                } else {
                    h * (d - x) / (d - c)
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        match *self {
            Self::Uniform { a, b } => (x - a) / (b - a),
            Self::Weibull { shape, scale, location } => {
                let z = (x - location) / scale;
                let raw = -(-z.powf(shape)).exp_m1();
                (raw / (1.0 - WEIBULL_TAIL)).min(1.0)
            }
            Self::Trapezoidal { a, b, c, d } => {
                let h = trapezoid_height(a, b, c, d);
                if x < b {
                    h * (x - a) * (x - a) / (2.0 * (b - a))
                } else if x <= c {
                    h * (b - a) / 2.0 + h * (x - b)
                } else {
                    1.0 - h * (d - x) * (d - x) / (2.0 * (d - c))
                }
            }
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::ProbabilityOutOfRange(u));
        }
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        match *self {
            Self::Uniform { a, b } => {
                if u >= 1.0 {
                    b
                } else {
                    a + u * (b - a)
                }
            }
            Self::Weibull { .. } => self.weibull_quantile(u),
            Self::Trapezoidal { a, b, c, d } => {
                let h = trapezoid_height(a, b, c, d);
                let left = h * (b - a) / 2.0;
                let plateau = left + h * (c - b);
                if u <= 0.0 {
                    a
                } else if u >= 1.0 {
                    d
                } else if u < left {
                    a + (2.0 * u * (b - a) / h).sqrt()
                } else if u <= plateau {
                    b + (u - left) / h
                } else {
                    d - (2.0 * (1.0 - u) * (d - c) / h).sqrt()
                }
            }
        }
    }

    /// Points inside the support where the density has a kink.
    pub(crate) fn interior_knots(&self) -> Vec<f64> {
        match *self {
            Self::Trapezoidal { a, b, c, d } => [b, c].into_iter().filter(|&k| k > a && k < d).collect(),
            _ => Vec::new(),
        }
    }

    /// Whether the quantile function has unbounded derivatives at the ends of
    /// `[0, 1]`, which slows Gauss-Legendre convergence in probability space.
    pub(crate) fn has_singular_quantile(&self) -> bool {
        !matches!(self, Self::Uniform { .. })
    }

    fn weibull_quantile(&self, u: f64) -> f64 {
        let Self::Weibull { shape, scale, location } = *self else {
            unreachable!("weibull_quantile on a non-Weibull law")
        };
        // -ln(1 - u (1 - tail)), evaluated without cancellation at both ends
        let s = if u < 0.5 {
            -(-u * (1.0 - WEIBULL_TAIL)).ln_1p()
        } else {
            -((1.0 - u) + u * WEIBULL_TAIL).ln()
        };
        location + scale * s.powf(1.0 / shape)
    }
}

fn trapezoid_height(a: f64, b: f64, c: f64, d: f64) -> f64 {
    2.0 / (d + c - b - a)
}

/// Product of independent input laws, one per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputSpace {
    dims: Vec<InputDistribution>,
}

impl InputSpace {
    pub fn new(dims: Vec<InputDistribution>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidDistribution("input space needs at least one dimension".into()));
        }
        Ok(Self { dims })
    }

    /// `d` copies of the same law.
    pub fn iid(dist: InputDistribution, d: usize) -> Result<Self> {
        Self::new(vec![dist; d])
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dims: Vec<InputDistribution> = serde_json::from_str(text)?;
        Self::new(dims)
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[InputDistribution] {
        &self.dims
    }

    pub fn get(&self, l: usize) -> &InputDistribution {
        &self.dims[l]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.dims).all(|(v, dist)| {
                let (lo, hi) = dist.support();
                (lo..=hi).contains(v)
            })
    }

    /// Maps a point of the unit cube through the per-dimension quantile functions.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.dims)
            .map(|(&ui, dist)| dist.quantile_unchecked(ui.clamp(0.0, 1.0)))
            .collect()
    }

    /// Independent Monte-Carlo draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: Vec<f64> = (0..self.dim()).map(|_| rng.random::<f64>()).collect();
        self.from_unit(&u)
    }
}

/// Experimental design `X_s` with optional responses `Y_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responses: Option<Vec<f64>>,
}

impl Design {
    pub fn new(points: Vec<Vec<f64>>, responses: Option<Vec<f64>>) -> Result<Self> {
        let d = points.first().map_or(0, Vec::len);
        if points.is_empty() || d == 0 {
            return Err(Error::InvalidDesign("design has no points".into()));
        }
        if let Some(row) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: row.len() });
        }
        if let Some(y) = &responses {
            if y.len() != points.len() {
                return Err(Error::InvalidDesign(format!(
                    "{} points but {} responses",
                    points.len(),
                    y.len()
                )));
            }
        }
        if points.iter().flatten().chain(responses.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDesign("non-finite value".into()));
        }
        Ok(Self { points, responses })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Attaches responses computed by `f`.
    pub fn evaluate<F: Fn(&[f64]) -> f64>(mut self, f: F) -> Self {
        self.responses = Some(self.points.iter().map(|p| f(p)).collect());
        self
    }

    pub fn check_inside(&self, space: &InputSpace) -> Result<()> {
        if self.dim() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: self.dim() });
        }
        match self.points.iter().position(|p| !space.contains(p)) {
            Some(i) => Err(Error::InvalidDesign(format!("point {i} lies outside the input support"))),
            None => Ok(()),
        }
    }
}

/// Latin hypercube sample of `n` points.
///
/// Each dimension gets an independent random permutation of the `n`
/// equal-probability strata and a uniform draw inside each stratum; the unit
/// value is then mapped through the quantile function.
pub fn lhs_sample(space: &InputSpace, n: usize, seed: u64) -> Result<Design> {
    if n == 0 {
        return Err(Error::InvalidDesign("LHS needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = lhs_unit(&mut rng, n, space.dim());
    let points = unit.iter().map(|u| space.from_unit(u)).collect();
    Design::new(points, None)
}

/// `n` stratified points in `[0, 1)^d`.
pub(crate) fn lhs_unit<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for l in 0..d {
        perm.shuffle(rng);
        for (point, &stratum) in points.iter_mut().zip(&perm) {
            let jitter: f64 = rng.random();
            point[l] = ((stratum as f64 + jitter) / n as f64).min(1.0 - f64::EPSILON);
        }
    }
    points
}
