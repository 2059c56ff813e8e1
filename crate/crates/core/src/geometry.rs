//! Configuration-space vector math.
//!
//! Every planner in the crate works on [`Config`] values: plain points in a
//! d-dimensional space with the unweighted Euclidean metric. [`Region`] marks
//! a search-space region by its two endpoints and [`Polyline`] is the path
//! representation shared by all planners.

use std::ops::{Add, Mul, Sub};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in configuration space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Config(Vec<f64>);

impl Config {
    /// Panics if `coords` is empty or holds a non-finite value.
    pub fn new(coords: Vec<f64>) -> Self {
        assert!(!coords.is_empty(), "configuration must have at least one coordinate");
        assert!(
            coords.iter().all(|c| c.is_finite()),
            "configuration coordinates must be finite: {coords:?}"
        );
        Config(coords)
    }

    pub fn try_new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::EmptyInput("configuration coordinates"));
        }
        if !coords.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite coordinate in {coords:?}")));
        }
        Ok(Config(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Config::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn dot(&self, other: &Config) -> f64 {
        check_dims(self, other);
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Config> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    /// `self + s * dir`
    pub fn add_scaled(&self, dir: &Config, s: f64) -> Config {
        check_dims(self, dir);
        Config(self.0.iter().zip(&dir.0).map(|(a, d)| a + s * d).collect())
    }

    /// A direction drawn uniformly from the unit sphere.
    pub fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Config {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            if let Some(u) = Config(v).normalized() {
                return u;
            }
        }
    }
}

impl From<Vec<f64>> for Config {
    fn from(coords: Vec<f64>) -> Self {
        Config::new(coords)
    }
}

impl<const N: usize> From<[f64; N]> for Config {
    fn from(coords: [f64; N]) -> Self {
        Config::new(coords.to_vec())
    }
}

fn check_dims(a: &Config, b: &Config) {
    assert_eq!(a.dim(), b.dim(), "configuration dimension mismatch");
}

impl Add for &Config {
    type Output = Config;
    fn add(self, rhs: &Config) -> Config {
        check_dims(self, rhs);
        Config(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Config {
    type Output = Config;
    fn sub(self, rhs: &Config) -> Config {
        check_dims(self, rhs);
        Config(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Mul<f64> for &Config {
    type Output = Config;
    fn mul(self, s: f64) -> Config {
        Config(self.0.iter().map(|a| a * s).collect())
    }
}

/// Search-space region `R[a, b]`, marked by its two endpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub a: Config,
    pub b: Config,
}

impl Region {
    pub fn new(a: Config, b: Config) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch { expected: a.dim(), actual: b.dim() });
        }
        Ok(Region { a, b })
    }
}

/// Piecewise-linear path with at least two points and no repeated
/// consecutive points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    points: Vec<Config>,
}

impl Polyline {
    pub fn new(points: Vec<Config>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidPolyline(format!("need at least 2 points, got {}", points.len())));
        }
        let d = points[0].dim();
        for (i, w) in points.windows(2).enumerate() {
            if w[1].dim() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: w[1].dim() });
            }
            if w[0] == w[1] {
                return Err(Error::InvalidPolyline(format!("points {i} and {} coincide", i + 1)));
            }
        }
        Ok(Polyline { points })
    }

    pub fn points(&self) -> &[Config] {
        &self.points
    }

    pub fn first(&self) -> &Config {
        &self.points[0]
    }

    pub fn last(&self) -> &Config {
        &self.points[self.points.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segments(&self) -> impl Iterator<Item = (&Config, &Config)> {
        self.points.windows(2).map(|w| (&w[0], &w[1]))
    }

    pub fn length(&self) -> f64 {
        polyline_length(self)
    }
}

/// Euclidean distance. Panics on dimension mismatch.
pub fn dist(a: &Config, b: &Config) -> f64 {
    dist_sq(a, b).sqrt()
}

pub fn dist_sq(a: &Config, b: &Config) -> f64 {
    check_dims(a, b);
    a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Line parameter of `p` relative to `a -> b`, and `|b - a|²`.
fn line_param(p: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut num = 0.0;
    let mut len_sq = 0.0;
    for ((pi, ai), bi) in p.iter().zip(a).zip(b) {
        let d = bi - ai;
        num += (pi - ai) * d;
        len_sq += d * d;
    }
    (num / len_sq, len_sq)
}

/// `|p - (a + t (b - a))|²`.
fn offset_sq(p: &[f64], a: &[f64], b: &[f64], t: f64) -> f64 {
    p.iter().zip(a).zip(b).map(|((pi, ai), bi)| (pi - ai - t * (bi - ai)).powi(2)).sum()
}

/// Parameter `t` of the orthogonal projection of `p` onto the infinite line
/// through `r.a` and `r.b`, so that the projection is `a + t (b - a)`.
pub fn proj_scalar(p: &Config, r: &Region) -> Result<f64> {
    if p.dim() != r.a.dim() {
        return Err(Error::DimensionMismatch { expected: r.a.dim(), actual: p.dim() });
    }
    let (t, len_sq) = line_param(&p.0, &r.a.0, &r.b.0);
    if len_sq == 0.0 {
        return Err(Error::DegenerateRegion);
    }
    Ok(t)
}

/// Distance from `p` to the infinite line through `r`, with the projection
/// parameter. Same errors as [`proj_scalar`].
pub fn line_offset(p: &Config, r: &Region) -> Result<(f64, f64)> {
    let t = proj_scalar(p, r)?;
    Ok((t, offset_sq(&p.0, &r.a.0, &r.b.0, t).sqrt()))
}

pub fn proj(p: &Config, r: &Region) -> Result<Config> {
    let t = proj_scalar(p, r)?;
    Ok(r.a.add_scaled(&(&r.b - &r.a), t))
}

/// Heaviside step with `hvs(0) == 1`.
pub fn hvs(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        1.0
    }
}

pub fn polyline_length(p: &Polyline) -> f64 {
    p.segments().map(|(a, b)| dist(a, b)).sum()
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_dist(p: &Config, a: &Config, b: &Config) -> f64 {
    check_dims(p, a);
    check_dims(a, b);
    let (t, len_sq) = line_param(&p.0, &a.0, &b.0);
    if len_sq == 0.0 {
        return dist(p, a);
    }
    offset_sq(&p.0, &a.0, &b.0, t.clamp(0.0, 1.0)).sqrt()
}

/// Largest distance from any point of `points` to the infinite line through
/// `a` and `b`.
pub fn max_line_deviation(points: &[Config], a: &Config, b: &Config) -> Result<f64> {
    let r = Region::new(a.clone(), b.clone())?;
    let mut worst = 0.0f64;
    for p in points {
        worst = worst.max(dist(p, &proj(p, &r)?));
    }
    Ok(worst)
}
