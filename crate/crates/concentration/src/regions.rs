//! Primitive sets, their exact ε-expansions, and empirical risk evaluation
//! of candidate error regions.
//!
//! All memberships are closed (≤). For a union of balls the expansion of the
//! union is the union of the expanded balls, so `bu_advrisk` is exact. For a
//! rectangle-union complement the exact expansion is intractable in high
//! dimension; `cr_advrisk_bound` counts points outside every *base* rectangle,
//! which contains the true expansion: any point within ℓ∞ distance ε of the
//! complement of the expanded union lies outside every base rectangle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::{Error, Result};

/// Axis-aligned closed hyperrectangle given by center and edge-size vectors:
/// membership is `|x_j - center_j| <= edge_j / 2` for every coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperrectangle {
    pub center: Vec<f64>,
    pub edge: Vec<f64>,
}

impl Hyperrectangle {
    pub fn new(center: Vec<f64>, edge: Vec<f64>) -> Result<Self> {
        if center.len() != edge.len() {
            return Err(Error::DimensionMismatch {
                expected: center.len(),
                got: edge.len(),
            });
        }
        if edge.iter().any(|&e| e < 0.0) {
            return Err(Error::param("edge", "edge sizes must be nonnegative"));
        }
        Ok(Hyperrectangle { center, edge })
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        self.center
            .iter()
            .zip(&self.edge)
            .zip(x)
            .all(|((&c, &e), &xj)| (xj - c).abs() <= e / 2.0)
    }
}

/// Closed Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if radius < 0.0 {
            return Err(Error::param("radius", "must be nonnegative"));
        }
        Ok(Ball { center, radius })
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        let d2: f64 = self
            .center
            .iter()
            .zip(x)
            .map(|(&c, &xj)| (xj - c) * (xj - c))
            .sum();
        d2.sqrt() <= self.radius
    }
}

/// Grows every face of a rectangle by `eps`: the exact ℓ∞ ε-expansion.
pub fn rect_expand(rect: &Hyperrectangle, eps: f64) -> Hyperrectangle {
    debug_assert!(eps >= 0.0);
    Hyperrectangle {
        center: rect.center.clone(),
        edge: rect.edge.iter().map(|&e| e + 2.0 * eps).collect(),
    }
}

/// Grows a ball's radius by `eps`: the exact ℓ2 ε-expansion.
pub fn ball_expand(ball: &Ball, eps: f64) -> Ball {
    debug_assert!(eps >= 0.0);
    Ball {
        center: ball.center.clone(),
        radius: ball.radius + eps,
    }
}

/// Error region `E = ℝⁿ \ ∪ rect_expand(base_rects[t], epsilon_inf)`:
/// the complement of a union of ε-expanded rectangles.
///
/// The base rectangle list may be empty, in which case `E` is the whole
/// space (the degenerate region with risk 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectComplementRegion {
    pub base_rects: Vec<Hyperrectangle>,
    pub epsilon_inf: f64,
}

impl RectComplementRegion {
    pub fn new(base_rects: Vec<Hyperrectangle>, epsilon_inf: f64) -> Result<Self> {
        if epsilon_inf < 0.0 {
            return Err(Error::param("epsilon_inf", "must be nonnegative"));
        }
        Ok(RectComplementRegion { base_rects, epsilon_inf })
    }

    /// Membership in the error region itself (complement of expanded rects).
    pub fn contains(&self, x: &[f64]) -> bool {
        !self
            .base_rects
            .iter()
            .any(|r| rect_expand(r, self.epsilon_inf).contains(x))
    }
}

/// Error region `E = ∪ balls[t]` with an ℓ2 expansion budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallUnionRegion {
    pub balls: Vec<Ball>,
    pub epsilon_2: f64,
}

impl BallUnionRegion {
    pub fn new(balls: Vec<Ball>, epsilon_2: f64) -> Result<Self> {
        if epsilon_2 < 0.0 {
            return Err(Error::param("epsilon_2", "must be nonnegative"));
        }
        if balls.is_empty() {
            return Err(Error::param("balls", "at least one ball required"));
        }
        Ok(BallUnionRegion { balls, epsilon_2 })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.balls.iter().any(|b| b.contains(x))
    }

    /// Membership in the exact ε-expansion `E_ε = ∪ ball_expand(b, ε2)`.
    pub fn contains_expanded(&self, x: &[f64]) -> bool {
        self.balls
            .iter()
            .any(|b| ball_expand(b, self.epsilon_2).contains(x))
    }
}

/// Either region family, for reporting and serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Region {
    RectComplement(RectComplementRegion),
    BallUnion(BallUnionRegion),
}

fn check_dim(ds: &Dataset, dim: Option<usize>) -> Result<()> {
    match dim {
        Some(d) if d != ds.n() => Err(Error::DimensionMismatch { expected: d, got: ds.n() }),
        _ => Ok(()),
    }
}

fn fraction(ds: &Dataset, pred: impl Fn(&[f64]) -> bool + Sync) -> f64 {
    let hits: usize = (0..ds.m())
        .into_par_iter()
        .filter(|&i| pred(ds.point(i)))
        .count();
    hits as f64 / ds.m() as f64
}

/// Fraction of points lying in no ε-expanded base rectangle: the empirical
/// measure of the error region `E`.
pub fn cr_risk(region: &RectComplementRegion, ds: &Dataset) -> Result<f64> {
    check_dim(ds, region.base_rects.first().map(|r| r.center.len()))?;
    let expanded: Vec<Hyperrectangle> = region
        .base_rects
        .iter()
        .map(|r| rect_expand(r, region.epsilon_inf))
        .collect();
    Ok(fraction(ds, |x| !expanded.iter().any(|r| r.contains(x))))
}

/// Fraction of points lying in no *base* rectangle: a certified upper bound
/// on the empirical measure of `E_ε`.
pub fn cr_advrisk_bound(region: &RectComplementRegion, ds: &Dataset) -> Result<f64> {
    check_dim(ds, region.base_rects.first().map(|r| r.center.len()))?;
    Ok(fraction(ds, |x| !region.base_rects.iter().any(|r| r.contains(x))))
}

/// Fraction of points inside any ball: the empirical measure of `E`.
pub fn bu_risk(region: &BallUnionRegion, ds: &Dataset) -> Result<f64> {
    check_dim(ds, region.balls.first().map(|b| b.center.len()))?;
    Ok(fraction(ds, |x| region.contains(x)))
}

/// Fraction of points inside any ε2-expanded ball: the exact empirical
/// measure of `E_ε`.
pub fn bu_advrisk(region: &BallUnionRegion, ds: &Dataset) -> Result<f64> {
    check_dim(ds, region.balls.first().map(|b| b.center.len()))?;
    Ok(fraction(ds, |x| region.contains_expanded(x)))
}

/// The smallest rectangle centered at `center` containing every point of the
/// cluster: `edge_j = 2 · max |x_j - center_j|`.
pub fn bounding_rect(points: &[&[f64]], center: &[f64]) -> Result<Hyperrectangle> {
    if points.is_empty() {
        return Err(Error::param("points", "cluster must be nonempty"));
    }
    let n = center.len();
    for p in points {
        if p.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p.len() });
        }
    }
    let mut edge = vec![0.0; n];
    for p in points {
        for (ej, (&xj, &cj)) in edge.iter_mut().zip(p.iter().zip(center)) {
            *ej = f64::max(*ej, 2.0 * (xj - cj).abs());
        }
    }
    Ok(Hyperrectangle { center: center.to_vec(), edge })
}
