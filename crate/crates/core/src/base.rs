//! Shared numeric types: points, unit directions, quantile orders and the
//! planar direction grids along which contours are traced.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on unit norms for [`UnitDirection`].
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Default tolerance on the geometric first-order residual.
pub const GEOMETRIC_TOL: f64 = 1e-8;

/// Numerical tolerances used across the crate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Target norm of `F_N(z) - tau u` for the geometric solver.
    pub geometric: f64,
    /// Allowed deviation of direction norms from one.
    pub grid: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            geometric: GEOMETRIC_TOL,
            grid: UNIT_NORM_TOL,
        }
    }
}

/// A point of `R^d` with finite coordinates.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("vector must have d >= 1".into()));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "vector coordinate {bad} is not finite"
            )));
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    // Internal constructor for values computed from finite inputs.
    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        debug_assert!(!coords.is_empty());
        Self(coords)
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

/// A point of the unit sphere `S^{d-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitDirection(Vector);

impl UnitDirection {
    /// Wraps `coords`, which must already have unit norm within [`UNIT_NORM_TOL`].
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let v = Vector::new(coords)?;
        let n = v.norm();
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidParameter(format!(
                "direction has norm {n}, expected 1"
            )));
        }
        Ok(Self(v))
    }

    /// Normalizes a nonzero vector.
    pub fn normalize(coords: Vec<f64>) -> Result<Self> {
        let v = Vector::new(coords)?;
        let n = v.norm();
        if n == 0.0 {
            return Err(Error::InvalidParameter(
                "cannot normalize the zero vector".into(),
            ));
        }
        Ok(Self(Vector::from_raw(v.0.iter().map(|c| c / n).collect())))
    }

    /// The planar direction `(cos angle, sin angle)`.
    pub fn from_angle(angle: f64) -> Self {
        Self(Vector::from_raw(vec![angle.cos(), angle.sin()]))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_vector(&self) -> &Vector {
        &self.0
    }
}

impl Deref for UnitDirection {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A quantile order `tau` in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct QuantileOrder(f64);

impl QuantileOrder {
    pub fn new(tau: f64) -> Result<Self> {
        if (0.0..1.0).contains(&tau) {
            Ok(Self(tau))
        } else {
            Err(Error::InvalidOrder(tau))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for QuantileOrder {
    type Error = Error;

    fn try_from(tau: f64) -> Result<Self> {
        Self::new(tau)
    }
}

impl fmt::Display for QuantileOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `K` regularly spaced planar directions.
///
/// Direction `k` (for `k = 0..K`) points at angle `phase + 2 pi k / K`. With the
/// default zero phase the angles are strictly increasing in `[0, 2 pi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionGrid {
    phase: f64,
    directions: Vec<UnitDirection>,
}

impl DirectionGrid {
    /// Same as [`make_direction_grid`] but rotated by `phase` radians.
    pub fn with_phase(k: usize, phase: f64) -> Result<Self> {
        if k < 3 {
            return Err(Error::InvalidParameter(format!(
                "direction grid needs K >= 3, got {k}"
            )));
        }
        let directions = (0..k)
            .map(|i| UnitDirection::from_angle(phase + TAU * i as f64 / k as f64))
            .collect();
        Ok(Self { phase, directions })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn directions(&self) -> &[UnitDirection] {
        &self.directions
    }

    /// Angle of direction `k`, before reduction modulo `2 pi`.
    pub fn angle(&self, k: usize) -> f64 {
        self.phase + TAU * k as f64 / self.directions.len() as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = &UnitDirection> {
        self.directions.iter()
    }
}

/// Builds the regular grid of `k` directions on the unit circle.
///
/// Only `d = 2` is supported; contour polygons are planar.
pub fn make_direction_grid(k: usize, d: usize) -> Result<DirectionGrid> {
    if d != 2 {
        return Err(Error::InvalidParameter(format!(
            "direction grids are planar, got d = {d}"
        )));
    }
    DirectionGrid::with_phase(k, 0.0)
}

/// Cyclical-monotonicity sum `sum_k (G(x_{k+1}) - G(x_k))' x_{k+1}` over the
/// closed cycle `x_1, ..., x_m, x_{m+1} = x_1`.
///
/// `values[k]` is `G(points[k])`. The sum is nonnegative for every cycle iff
/// `G` is the gradient of a convex function.
pub fn cycle_sum<V, P>(values: &[V], points: &[P]) -> Result<f64>
where
    V: AsRef<[f64]>,
    P: AsRef<[f64]>,
{
    let m = points.len();
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "a cycle needs at least 2 points, got {m}"
        )));
    }
    if values.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: values.len(),
        });
    }
    let d = points[0].as_ref().len();
    for v in values
        .iter()
        .map(AsRef::as_ref)
        .chain(points.iter().map(AsRef::as_ref))
    {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: v.len(),
            });
        }
    }
    let mut total = 0.0;
    for k in 0..m {
        let next = (k + 1) % m;
        let (g_next, g_cur, x_next) = (
            values[next].as_ref(),
            values[k].as_ref(),
            points[next].as_ref(),
        );
        total += (0..d)
            .map(|i| (g_next[i] - g_cur[i]) * x_next[i])
            .sum::<f64>();
    }
    Ok(total)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}
