//! Quantile contours as closed planar polygons, plus the polygon utilities
//! used to audit them (containment, convexity, extents).

use std::fmt;
use std::str::FromStr;

use crate::base::{QuantileOrder, Vector};
use crate::distributions::SampleSet;
use crate::error::Error;

/// Which quantile concept produced a contour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    GeometricRelabeled,
    CenterOutward,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Self::GeometricRelabeled => "geometric-relabeled",
            Self::CenterOutward => "center-outward",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "geometric-relabeled" | "geom" => Ok(Self::GeometricRelabeled),
            "center-outward" | "ot" => Ok(Self::CenterOutward),
            other => Err(Error::Config(format!("unknown contour method '{other}'"))),
        }
    }
}

/// An ordered polygon of quantile points of order `tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    pub tau: QuantileOrder,
    pub method: Method,
    /// One vertex per direction of the grid, in grid order.
    pub vertices: Vec<Vector>,
    pub closed: bool,
    /// Directions whose solver did not converge; their vertex is the best
    /// iterate found.
    pub failed: Vec<usize>,
    /// Set when the order fell outside the ring range of the transport grid
    /// and the nearest single ring was used.
    pub ring_fallback: bool,
    /// The order actually used to solve for the vertices (the relabeled order
    /// for geometric contours, `tau` otherwise).
    pub solved_order: f64,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_partial(&self) -> bool {
        !self.failed.is_empty()
    }

    /// Vertices as `[x, y]` pairs; the contour must be planar.
    pub fn planar_vertices(&self) -> Vec<[f64; 2]> {
        self.vertices.iter().map(|v| [v[0], v[1]]).collect()
    }

    /// Fraction of `sample` lying inside the closed polygon (boundary counts
    /// as inside).
    pub fn content(&self, sample: &SampleSet) -> f64 {
        let poly = self.planar_vertices();
        let inside = sample
            .points()
            .filter(|p| point_in_polygon([p[0], p[1]], &poly))
            .count();
        inside as f64 / sample.len() as f64
    }

    /// Half of the horizontal and vertical extents of the polygon.
    pub fn half_extents(&self) -> (f64, f64) {
        half_extents(&self.planar_vertices())
    }
}

/// Even-odd point-in-polygon test; points on an edge count as inside.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    if n == 0 {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if on_segment(p, a, b) {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
    if cross.abs() > 1e-12 * len2.max(f64::MIN_POSITIVE) {
        return false;
    }
    let within = |v: f64, lo: f64, hi: f64| v >= lo.min(hi) && v <= lo.max(hi);
    within(p[0], a[0], b[0]) && within(p[1], a[1], b[1])
}

/// Shoelace signed area (positive for counter-clockwise polygons).
pub fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

/// Indices of reflex vertices: vertices where the polygon turns against its
/// overall orientation by more than `eps` (relative to the adjacent edges).
pub fn reflex_vertices(poly: &[[f64; 2]], eps: f64) -> Vec<usize> {
    let n = poly.len();
    let orientation = signed_area(poly).signum();
    (0..n)
        .filter(|&i| {
            let prev = poly[(i + n - 1) % n];
            let cur = poly[i];
            let next = poly[(i + 1) % n];
            let e1 = [cur[0] - prev[0], cur[1] - prev[1]];
            let e2 = [next[0] - cur[0], next[1] - cur[1]];
            let cross = e1[0] * e2[1] - e1[1] * e2[0];
            let scale = (e1[0].hypot(e1[1]) * e2[0].hypot(e2[1])).max(f64::MIN_POSITIVE);
            cross * orientation / scale < -eps
        })
        .collect()
}

pub fn is_convex(poly: &[[f64; 2]], eps: f64) -> bool {
    reflex_vertices(poly, eps).is_empty()
}

pub fn half_extents(poly: &[[f64; 2]]) -> (f64, f64) {
    let fold = |axis: usize| {
        let (lo, hi) = poly
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[axis]), hi.max(p[axis]))
            });
        (hi - lo) / 2.0
    };
    (fold(0), fold(1))
}
