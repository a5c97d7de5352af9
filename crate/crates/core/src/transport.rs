//! Discrete center-outward distribution and quantile functions.
//!
//! The empirical center-outward distribution function maps the sample onto a
//! regular polar grid of the punctured unit disk through the coupling that
//! minimizes total squared distance. Ranks are the grid radii, signs the grid
//! directions. Quantile contours are read back off the coupling by ring.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::assignment::{self, CostMatrix, SquaredEuclidean};
use crate::base::{dist_sq, norm, DirectionGrid, QuantileOrder, Vector};
use crate::distributions::SampleSet;
use crate::error::{Error, Result};

pub use crate::contour::{Contour, Method};

/// Regular `n_rings x n_sectors` grid of the punctured unit disk.
///
/// Node `(i, j)`, for ring `i = 1..=n_rings` and sector `j = 0..n_sectors`,
/// sits at radius `i / (n_rings + 1)` and angle `phase + 2 pi j / n_sectors`.
/// Nodes are stored ring by ring.
#[derive(Clone, Debug, PartialEq)]
pub struct SphericalGrid {
    n_rings: usize,
    n_sectors: usize,
    phase: f64,
    points: Vec<f64>,
}

impl SphericalGrid {
    pub fn with_phase(n_rings: usize, n_sectors: usize, phase: f64) -> Result<Self> {
        if n_rings < 1 || n_sectors < 3 {
            return Err(Error::InvalidParameter(format!(
                "grid needs n_R >= 1 and n_S >= 3, got {n_rings} x {n_sectors}"
            )));
        }
        let mut points = Vec::with_capacity(2 * n_rings * n_sectors);
        for i in 1..=n_rings {
            let r = i as f64 / (n_rings + 1) as f64;
            for j in 0..n_sectors {
                let theta = phase + TAU * j as f64 / n_sectors as f64;
                points.push(r * theta.cos());
                points.push(r * theta.sin());
            }
        }
        Ok(Self {
            n_rings,
            n_sectors,
            phase,
            points,
        })
    }

    pub fn n_rings(&self) -> usize {
        self.n_rings
    }

    pub fn n_sectors(&self) -> usize {
        self.n_sectors
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn len(&self) -> usize {
        self.n_rings * self.n_sectors
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Radius of ring `i` (1-based).
    pub fn ring_radius(&self, ring: usize) -> f64 {
        ring as f64 / (self.n_rings + 1) as f64
    }

    /// Flat index of node `(ring, sector)`, ring 1-based.
    pub fn index(&self, ring: usize, sector: usize) -> usize {
        (ring - 1) * self.n_sectors + sector
    }

    /// `(ring, sector)` of a flat index, ring 1-based.
    pub fn ring_sector(&self, index: usize) -> (usize, usize) {
        (index / self.n_sectors + 1, index % self.n_sectors)
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.points[2 * index..2 * index + 2]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }
}

/// The regular grid with zero phase.
pub fn make_spherical_grid(n_rings: usize, n_sectors: usize) -> Result<SphericalGrid> {
    SphericalGrid::with_phase(n_rings, n_sectors, 0.0)
}

/// Optimal coupling between a sample and a grid of the same size.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    to_grid: Vec<usize>,
    to_sample: Vec<usize>,
    cost: f64,
}

impl Assignment {
    /// Grid index assigned to each sample index.
    pub fn to_grid(&self) -> &[usize] {
        &self.to_grid
    }

    /// Sample index assigned to each grid index.
    pub fn to_sample(&self) -> &[usize] {
        &self.to_sample
    }

    /// Total squared distance, summed in sample order.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn len(&self) -> usize {
        self.to_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_grid.is_empty()
    }
}

fn costs<'a>(sample: &'a SampleSet, grid: &'a SphericalGrid) -> Result<SquaredEuclidean<'a>> {
    if sample.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: sample.dim(),
        });
    }
    if sample.len() != grid.len() {
        return Err(Error::SizeMismatch {
            sample: sample.len(),
            grid: grid.len(),
        });
    }
    Ok(SquaredEuclidean {
        rows: sample.as_flat(),
        cols: grid.as_flat(),
        dim: 2,
    })
}

/// Exact least-squares coupling of `sample` with `grid`.
pub fn optimal_assignment(sample: &SampleSet, grid: &SphericalGrid) -> Result<Assignment> {
    let c = costs(sample, grid)?;
    let to_grid = assignment::solve(&c);
    let cost = assignment::total_cost(&c, &to_grid);
    let mut to_sample = vec![0; to_grid.len()];
    for (k, &g) in to_grid.iter().enumerate() {
        to_sample[g] = k;
    }
    Ok(Assignment {
        to_grid,
        to_sample,
        cost,
    })
}

/// Largest cost reduction achievable by exchanging the grid targets of two
/// sample points. An optimal coupling gives a value `<= 0` up to rounding.
pub fn max_two_swap_gain(
    assignment: &Assignment,
    sample: &SampleSet,
    grid: &SphericalGrid,
) -> Result<f64> {
    let c = costs(sample, grid)?;
    let p = &assignment.to_grid;
    let n = p.len();
    Ok((0..n)
        .into_par_iter()
        .map(|k| {
            let ck = c.cost(k, p[k]);
            (k + 1..n)
                .map(|l| ck + c.cost(l, p[l]) - c.cost(k, p[l]) - c.cost(l, p[k]))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max))
}

/// `F_N(X_k)`: the grid node coupled with sample point `k`.
pub fn empirical_center_outward_cdf(
    assignment: &Assignment,
    grid: &SphericalGrid,
    k: usize,
) -> Result<Vector> {
    let &g = assignment.to_grid.get(k).ok_or(Error::IndexOutOfRange {
        index: k,
        len: assignment.len(),
    })?;
    Ok(Vector::from_raw(grid.point(g).to_vec()))
}

/// Inverse-squared-distance weighted average of the coupled grid values of
/// the `m` sample points nearest to `z`, clamped to the closed unit disk.
pub fn interpolated_center_outward_cdf(
    assignment: &Assignment,
    grid: &SphericalGrid,
    sample: &SampleSet,
    z: &[f64],
    m: usize,
) -> Result<Vector> {
    if m == 0 {
        return Err(Error::InvalidParameter(
            "neighbor count must be >= 1".into(),
        ));
    }
    if z.len() != sample.dim() {
        return Err(Error::DimensionMismatch {
            expected: sample.dim(),
            found: z.len(),
        });
    }
    if assignment.len() != sample.len() {
        return Err(Error::SizeMismatch {
            sample: sample.len(),
            grid: assignment.len(),
        });
    }
    let mut by_dist: Vec<(f64, usize)> = sample.points().map(|x| dist_sq(z, x)).zip(0..).collect();
    let m = m.min(by_dist.len());
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if m < by_dist.len() {
        by_dist.select_nth_unstable_by(m - 1, cmp);
        by_dist.truncate(m);
    }
    by_dist.sort_by(cmp);
    if by_dist[0].0 == 0.0 {
        return Ok(Vector::from_raw(
            grid.point(assignment.to_grid[by_dist[0].1]).to_vec(),
        ));
    }
    let mut acc = [0.0; 2];
    let mut wsum = 0.0;
    for &(d2, k) in &by_dist {
        let w = 1.0 / d2;
        let g = grid.point(assignment.to_grid[k]);
        acc[0] += w * g[0];
        acc[1] += w * g[1];
        wsum += w;
    }
    let mut out = vec![acc[0] / wsum, acc[1] / wsum];
    let r = norm(&out);
    if r > 1.0 {
        out.iter_mut().for_each(|c| *c /= r);
    }
    Ok(Vector::from_raw(out))
}

/// Center-outward contour of order `tau`.
///
/// For each direction the two rings bracketing `tau` are located; on each
/// ring the node with the nearest angle gives a sample point through the
/// coupling, and the vertex interpolates linearly between those two points
/// by radius. Orders outside the ring range use the nearest ring and set
/// [`Contour::ring_fallback`].
pub fn center_outward_contour(
    assignment: &Assignment,
    grid: &SphericalGrid,
    sample: &SampleSet,
    tau: QuantileOrder,
    dirs: &DirectionGrid,
) -> Result<Contour> {
    if tau.value() <= 0.0 {
        return Err(Error::InvalidOrder(tau.value()));
    }
    if assignment.len() != grid.len() || sample.len() != grid.len() {
        return Err(Error::SizeMismatch {
            sample: sample.len(),
            grid: grid.len(),
        });
    }
    let n_r = grid.n_rings();
    let scaled = tau.value() * (n_r + 1) as f64;
    let lower = scaled.floor() as usize;
    let frac = scaled - lower as f64;
    // (ring, weight) pairs.
    let (rings, ring_fallback): (Vec<(usize, f64)>, bool) = if lower == 0 {
        (vec![(1, 1.0)], true)
    } else if lower >= n_r {
        (vec![(n_r, 1.0)], !(lower == n_r && frac == 0.0))
    } else if frac == 0.0 {
        (vec![(lower, 1.0)], false)
    } else {
        (vec![(lower, 1.0 - frac), (lower + 1, frac)], false)
    };

    let n_s = grid.n_sectors();
    let vertices = (0..dirs.len())
        .map(|k| {
            let rel = (dirs.angle(k) - grid.phase()).rem_euclid(TAU);
            let sector = ((rel * n_s as f64 / TAU).round() as usize) % n_s;
            let mut v = [0.0; 2];
            for &(ring, w) in &rings {
                let x = sample.point(assignment.to_sample[grid.index(ring, sector)]);
                v[0] += w * x[0];
                v[1] += w * x[1];
            }
            Vector::from_raw(v.to_vec())
        })
        .collect();
    Ok(Contour {
        tau,
        method: Method::CenterOutward,
        vertices,
        closed: true,
        failed: Vec::new(),
        ring_fallback,
        solved_order: tau.value(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{sample, DistributionSpec};

    #[test]
    fn small_grid_layout() {
        let g = make_spherical_grid(2, 4).unwrap();
        assert_eq!(g.len(), 8);
        let expected = [
            [1.0 / 3.0, 0.0],
            [0.0, 1.0 / 3.0],
            [-1.0 / 3.0, 0.0],
            [0.0, -1.0 / 3.0],
            [2.0 / 3.0, 0.0],
            [0.0, 2.0 / 3.0],
            [-2.0 / 3.0, 0.0],
            [0.0, -2.0 / 3.0],
        ];
        for (i, e) in expected.iter().enumerate() {
            let p = g.point(i);
            assert!(
                (p[0] - e[0]).abs() < 1e-15 && (p[1] - e[1]).abs() < 1e-15,
                "{i}: {p:?}"
            );
        }
        assert_eq!(g.ring_sector(5), (2, 1));
        assert_eq!(g.index(2, 1), 5);
    }

    #[test]
    fn figure_grid_sizes() {
        assert_eq!(make_spherical_grid(40, 60).unwrap().len(), 2400);
        assert_eq!(make_spherical_grid(20, 50).unwrap().len(), 1000);
        assert!(make_spherical_grid(0, 10).is_err());
        assert!(make_spherical_grid(3, 2).is_err());
        let g = make_spherical_grid(5, 7).unwrap();
        assert!((0..g.len()).all(|i| {
            let r = norm(g.point(i));
            r > 0.0 && r < 1.0
        }));
    }

    #[test]
    fn perfect_match_has_zero_cost() {
        let g = make_spherical_grid(3, 5).unwrap();
        let mut pts: Vec<Vec<f64>> = (0..g.len()).map(|i| g.point(i).to_vec()).collect();
        pts.reverse();
        let s = SampleSet::from_points(&pts).unwrap();
        let a = optimal_assignment(&s, &g).unwrap();
        assert_eq!(a.cost(), 0.0);
        for k in 0..s.len() {
            assert_eq!(
                empirical_center_outward_cdf(&a, &g, k).unwrap().as_slice(),
                s.point(k)
            );
            assert_eq!(
                interpolated_center_outward_cdf(&a, &g, &s, s.point(k), 1)
                    .unwrap()
                    .as_slice(),
                s.point(k)
            );
        }
    }

    #[test]
    fn size_mismatch_rejected() {
        let g = make_spherical_grid(2, 3).unwrap();
        let s = sample(&DistributionSpec::standard_gaussian(2), 5, 0).unwrap();
        assert!(matches!(
            optimal_assignment(&s, &g),
            Err(Error::SizeMismatch { sample: 5, grid: 6 })
        ));
    }

    #[test]
    fn six_points_match_enumeration() {
        let g = make_spherical_grid(2, 3).unwrap();
        let s = sample(&DistributionSpec::standard_gaussian(2), 6, 77).unwrap();
        let a = optimal_assignment(&s, &g).unwrap();
        // Enumerate all 720 permutations via Heap's algorithm.
        let cost = |p: &[usize]| -> f64 {
            p.iter()
                .enumerate()
                .map(|(k, &j)| dist_sq(s.point(k), g.point(j)))
                .sum()
        };
        let mut p: Vec<usize> = (0..6).collect();
        let mut c = [0usize; 6];
        let mut best = cost(&p);
        let mut count = 1;
        let mut i = 0;
        while i < 6 {
            if c[i] < i {
                if i % 2 == 0 {
                    p.swap(0, i);
                } else {
                    p.swap(c[i], i);
                }
                best = best.min(cost(&p));
                count += 1;
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        assert_eq!(count, 720);
        assert_eq!(a.cost(), best);
    }

    #[test]
    fn ranks_fill_every_ring() {
        let g = make_spherical_grid(6, 10).unwrap();
        let s = sample(&DistributionSpec::preset("exp").unwrap(), 60, 4).unwrap();
        let a = optimal_assignment(&s, &g).unwrap();
        let mut counts = [0; 7];
        for k in 0..s.len() {
            let r = empirical_center_outward_cdf(&a, &g, k).unwrap().norm();
            let ring = (r * 7.0).round() as usize;
            assert!((r - ring as f64 / 7.0).abs() < 1e-12);
            counts[ring] += 1;
        }
        assert_eq!(&counts[1..], &[10; 6]);
        assert!(empirical_center_outward_cdf(&a, &g, 60).is_err());
        let mut seen = a.to_grid().to_vec();
        seen.sort_unstable();
        assert_eq!(seen, (0..60).collect::<Vec<_>>());
    }

    #[test]
    fn probability_content_of_rings() {
        let g = make_spherical_grid(9, 8).unwrap();
        let s = sample(&DistributionSpec::preset("skewt").unwrap(), 72, 2).unwrap();
        let a = optimal_assignment(&s, &g).unwrap();
        for tau in [0.15, 0.33, 0.55, 0.77, 0.95] {
            let inside = (0..s.len())
                .filter(|&k| empirical_center_outward_cdf(&a, &g, k).unwrap().norm() < tau)
                .count();
            assert_eq!(inside, (tau * 10.0f64).floor() as usize * 8, "tau {tau}");
        }
    }

    #[test]
    fn full_neighborhood_averages_to_grid_barycenter() {
        let g = make_spherical_grid(3, 8).unwrap();
        // Sample on a circle of radius 10 around the origin: the origin is
        // equidistant from every point, so all weights agree.
        let pts: Vec<[f64; 2]> = (0..24)
            .map(|i| {
                let t = TAU * i as f64 / 24.0 + 0.01;
                [10.0 * t.cos(), 10.0 * t.sin()]
            })
            .collect();
        let s = SampleSet::from_points(&pts).unwrap();
        let a = optimal_assignment(&s, &g).unwrap();
        let f = interpolated_center_outward_cdf(&a, &g, &s, &[0.0, 0.0], 24).unwrap();
        assert!(f.norm() < 1e-12, "{f:?}");
        assert!(interpolated_center_outward_cdf(&a, &g, &s, &[0.0, 0.0], 0).is_err());
    }

    #[test]
    fn contour_bracketing_and_fallback() {
        let g = make_spherical_grid(4, 6).unwrap();
        let s = sample(&DistributionSpec::standard_gaussian(2), 24, 9).unwrap();
        let a = optimal_assignment(&s, &g).unwrap();
        let dirs = crate::base::make_direction_grid(6, 2).unwrap();
        let at_ring =
            center_outward_contour(&a, &g, &s, QuantileOrder::new(0.4).unwrap(), &dirs).unwrap();
        assert!(!at_ring.ring_fallback);
        for (k, v) in at_ring.vertices.iter().enumerate() {
            let x = s.point(a.to_sample()[g.index(2, k)]);
            assert!((v[0] - x[0]).abs() < 1e-12 && (v[1] - x[1]).abs() < 1e-12);
        }
        let below =
            center_outward_contour(&a, &g, &s, QuantileOrder::new(0.1).unwrap(), &dirs).unwrap();
        let above =
            center_outward_contour(&a, &g, &s, QuantileOrder::new(0.9).unwrap(), &dirs).unwrap();
        assert!(below.ring_fallback && above.ring_fallback);
        assert!(
            center_outward_contour(&a, &g, &s, QuantileOrder::new(0.0).unwrap(), &dirs).is_err()
        );
        let mid =
            center_outward_contour(&a, &g, &s, QuantileOrder::new(0.5).unwrap(), &dirs).unwrap();
        // 0.5 * 5 = 2.5: halfway between rings 2 and 3.
        let x2 = s.point(a.to_sample()[g.index(2, 0)]);
        let x3 = s.point(a.to_sample()[g.index(3, 0)]);
        assert!((mid.vertices[0][0] - 0.5 * (x2[0] + x3[0])).abs() < 1e-12);
    }
}
