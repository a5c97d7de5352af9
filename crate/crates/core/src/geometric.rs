//! Empirical geometric distribution and quantile functions.
//!
//! For a sample `X_1..X_N` the empirical geometric distribution function is
//!
//! ```text
//! F(z) = (1/N) sum_{X_i != z} (z - X_i) / |z - X_i|
//! ```
//!
//! the gradient of the convex objective
//! `O(z) = (1/N) sum_i (|z - X_i| - |X_i|) - tau u'z` (up to the linear term).
//! The geometric quantile of order `tau` in direction `u` minimizes `O`, so it
//! solves `F(z) = tau u` whenever it is not a data point.
//!
//! Quantiles are computed with a Weiszfeld fixed-point iteration carrying the
//! Vardi-Zhang correction for iterates that land on data points. If the
//! residual stops shrinking the solver switches to a damped Newton descent on
//! the objective, and converged iterates get a short Newton polish so that
//! equivariance holds to near machine precision.

use rayon::prelude::*;

use crate::base::{
    dist, dot, norm, DirectionGrid, QuantileOrder, UnitDirection, Vector, GEOMETRIC_TOL,
};
use crate::contour::{Contour, Method};
use crate::distributions::SampleSet;
use crate::error::{Error, Result};

/// Distance below which an iterate is treated as sitting on a data point.
const COLLISION_DIST: f64 = 1e-12;
/// Length of the window used to detect a stalled fixed-point iteration.
const STALL_WINDOW: usize = 50;
/// A window stalls if the residual did not at least halve over it.
const STALL_RATIO: f64 = 0.5;
/// Multiplicative damping applied when a fixed-point step increases the objective.
const DAMPING: f64 = 0.9;

/// `F_N(z)` together with the point it was evaluated at.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometricCdfValue {
    pub value: Vector,
    pub at: Vector,
}

/// Solver settings for [`geometric_quantile`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Target norm of the minimum-norm subgradient of the objective.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: GEOMETRIC_TOL,
            max_iter: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometricQuantileResult {
    pub point: Vector,
    pub order: QuantileOrder,
    pub direction: UnitDirection,
    /// Norm of the minimum-norm subgradient at `point`. Away from data points
    /// this is `|F_N(point) - tau u|`.
    pub gradient_norm: f64,
    pub iterations: usize,
}

/// The sorted norms `|F_N(X_i)|`, i.e. the empirical distribution of the
/// geometric rank of the sample points.
#[derive(Clone, Debug, PartialEq)]
pub struct RelabelTable {
    sorted_norms: Vec<f64>,
}

impl RelabelTable {
    pub fn sorted_norms(&self) -> &[f64] {
        &self.sorted_norms
    }

    pub fn len(&self) -> usize {
        self.sorted_norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_norms.is_empty()
    }
}

fn check_dim(sample: &SampleSet, found: usize) -> Result<()> {
    if sample.dim() == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: sample.dim(),
            found,
        })
    }
}

/// `(1/N) sum_i (|z - X_i| - |X_i|) - tau u'z`.
pub fn geometric_objective(
    z: &[f64],
    sample: &SampleSet,
    tau: QuantileOrder,
    u: &UnitDirection,
) -> Result<f64> {
    check_dim(sample, z.len())?;
    check_dim(sample, u.dim())?;
    let mean_dev = sample.points().map(|x| dist(z, x) - norm(x)).sum::<f64>() / sample.len() as f64;
    Ok(mean_dev - tau.value() * dot(u, z))
}

/// Empirical geometric distribution function at `z`.
pub fn geometric_cdf(z: &[f64], sample: &SampleSet) -> Result<GeometricCdfValue> {
    check_dim(sample, z.len())?;
    let d = z.len();
    let mut acc = vec![0.0; d];
    for x in sample.points() {
        let r = dist(z, x);
        if r > 0.0 {
            for k in 0..d {
                acc[k] += (z[k] - x[k]) / r;
            }
        }
    }
    let n = sample.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(GeometricCdfValue {
        value: Vector::from_raw(acc),
        at: Vector::new(z.to_vec())?,
    })
}

/// First-order information of the objective at an iterate.
struct Eval {
    /// `F_N(z) - v` over the points not colliding with `z`.
    residual: Vec<f64>,
    /// Number of data points within [`COLLISION_DIST`] of `z`.
    collisions: usize,
    /// `sum_i w_i` and `sum_i w_i X_i` over non-colliding points, `w_i = 1/|z - X_i|`.
    weight_sum: f64,
    weighted_points: Vec<f64>,
    /// Distance to and index of the nearest data point.
    nearest: (f64, usize),
    mean_dist: f64,
}

impl Eval {
    fn new(z: &[f64], sample: &SampleSet, v: &[f64]) -> Self {
        let d = z.len();
        let n = sample.len() as f64;
        let mut residual = vec![0.0; d];
        let mut weighted_points = vec![0.0; d];
        let mut weight_sum = 0.0;
        let mut collisions = 0;
        let mut nearest = (f64::INFINITY, 0);
        let mut dist_sum = 0.0;
        for (i, x) in sample.points().enumerate() {
            let r = dist(z, x);
            dist_sum += r;
            if r < nearest.0 {
                nearest = (r, i);
            }
            if r < COLLISION_DIST {
                collisions += 1;
                continue;
            }
            let w = 1.0 / r;
            weight_sum += w;
            for k in 0..d {
                residual[k] += (z[k] - x[k]) * w;
                weighted_points[k] += x[k] * w;
            }
        }
        for k in 0..d {
            residual[k] = residual[k] / n - v[k];
        }
        Self {
            residual,
            collisions,
            weight_sum,
            weighted_points,
            nearest,
            mean_dist: dist_sum / n,
        }
    }

    /// Collision mass `c / N`; the subdifferential at a data point is a ball
    /// of this radius around `residual`.
    fn collision_mass(&self, n: usize) -> f64 {
        self.collisions as f64 / n as f64
    }

    fn gradient_norm(&self, n: usize) -> f64 {
        let r = norm(&self.residual);
        if self.collisions > 0 {
            (r - self.collision_mass(n)).max(0.0)
        } else {
            r
        }
    }

    /// Minimum-norm subgradient.
    fn min_norm_subgradient(&self, n: usize) -> Vec<f64> {
        let r = norm(&self.residual);
        if self.collisions == 0 {
            return self.residual.clone();
        }
        let shrink = if r > 0.0 {
            (1.0 - self.collision_mass(n) / r).max(0.0)
        } else {
            0.0
        };
        self.residual.iter().map(|g| g * shrink).collect()
    }
}

/// `O(z_new) - O(z_old)` computed term by term as
/// `(|a|^2 - |b|^2) / (|a| + |b|)` to avoid cancellation near convergence.
fn objective_delta(z_old: &[f64], z_new: &[f64], sample: &SampleSet, v: &[f64]) -> f64 {
    let d = z_old.len();
    let step: Vec<f64> = (0..d).map(|k| z_new[k] - z_old[k]).collect();
    let mut total = 0.0;
    for x in sample.points() {
        let a = dist(z_new, x);
        let b = dist(z_old, x);
        let s = a + b;
        if s > 0.0 {
            // |z_new - x|^2 - |z_old - x|^2 = step . (z_new + z_old - 2x)
            let num: f64 = (0..d)
                .map(|k| step[k] * (z_new[k] + z_old[k] - 2.0 * x[k]))
                .sum();
            total += num / s;
        }
    }
    total / sample.len() as f64 - dot(v, &step)
}

/// `(1/N) sum (I - e e') / r` over non-colliding points, row-major.
fn hessian(z: &[f64], sample: &SampleSet) -> Vec<f64> {
    let d = z.len();
    let mut h = vec![0.0; d * d];
    let mut e = vec![0.0; d];
    for x in sample.points() {
        let r = dist(z, x);
        if r < COLLISION_DIST {
            continue;
        }
        for k in 0..d {
            e[k] = (z[k] - x[k]) / r;
        }
        for a in 0..d {
            h[a * d + a] += 1.0 / r;
            for b in 0..d {
                h[a * d + b] -= e[a] * e[b] / r;
            }
        }
    }
    let n = sample.len() as f64;
    h.iter_mut().for_each(|x| *x /= n);
    h
}

/// Solves `h x = rhs` by Gaussian elimination with partial pivoting.
/// Returns `None` when `h` is numerically singular.
fn solve_linear(mut h: Vec<f64>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let d = rhs.len();
    let scale = h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..d {
        let pivot =
            (col..d).max_by(|&a, &b| h[a * d + col].abs().total_cmp(&h[b * d + col].abs()))?;
        if h[pivot * d + col].abs() <= 1e-14 * scale {
            return None;
        }
        if pivot != col {
            for k in 0..d {
                h.swap(pivot * d + k, col * d + k);
            }
            rhs.swap(pivot, col);
        }
        for row in col + 1..d {
            let f = h[row * d + col] / h[col * d + col];
            for k in col..d {
                h[row * d + k] -= f * h[col * d + k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; d];
    for row in (0..d).rev() {
        let s: f64 = (row + 1..d).map(|k| h[row * d + k] * x[k]).sum();
        x[row] = (rhs[row] - s) / h[row * d + row];
    }
    x.iter().all(|c| c.is_finite()).then_some(x)
}

fn coordinatewise_median(sample: &SampleSet) -> Vec<f64> {
    (0..sample.dim())
        .map(|k| {
            let mut col: Vec<f64> = sample.points().map(|p| p[k]).collect();
            col.sort_by(f64::total_cmp);
            let m = col.len();
            if m % 2 == 1 {
                col[m / 2]
            } else {
                0.5 * (col[m / 2 - 1] + col[m / 2])
            }
        })
        .collect()
}

/// True when a sample of dimension >= 2 lies on a single line (or point).
pub fn is_collinear(sample: &SampleSet) -> bool {
    if sample.dim() < 2 {
        return false;
    }
    let mean = sample.mean();
    let centered = |x: &[f64]| -> Vec<f64> { x.iter().zip(&mean).map(|(a, m)| a - m).collect() };
    let (far, far_norm) = sample
        .points()
        .map(|x| {
            let c = centered(x);
            let n = norm(&c);
            (c, n)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("sample is non-empty");
    if far_norm == 0.0 {
        return true;
    }
    let e: Vec<f64> = far.iter().map(|c| c / far_norm).collect();
    sample.points().all(|x| {
        let c = centered(x);
        let along = dot(&c, &e);
        let off: f64 = c
            .iter()
            .zip(&e)
            .map(|(ci, ei)| (ci - along * ei).powi(2))
            .sum::<f64>()
            .sqrt();
        off <= 1e-10 * far_norm
    })
}

/// Geometric quantile of order `tau` in direction `u`.
///
/// Fails with [`Error::DegenerateSample`] for collinear samples in `d >= 2`
/// and with [`Error::NotConverged`] (carrying the best iterate) when the
/// subgradient norm does not reach `opts.tol` within `opts.max_iter` steps.
pub fn geometric_quantile(
    sample: &SampleSet,
    tau: QuantileOrder,
    u: &UnitDirection,
    opts: SolverOptions,
) -> Result<GeometricQuantileResult> {
    check_dim(sample, u.dim())?;
    if is_collinear(sample) {
        return Err(Error::DegenerateSample);
    }
    solve_unchecked(sample, tau, u, opts)
}

fn solve_unchecked(
    sample: &SampleSet,
    tau: QuantileOrder,
    u: &UnitDirection,
    opts: SolverOptions,
) -> Result<GeometricQuantileResult> {
    let mut solver = Solver::new(sample, tau, u, opts);
    let converged = solver.run();
    let result = GeometricQuantileResult {
        point: Vector::from_raw(solver.best.clone()),
        order: tau,
        direction: u.clone(),
        gradient_norm: solver.best_gnorm,
        iterations: solver.iterations,
    };
    if converged {
        Ok(result)
    } else {
        Err(Error::NotConverged {
            point: result.point.into_inner(),
            gradient_norm: result.gradient_norm,
            iterations: result.iterations,
        })
    }
}

struct Solver<'a> {
    sample: &'a SampleSet,
    /// `tau u`.
    target: Vec<f64>,
    opts: SolverOptions,
    z: Vec<f64>,
    best: Vec<f64>,
    best_gnorm: f64,
    iterations: usize,
}

impl<'a> Solver<'a> {
    fn new(
        sample: &'a SampleSet,
        tau: QuantileOrder,
        u: &UnitDirection,
        opts: SolverOptions,
    ) -> Self {
        let z = coordinatewise_median(sample);
        Self {
            sample,
            target: u.iter().map(|c| c * tau.value()).collect(),
            opts,
            best: z.clone(),
            z,
            best_gnorm: f64::INFINITY,
            iterations: 0,
        }
    }

    fn n(&self) -> usize {
        self.sample.len()
    }

    fn eval(&self, z: &[f64]) -> Eval {
        Eval::new(z, self.sample, &self.target)
    }

    fn record(&mut self, z: &[f64], gnorm: f64) {
        if gnorm < self.best_gnorm {
            self.best_gnorm = gnorm;
            self.best = z.to_vec();
        }
    }

    fn run(&mut self) -> bool {
        let mut eval = self.eval(&self.z.clone());
        let mut window_start = eval.gradient_norm(self.n());
        let mut newton_mode = false;
        loop {
            let gnorm = eval.gradient_norm(self.n());
            let z = self.z.clone();
            self.record(&z, gnorm);
            if gnorm <= self.opts.tol {
                if eval.collisions == 0 {
                    self.polish(eval);
                }
                return true;
            }
            if self.try_snap(&eval) {
                return true;
            }
            if self.iterations >= self.opts.max_iter {
                return false;
            }
            self.iterations += 1;
            if !newton_mode && self.iterations.is_multiple_of(STALL_WINDOW) {
                if gnorm > STALL_RATIO * window_start {
                    newton_mode = true;
                }
                window_start = gnorm;
            }
            let next = if newton_mode {
                match self.descent_step(&eval) {
                    Some(next) => next,
                    None => return false,
                }
            } else {
                self.fixed_point_step(&eval)
            };
            self.z = next;
            eval = self.eval(&self.z.clone());
        }
    }

    /// One Weiszfeld step with the Vardi-Zhang correction at data points and
    /// damping if the objective goes up.
    fn fixed_point_step(&self, eval: &Eval) -> Vec<f64> {
        let d = self.z.len();
        let n = self.n() as f64;
        if eval.weight_sum == 0.0 {
            return self.z.clone();
        }
        let t: Vec<f64> = (0..d)
            .map(|k| (eval.weighted_points[k] + n * self.target[k]) / eval.weight_sum)
            .collect();
        let mut step: Vec<f64> = (0..d).map(|k| t[k] - self.z[k]).collect();
        if eval.collisions > 0 {
            // The pull of the other points, |sum w_i (X_i - z) + N v|, must
            // exceed the collision count before the iterate leaves the point.
            let pull = norm(&step) * eval.weight_sum;
            let keep = (1.0 - eval.collisions as f64 / pull).max(0.0);
            step.iter_mut().for_each(|s| *s *= keep);
        }
        let mut lambda = 1.0;
        loop {
            let cand: Vec<f64> = (0..d).map(|k| self.z[k] + lambda * step[k]).collect();
            if lambda < 1e-6 || objective_delta(&self.z, &cand, self.sample, &self.target) <= 0.0 {
                return cand;
            }
            lambda *= DAMPING;
        }
    }

    /// Backtracking descent on the objective along the Newton direction, or
    /// along the negative minimum-norm subgradient when the Hessian is
    /// singular. Returns `None` when no decrease can be found.
    fn descent_step(&self, eval: &Eval) -> Option<Vec<f64>> {
        let g = eval.min_norm_subgradient(self.n());
        let steepest: Vec<f64> = g.iter().map(|x| -x).collect();
        let mut directions = Vec::with_capacity(2);
        if eval.collisions == 0 {
            if let Some(newton) = solve_linear(hessian(&self.z, self.sample), steepest.clone()) {
                if dot(&newton, &g) < 0.0 {
                    directions.push(newton);
                }
            }
        }
        directions.push(steepest);
        let gnorm = eval.gradient_norm(self.n());
        for dir in directions {
            let slope = dot(&g, &dir);
            let mut lambda = 1.0;
            for _ in 0..60 {
                let cand: Vec<f64> = self
                    .z
                    .iter()
                    .zip(&dir)
                    .map(|(z, s)| z + lambda * s)
                    .collect();
                let delta = objective_delta(&self.z, &cand, self.sample, &self.target);
                if delta <= 1e-4 * lambda * slope {
                    return Some(cand);
                }
                // Near the optimum objective differences drown in rounding;
                // accept steps that shrink the residual without raising O.
                if delta <= 0.0 && self.eval(&cand).gradient_norm(self.n()) < gnorm {
                    return Some(cand);
                }
                lambda *= 0.5;
            }
        }
        None
    }

    /// Tests whether the nearest data point is itself optimal once the
    /// iterate is close to it; fixed-point iterations only approach such
    /// solutions geometrically.
    fn try_snap(&mut self, eval: &Eval) -> bool {
        let (r, idx) = eval.nearest;
        if r == 0.0 || r > 1e-4 * eval.mean_dist {
            return false;
        }
        let x = self.sample.point(idx).to_vec();
        let at_point = self.eval(&x);
        let gnorm = at_point.gradient_norm(self.n());
        if gnorm <= self.opts.tol {
            self.z = x.clone();
            self.best_gnorm = f64::INFINITY;
            self.record(&x, gnorm);
            return true;
        }
        false
    }

    /// A few undamped Newton steps from a converged iterate, kept only while
    /// they shrink the residual.
    fn polish(&mut self, mut eval: Eval) {
        if self.z.len() < 2 {
            return;
        }
        for _ in 0..3 {
            let gnorm = eval.gradient_norm(self.n());
            if gnorm == 0.0 {
                return;
            }
            let rhs: Vec<f64> = eval.residual.iter().map(|x| -x).collect();
            let Some(step) = solve_linear(hessian(&self.z, self.sample), rhs) else {
                return;
            };
            let cand: Vec<f64> = self.z.iter().zip(&step).map(|(z, s)| z + s).collect();
            let next = self.eval(&cand);
            let next_gnorm = next.gradient_norm(self.n());
            if next.collisions > 0 || next_gnorm >= gnorm {
                return;
            }
            self.z = cand.clone();
            self.record(&cand, next_gnorm);
            eval = next;
        }
    }
}

/// Sorted `|F_N(X_i)|` over the sample, each point excluded from its own
/// average.
pub fn build_relabel_table(sample: &SampleSet) -> RelabelTable {
    let mut sorted_norms: Vec<f64> = (0..sample.len())
        .into_par_iter()
        .map(|i| {
            let value = geometric_cdf(sample.point(i), sample).expect("same dimension");
            value.value.norm()
        })
        .collect();
    sorted_norms.sort_by(f64::total_cmp);
    RelabelTable { sorted_norms }
}

/// The geometric order `tau'` whose region holds a fraction `tau` of the
/// sample: the type-1 empirical `tau`-quantile of the table.
pub fn relabel_order(table: &RelabelTable, tau: QuantileOrder) -> QuantileOrder {
    let n = table.len();
    if tau.value() == 0.0 || n == 0 {
        return QuantileOrder::new(0.0).expect("0 is a valid order");
    }
    // Guard against tau * n landing a hair above an integer.
    let rank = ((tau.value() * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let value = table.sorted_norms[rank.min(n) - 1];
    QuantileOrder::new(value).expect("table norms lie in [0, 1)")
}

/// Relabeled geometric contour of order `tau`: the geometric quantiles of
/// the relabeled order along every grid direction.
///
/// Directions whose solve does not converge keep their best iterate and are
/// listed in [`Contour::failed`].
pub fn relabeled_geometric_contour(
    sample: &SampleSet,
    tau: QuantileOrder,
    dirs: &DirectionGrid,
    opts: SolverOptions,
) -> Result<Contour> {
    let table = build_relabel_table(sample);
    relabeled_geometric_contour_with_table(sample, &table, tau, dirs, opts)
}

/// As [`relabeled_geometric_contour`], reusing a precomputed table.
pub fn relabeled_geometric_contour_with_table(
    sample: &SampleSet,
    table: &RelabelTable,
    tau: QuantileOrder,
    dirs: &DirectionGrid,
    opts: SolverOptions,
) -> Result<Contour> {
    check_dim(sample, 2)?;
    if is_collinear(sample) {
        return Err(Error::DegenerateSample);
    }
    let level = relabel_order(table, tau);
    let solved: Vec<Result<(Vector, bool)>> = dirs
        .directions()
        .par_iter()
        .map(|u| match solve_unchecked(sample, level, u, opts) {
            Ok(r) => Ok((r.point, true)),
            Err(Error::NotConverged { point, .. }) => Ok((Vector::from_raw(point), false)),
            Err(e) => Err(e),
        })
        .collect();
    let mut vertices = Vec::with_capacity(dirs.len());
    let mut failed = Vec::new();
    for (k, item) in solved.into_iter().enumerate() {
        let (v, ok) = item?;
        if !ok {
            failed.push(k);
        }
        vertices.push(v);
    }
    Ok(Contour {
        tau,
        method: Method::GeometricRelabeled,
        vertices,
        closed: true,
        failed,
        ring_fallback: false,
        solved_order: level.value(),
    })
}

/// The check function `rho_alpha(z) = |z| + (2 alpha - 1) z`.
pub fn check_function(z: f64, alpha: f64) -> f64 {
    z.abs() + (2.0 * alpha - 1.0) * z
}
