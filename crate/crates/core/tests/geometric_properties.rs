use mvquantile::base::{
    cycle_sum, make_direction_grid, DirectionGrid, QuantileOrder, UnitDirection, GEOMETRIC_TOL,
};
use mvquantile::contour::point_in_polygon;
use mvquantile::distributions::{sample, DistributionSpec, SampleSet};
use mvquantile::geometric::{
    check_function, geometric_cdf, geometric_quantile, relabeled_geometric_contour, SolverOptions,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rotate(p: &[f64], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

fn cdf(z: &[f64], s: &SampleSet) -> Vec<f64> {
    geometric_cdf(z, s).unwrap().value.into_inner()
}

fn order(t: f64) -> QuantileOrder {
    QuantileOrder::new(t).unwrap()
}

#[test]
fn monotone_on_random_pairs() {
    let s = sample(&DistributionSpec::preset("skewt").unwrap(), 500, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let z1 = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let z2 = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let sum = cycle_sum(&[cdf(&z1, &s), cdf(&z2, &s)], &[z1, z2]).unwrap();
        assert!(sum >= -1e-9, "pair sum {sum}");
    }
}

#[test]
fn cyclically_monotone_on_random_cycles() {
    let s = sample(&DistributionSpec::preset("banana").unwrap(), 500, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let m = rng.random_range(2..=5);
        // Mix free points with sample points, where F is discontinuous.
        let pts: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                if rng.random_bool(0.3) {
                    s.point(rng.random_range(0..s.len())).to_vec()
                } else {
                    vec![rng.random_range(-6.0..6.0), rng.random_range(-6.0..4.0)]
                }
            })
            .collect();
        let vals: Vec<Vec<f64>> = pts.iter().map(|p| cdf(p, &s)).collect();
        let sum = cycle_sum(&vals, &pts).unwrap();
        assert!(sum >= -1e-9, "cycle sum {sum}");
    }
}

#[test]
fn quantile_inverts_the_distribution_function() {
    let s = sample(&DistributionSpec::preset("gauss-aniso").unwrap(), 800, 5).unwrap();
    for i in 1..=9 {
        let tau = i as f64 / 10.0;
        let u = UnitDirection::from_angle(0.7 * i as f64);
        let q = geometric_quantile(&s, order(tau), &u, SolverOptions::default()).unwrap();
        let f = cdf(&q.point, &s);
        let gap = ((f[0] - tau * u[0]).powi(2) + (f[1] - tau * u[1]).powi(2)).sqrt();
        assert!(gap <= GEOMETRIC_TOL, "tau {tau}: |F(q) - tau u| = {gap}");
    }
}

#[test]
fn quantiles_are_nested() {
    let s = sample(&DistributionSpec::preset("exp").unwrap(), 400, 6).unwrap();
    let dirs = make_direction_grid(40, 2).unwrap();
    let contour = |tau: f64| -> Vec<[f64; 2]> {
        dirs.iter()
            .map(|u| {
                let p = geometric_quantile(&s, order(tau), u, SolverOptions::default())
                    .unwrap()
                    .point;
                [p[0], p[1]]
            })
            .collect()
    };
    let levels = [0.2, 0.4, 0.6, 0.8, 0.95];
    let polys: Vec<_> = levels.iter().map(|&t| contour(t)).collect();
    for w in polys.windows(2) {
        for v in &w[0] {
            assert!(point_in_polygon(*v, &w[1]));
            assert!(!w[1].contains(v));
        }
    }
}

#[test]
fn relabeled_contours_transform_with_the_sample() {
    let s = sample(&DistributionSpec::preset("skewt").unwrap(), 300, 7).unwrap();
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let shift = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let moved = s
            .map(|p| {
                let r = rotate(p, angle);
                vec![r[0] + shift[0], r[1] + shift[1]]
            })
            .unwrap();
        let base =
            relabeled_geometric_contour(&s, order(0.5), &make_direction_grid(24, 2).unwrap(), opts)
                .unwrap();
        let turned = relabeled_geometric_contour(
            &moved,
            order(0.5),
            &DirectionGrid::with_phase(24, angle).unwrap(),
            opts,
        )
        .unwrap();
        for (a, b) in base.vertices.iter().zip(&turned.vertices) {
            let r = rotate(a, angle);
            let err = (r[0] + shift[0] - b[0]).hypot(r[1] + shift[1] - b[1]);
            assert!(err <= 10.0 * GEOMETRIC_TOL, "vertex moved by {err}");
        }
    }
}

fn objective_1d(z: f64, xs: &[f64], beta: f64) -> f64 {
    // Check-function form at level (1 + beta) / 2.
    xs.iter()
        .map(|x| check_function(x - z, (1.0 + beta) / 2.0))
        .sum::<f64>()
        / xs.len() as f64
}

fn brute_force_1d(xs: &[f64], beta: f64) -> f64 {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    // The objective is piecewise linear with kinks at the data, so a uniform
    // grid together with the kinks contains a minimizer.
    let grid = (0..=2000).map(|i| lo + (hi - lo) * i as f64 / 2000.0);
    grid.chain(xs.iter().cloned())
        .map(|z| objective_1d(z, xs, beta))
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn univariate_reduction(xs in prop::collection::vec(-10.0f64..10.0, 1..200), b in -4i32..=4) {
        let beta = b as f64 / 5.0;
        let s = SampleSet::from_points(&xs.iter().map(|x| [*x]).collect::<Vec<_>>()).unwrap();
        let u = UnitDirection::new(vec![if beta < 0.0 { -1.0 } else { 1.0 }]).unwrap();
        let q = geometric_quantile(&s, order(beta.abs()), &u, SolverOptions::default()).unwrap();
        let got = objective_1d(q.point[0], &xs, beta);
        prop_assert!((got - brute_force_1d(&xs, beta)).abs() <= 1e-6);
    }

    #[test]
    fn quantile_equivariance(angle in 0.0..std::f64::consts::TAU, dx in -20.0f64..20.0, dy in -20.0f64..20.0,
                             tau in 0.0f64..0.95, dir in 0.0..std::f64::consts::TAU, seed in 0u64..1000) {
        let s = sample(&DistributionSpec::preset("exp").unwrap(), 150, seed).unwrap();
        let moved = s.map(|p| { let r = rotate(p, angle); vec![r[0] + dx, r[1] + dy] }).unwrap();
        let opts = SolverOptions::default();
        let q = geometric_quantile(&s, order(tau), &UnitDirection::from_angle(dir), opts).unwrap().point;
        let q2 = geometric_quantile(&moved, order(tau), &UnitDirection::from_angle(dir + angle), opts).unwrap().point;
        let r = rotate(&q, angle);
        let err = (r[0] + dx - q2[0]).hypot(r[1] + dy - q2[1]);
        prop_assert!(err <= 10.0 * GEOMETRIC_TOL, "err {}", err);
    }
}
