use std::fs;
use std::sync::OnceLock;

use mvquantile::contour::{is_convex, reflex_vertices, Method};
use mvquantile::experiments::{
    contours_to_csv, read_contour_csv, run_contour, run_extreme_check, run_figure1, run_figure2,
    run_gc_check, ContourStudy, ExperimentConfig, FIGURE1_DISTRIBUTIONS,
};

fn figure1() -> &'static ContourStudy {
    static STUDY: OnceLock<ContourStudy> = OnceLock::new();
    STUDY.get_or_init(|| run_figure1(&ExperimentConfig::figure1()).unwrap())
}

#[test]
fn figure1_has_every_contour() {
    let config = ExperimentConfig::figure1();
    let study = figure1();
    assert_eq!(study.contours.len(), 24);
    assert!(!study.has_failures());
    for c in &study.contours {
        assert_eq!(c.contour.len(), 70);
        assert!(config.taus.contains(&c.contour.tau.value()));
    }
    for d in FIGURE1_DISTRIBUTIONS {
        for m in [Method::GeometricRelabeled, Method::CenterOutward] {
            for t in &config.taus {
                assert!(study.find(d, m, *t).is_some(), "{d} {m} {t}");
            }
        }
    }
    let csv = String::from_utf8(contours_to_csv(&study.contours).unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 1 + 24 * 70);
}

#[test]
fn figure1_geometric_contours_hold_their_content() {
    for s in figure1()
        .summaries
        .iter()
        .filter(|s| s.method == Method::GeometricRelabeled.tag())
    {
        assert!((s.content - s.tau).abs() <= 0.03, "{s:?}");
    }
}

#[test]
fn banana_shape_is_only_seen_by_the_transport_contour() {
    let study = figure1();
    let ot = study
        .find("banana", Method::CenterOutward, 0.75)
        .unwrap()
        .planar_vertices();
    let geo = study
        .find("banana", Method::GeometricRelabeled, 0.75)
        .unwrap()
        .planar_vertices();
    assert!(!reflex_vertices(&ot, 1e-9).is_empty());
    assert!(
        is_convex(&geo, 1e-9),
        "reflex: {:?}",
        reflex_vertices(&geo, 1e-9)
    );
}

#[test]
fn figure2_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::figure2();
    config.out_dir = Some(dir.path().to_path_buf());
    let study = run_figure2(&config).unwrap();
    let (gw, gh) = study
        .find("gauss-diag", Method::GeometricRelabeled, 0.99)
        .unwrap()
        .half_extents();
    let (tw, th) = study
        .find("gauss-diag", Method::CenterOutward, 0.99)
        .unwrap()
        .half_extents();
    assert!(gw > gh, "geometric {gw} x {gh}");
    assert!(th > tw, "transport {tw} x {th}");

    let aspect: Vec<f64> = config
        .taus
        .iter()
        .map(|&t| {
            let s = study
                .summary("gauss-diag", Method::GeometricRelabeled, t)
                .unwrap();
            s.half_width / s.half_height
        })
        .collect();
    assert!(aspect.windows(2).all(|w| w[0] < w[1]), "{aspect:?}");

    let svg = fs::read_to_string(dir.path().join("figure2.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 6);
    let summary = fs::read_to_string(dir.path().join("figure2_summary.csv")).unwrap();
    assert!(
        summary.starts_with("distribution,method,tau,solved_order,content,half_width,half_height")
    );
    assert_eq!(summary.lines().count(), 7);
}

#[test]
fn outputs_are_reproducible() {
    let mut config = ExperimentConfig::figure1();
    config.n = 600;
    config.n_rings = 20;
    config.n_sectors = 30;
    config.k_dirs = 24;
    config.seed = 5;
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config.clone();
        c.out_dir = Some(dir.path().to_path_buf());
        run_figure1(&c).unwrap();
        let mut names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        let files: Vec<(String, Vec<u8>)> = names
            .into_iter()
            .map(|n| (n.clone(), fs::read(dir.path().join(&n)).unwrap()))
            .collect();
        files
    };
    let a = run();
    let b = run();
    assert_eq!(a.len(), b.len());
    for ((na, fa), (nb, fb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(fa == fb, "{na} differs between runs");
    }
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    for expected in [
        "figure1_contours.csv",
        "figure1_summary.csv",
        "figure1_manifest.txt",
        "figure1_banana.svg",
    ] {
        assert!(names.contains(&expected), "{names:?}");
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    fs::write(
        &path,
        &a.iter()
            .find(|(n, _)| n == "figure1_contours.csv")
            .unwrap()
            .1,
    )
    .unwrap();
    let rows = read_contour_csv(&path).unwrap();
    assert_eq!(rows.len(), 24 * 24);
    let again = run_figure1(&config).unwrap();
    for (row, c) in rows.iter().zip(
        again
            .contours
            .iter()
            .flat_map(|c| c.contour.vertices.iter()),
    ) {
        assert_eq!(
            (row.x.to_bits(), row.y.to_bits()),
            (c[0].to_bits(), c[1].to_bits())
        );
    }
}

#[test]
fn single_method_contours() {
    let mut config = ExperimentConfig::contour();
    config.n = 600;
    config.n_rings = 20;
    config.n_sectors = 30;
    config.methods = vec![Method::CenterOutward];
    let study = run_contour(&config).unwrap();
    assert_eq!(study.contours.len(), 3);
    assert!(study
        .contours
        .iter()
        .all(|c| c.contour.method == Method::CenterOutward));
}

#[test]
fn extreme_quantiles_approach_their_limit() {
    let mut gaps_low = Vec::new();
    let mut gaps_high = Vec::new();
    for seed in 1..=5 {
        let mut config = ExperimentConfig::extreme_check();
        config.seed = seed;
        let results = run_extreme_check(&config).unwrap();
        assert_eq!(results.len(), 2);
        for r in &results {
            assert!(r.converged.iter().all(|&c| c));
            assert!(r.scaled_norms.iter().all(|s| s.is_finite()));
            assert!(r.predicted_limit >= 0.0);
            let gaps = r.relative_gaps();
            gaps_low.push(gaps[0]);
            gaps_high.push(gaps[2]);
        }
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    assert!(median(&mut gaps_high) < median(&mut gaps_low));
}

#[test]
fn empirical_distribution_functions_converge() {
    let rows = run_gc_check(&ExperimentConfig::gc_check()).unwrap();
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    assert_eq!((first.n, last.n), (300, 4800));
    assert!(last.geometric_error < first.geometric_error);
    let (t0, t1) = (
        first.transport_error.unwrap(),
        last.transport_error.unwrap(),
    );
    assert!(t1 < t0);
    assert!(last.geometric_error < 0.15 && t1 < 0.15);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = ExperimentConfig::figure1();
    c.n_rings = 30;
    assert!(run_figure1(&c).is_err());
    let mut c = ExperimentConfig::extreme_check();
    c.distributions = vec![mvquantile::experiments::NamedDistribution::preset("banana").unwrap()];
    assert!(run_extreme_check(&c).is_err());
}
