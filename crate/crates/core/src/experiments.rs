//! Experiment drivers and their CSV / SVG output.
//!
//! Every driver is a pure function of its [`ExperimentConfig`]: samples are
//! drawn from seeds derived from `config.seed`, work that runs in parallel is
//! collected in a fixed order before anything is written, and numbers are
//! serialized in shortest round-trip form. Two runs with the same config
//! therefore write byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{make_direction_grid, QuantileOrder, UnitDirection, GEOMETRIC_TOL};
use crate::contour::{Contour, Method};
use crate::distributions::{
    analytic_center_outward_cdf, derive_seed, parse_f64, parse_key_values, sample,
    DistributionSpec, SampleSet,
};
use crate::error::{Error, Result};
use crate::geometric::{
    build_relabel_table, geometric_cdf, geometric_quantile, relabeled_geometric_contour_with_table,
    SolverOptions,
};
use crate::transport::{
    center_outward_contour, interpolated_center_outward_cdf, make_spherical_grid,
    optimal_assignment,
};

/// The four distributions compared in the first figure, by CLI name.
pub const FIGURE1_DISTRIBUTIONS: [&str; 4] = ["gauss-aniso", "exp", "skewt", "banana"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Figure1,
    Figure2,
    ExtremeCheck,
    GcCheck,
    Contour,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Figure1 => "figure1",
            Self::Figure2 => "figure2",
            Self::ExtremeCheck => "extreme-check",
            Self::GcCheck => "gc-check",
            Self::Contour => "contour",
        }
    }
}

/// A distribution together with the label used in output files.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedDistribution {
    pub name: String,
    pub spec: DistributionSpec,
}

impl NamedDistribution {
    pub fn preset(name: &str) -> Result<Self> {
        Ok(Self {
            name: name.to_string(),
            spec: DistributionSpec::preset(name)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub distributions: Vec<NamedDistribution>,
    pub n: usize,
    pub n_rings: usize,
    pub n_sectors: usize,
    pub k_dirs: usize,
    pub taus: Vec<f64>,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    /// Methods to run for contour studies.
    pub methods: Vec<Method>,
    /// Sample sizes for the Glivenko-Cantelli study.
    pub n_ladder: Vec<usize>,
    /// Size of the reference sample standing in for the population.
    pub reference_n: usize,
    pub test_points: usize,
    /// Neighbors used by the interpolated center-outward map.
    pub neighbors: usize,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    fn base(experiment: ExperimentKind, dists: &[&str]) -> Self {
        Self {
            experiment,
            distributions: dists
                .iter()
                .map(|d| NamedDistribution::preset(d).expect("built-in preset"))
                .collect(),
            n: 2400,
            n_rings: 40,
            n_sectors: 60,
            k_dirs: 70,
            taus: vec![0.25, 0.5, 0.75],
            seed: 1,
            tol: GEOMETRIC_TOL,
            max_iter: 10_000,
            methods: vec![Method::GeometricRelabeled, Method::CenterOutward],
            n_ladder: vec![300, 1200, 4800],
            reference_n: 100_000,
            test_points: 200,
            neighbors: 8,
            out_dir: None,
        }
    }

    /// Four distributions, `N = 2400` on a `40 x 60` grid, 70 directions,
    /// orders `.25, .5, .75`.
    pub fn figure1() -> Self {
        Self::base(ExperimentKind::Figure1, &FIGURE1_DISTRIBUTIONS)
    }

    /// Gaussian with covariance `diag(1/8, 3/4)`, `N = 1000` on a `20 x 50`
    /// grid, 50 directions, orders `.90, .95, .99`.
    pub fn figure2() -> Self {
        Self {
            n: 1000,
            n_rings: 20,
            n_sectors: 50,
            k_dirs: 50,
            taus: vec![0.90, 0.95, 0.99],
            ..Self::base(ExperimentKind::Figure2, &["gauss-diag"])
        }
    }

    /// Gaussian with covariance `diag(1/8, 3/4)`, `N = 10^5`, orders
    /// `.9, .99, .999` along the eigenvectors of the covariance.
    pub fn extreme_check() -> Self {
        Self {
            n: 100_000,
            taus: vec![0.9, 0.99, 0.999],
            ..Self::base(ExperimentKind::ExtremeCheck, &["gauss-diag"])
        }
    }

    /// Standard bivariate normal, `N` in `{300, 1200, 4800}`, 200 test points.
    pub fn gc_check() -> Self {
        Self::base(ExperimentKind::GcCheck, &["gauss"])
    }

    /// A single distribution and both methods at the first figure's sizes.
    pub fn contour() -> Self {
        Self::base(ExperimentKind::Contour, &["gauss"])
    }

    pub fn for_kind(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::Figure1 => Self::figure1(),
            ExperimentKind::Figure2 => Self::figure2(),
            ExperimentKind::ExtremeCheck => Self::extreme_check(),
            ExperimentKind::GcCheck => Self::gc_check(),
            ExperimentKind::Contour => Self::contour(),
        }
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.distributions.is_empty() {
            return Err(Error::Config("no distribution selected".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be >= 1".into()));
        }
        if self.taus.is_empty() {
            return Err(Error::Config("at least one order is required".into()));
        }
        for t in &self.taus {
            QuantileOrder::new(*t)?;
        }
        if self.taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("orders must be strictly increasing".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config("tol must be > 0".into()));
        }
        let uses_transport = matches!(
            self.experiment,
            ExperimentKind::Figure1 | ExperimentKind::Figure2
        ) || (self.experiment == ExperimentKind::Contour
            && self.methods.contains(&Method::CenterOutward));
        if uses_transport {
            if self.n != self.n_rings * self.n_sectors {
                return Err(Error::Config(format!(
                    "n = {} must equal n_R * n_S = {} x {}",
                    self.n, self.n_rings, self.n_sectors
                )));
            }
            if self.taus.iter().any(|&t| t <= 0.0) {
                return Err(Error::Config(
                    "center-outward contours need orders > 0".into(),
                ));
            }
        }
        if self.experiment == ExperimentKind::GcCheck && self.n_ladder.is_empty() {
            return Err(Error::Config("gc-check needs a sample size ladder".into()));
        }
        Ok(())
    }

    /// Applies `key=value` overrides (the config-file format). Distribution
    /// parameters may be given as `dist.kind=...`, `dist.cov=...` and so on.
    pub fn apply(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        let dist_keys: BTreeMap<String, String> = map
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("dist.").map(|s| (s.to_string(), v.clone())))
            .collect();
        if !dist_keys.is_empty() {
            self.distributions = vec![NamedDistribution {
                name: map.get("dist").cloned().unwrap_or_else(|| "custom".into()),
                spec: DistributionSpec::from_map(&dist_keys)?,
            }];
        } else if let Some(d) = map.get("dist") {
            self.distributions = d
                .split(',')
                .map(|name| NamedDistribution::preset(name.trim()))
                .collect::<Result<_>>()?;
        }
        for (key, value) in map {
            match key.as_str() {
                "n" => self.n = parse_usize(value)?,
                "nr" => self.n_rings = parse_usize(value)?,
                "ns" => self.n_sectors = parse_usize(value)?,
                "k-dirs" => self.k_dirs = parse_usize(value)?,
                "taus" => self.taus = crate::distributions::parse_list(value)?,
                "seed" => {
                    self.seed = value
                        .parse()
                        .map_err(|_| Error::Config(format!("seed '{value}' is not an integer")))?
                }
                "tol" => self.tol = parse_f64(value)?,
                "max-iter" => self.max_iter = parse_usize(value)?,
                "method" => self.methods = vec![value.parse()?],
                "n-ladder" => {
                    self.n_ladder = value.split(',').map(parse_usize).collect::<Result<_>>()?;
                }
                "reference-n" => self.reference_n = parse_usize(value)?,
                "test-points" => self.test_points = parse_usize(value)?,
                "neighbors" => self.neighbors = parse_usize(value)?,
                "out" => self.out_dir = Some(PathBuf::from(value)),
                "dist" | "experiment" => {}
                k if k.starts_with("dist.") => {}
                other => return Err(Error::Config(format!("unknown config key '{other}'"))),
            }
        }
        Ok(())
    }

    /// The resolved configuration as `key=value` lines, readable by
    /// [`ExperimentConfig::apply`]. The output directory is left out so that
    /// reruns into different directories produce identical manifests.
    pub fn to_manifest(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let _ = writeln!(out, "experiment={}", self.experiment.name());
        let names: Vec<&str> = self.distributions.iter().map(|d| d.name.as_str()).collect();
        let _ = writeln!(out, "dist={}", names.join(","));
        if let [single] = self.distributions.as_slice() {
            for line in single.spec.to_config().lines() {
                let _ = writeln!(out, "dist.{line}");
            }
        }
        let _ = writeln!(
            out,
            "n={}\nnr={}\nns={}\nk-dirs={}",
            self.n, self.n_rings, self.n_sectors, self.k_dirs
        );
        let _ = writeln!(
            out,
            "taus={}\nseed={}\ntol={}\nmax-iter={}",
            join(&self.taus),
            self.seed,
            self.tol,
            self.max_iter
        );
        if let [m] = self.methods.as_slice() {
            let _ = writeln!(out, "method={m}");
        }
        let ladder: Vec<String> = self.n_ladder.iter().map(usize::to_string).collect();
        let _ = writeln!(
            out,
            "n-ladder={}\nreference-n={}\ntest-points={}\nneighbors={}",
            ladder.join(","),
            self.reference_n,
            self.test_points,
            self.neighbors
        );
        out
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("'{s}' is not a nonnegative integer")))
}

/// A grid shape `n_R x n_S = n` with `n_R` the largest divisor not above
/// `sqrt(2n / 3)` (which gives `40 x 60` for `n = 2400`).
pub fn default_grid_shape(n: usize) -> (usize, usize) {
    let cap = ((2.0 * n as f64 / 3.0).sqrt().floor() as usize).max(1);
    let rings = (1..=cap).rev().find(|r| n.is_multiple_of(*r)).unwrap_or(1);
    (rings, n / rings)
}

/// A contour tagged with the distribution it was computed for.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledContour {
    pub distribution: String,
    pub contour: Contour,
}

/// Per-contour diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourSummary {
    pub distribution: String,
    pub method: String,
    pub tau: f64,
    pub solved_order: f64,
    /// Fraction of the sample inside the contour polygon.
    pub content: f64,
    pub half_width: f64,
    pub half_height: f64,
    pub failed_directions: usize,
    pub ring_fallback: bool,
}

/// Everything a contour study produced.
#[derive(Clone, Debug)]
pub struct ContourStudy {
    pub samples: Vec<(String, SampleSet)>,
    pub contours: Vec<LabeledContour>,
    pub summaries: Vec<ContourSummary>,
}

impl ContourStudy {
    pub fn find(&self, distribution: &str, method: Method, tau: f64) -> Option<&Contour> {
        self.contours
            .iter()
            .find(|c| {
                c.distribution == distribution
                    && c.contour.method == method
                    && c.contour.tau.value() == tau
            })
            .map(|c| &c.contour)
    }

    pub fn summary(&self, distribution: &str, method: Method, tau: f64) -> Option<&ContourSummary> {
        self.summaries
            .iter()
            .find(|s| s.distribution == distribution && s.method == method.tag() && s.tau == tau)
    }

    /// True if any geometric direction failed to converge.
    pub fn has_failures(&self) -> bool {
        self.contours.iter().any(|c| c.contour.is_partial())
    }
}

fn summarize(distribution: &str, contour: &Contour, sample: &SampleSet) -> ContourSummary {
    let (half_width, half_height) = contour.half_extents();
    ContourSummary {
        distribution: distribution.to_string(),
        method: contour.method.tag().to_string(),
        tau: contour.tau.value(),
        solved_order: contour.solved_order,
        content: contour.content(sample),
        half_width,
        half_height,
        failed_directions: contour.failed.len(),
        ring_fallback: contour.ring_fallback,
    }
}

/// Samples every configured distribution and computes the configured contour
/// families at every order.
pub fn run_contour_study(config: &ExperimentConfig) -> Result<ContourStudy> {
    config.validate()?;
    let dirs = make_direction_grid(config.k_dirs, 2)?;
    let taus: Vec<QuantileOrder> = config
        .taus
        .iter()
        .map(|&t| QuantileOrder::new(t))
        .collect::<Result<_>>()?;
    let per_dist: Vec<Result<(SampleSet, Vec<Contour>)>> = config
        .distributions
        .par_iter()
        .enumerate()
        .map(|(i, dist)| {
            let s = sample(&dist.spec, config.n, derive_seed(config.seed, i as u64))?;
            let mut contours = Vec::new();
            if config.methods.contains(&Method::GeometricRelabeled) {
                let table = build_relabel_table(&s);
                for &tau in &taus {
                    contours.push(relabeled_geometric_contour_with_table(
                        &s,
                        &table,
                        tau,
                        &dirs,
                        config.solver(),
                    )?);
                }
            }
            if config.methods.contains(&Method::CenterOutward) {
                let grid = make_spherical_grid(config.n_rings, config.n_sectors)?;
                let coupling = optimal_assignment(&s, &grid)?;
                for &tau in &taus {
                    contours.push(center_outward_contour(&coupling, &grid, &s, tau, &dirs)?);
                }
            }
            Ok((s, contours))
        })
        .collect();

    let mut study = ContourStudy {
        samples: Vec::new(),
        contours: Vec::new(),
        summaries: Vec::new(),
    };
    for (dist, item) in config.distributions.iter().zip(per_dist) {
        let (s, contours) = item?;
        for c in contours {
            study.summaries.push(summarize(&dist.name, &c, &s));
            study.contours.push(LabeledContour {
                distribution: dist.name.clone(),
                contour: c,
            });
        }
        study.samples.push((dist.name.clone(), s));
    }
    Ok(study)
}

fn write_study(
    study: &ContourStudy,
    dir: &Path,
    prefix: &str,
    one_svg: bool,
    config: &ExperimentConfig,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    emit_csv(&study.contours, &dir.join(format!("{prefix}_contours.csv")))?;
    write_table(&study.summaries, &dir.join(format!("{prefix}_summary.csv")))?;
    if one_svg {
        if let Some((_, s)) = study.samples.first() {
            let contours: Vec<Contour> = study.contours.iter().map(|c| c.contour.clone()).collect();
            emit_svg(
                &contours,
                Some(s),
                &dir.join(format!("{prefix}.svg")),
                &SvgStyle::default(),
            )?;
        }
    } else {
        for (name, s) in &study.samples {
            let contours: Vec<Contour> = study
                .contours
                .iter()
                .filter(|c| &c.distribution == name)
                .map(|c| c.contour.clone())
                .collect();
            emit_svg(
                &contours,
                Some(s),
                &dir.join(format!("{prefix}_{name}.svg")),
                &SvgStyle::default(),
            )?;
        }
    }
    fs::write(
        dir.join(format!("{prefix}_manifest.txt")),
        config.to_manifest(),
    )?;
    Ok(())
}

/// Relabeled geometric and center-outward contours for the first figure.
/// Writes `figure1_contours.csv`, `figure1_summary.csv`, one SVG per
/// distribution and a manifest when `out_dir` is set.
pub fn run_figure1(config: &ExperimentConfig) -> Result<ContourStudy> {
    let study = run_contour_study(config)?;
    if let Some(dir) = &config.out_dir {
        write_study(&study, dir, "figure1", false, config)?;
    }
    Ok(study)
}

/// Extreme contours of the anisotropic Gaussian. Writes
/// `figure2_contours.csv`, `figure2_summary.csv` (with half-extents),
/// `figure2.svg` and a manifest when `out_dir` is set.
pub fn run_figure2(config: &ExperimentConfig) -> Result<ContourStudy> {
    let study = run_contour_study(config)?;
    if let Some(dir) = &config.out_dir {
        write_study(&study, dir, "figure2", true, config)?;
    }
    Ok(study)
}

/// Contours of a single distribution for the configured method(s).
pub fn run_contour(config: &ExperimentConfig) -> Result<ContourStudy> {
    let study = run_contour_study(config)?;
    if let Some(dir) = &config.out_dir {
        write_study(&study, dir, "contour", true, config)?;
    }
    Ok(study)
}

/// Scaled norms `|Q(tau u)|^2 (1 - tau)` along one direction.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtremeCheckResult {
    pub direction: UnitDirection,
    pub taus: Vec<f64>,
    pub scaled_norms: Vec<f64>,
    pub converged: Vec<bool>,
    /// `(Tr S - u' S u) / 2`.
    pub predicted_limit: f64,
}

impl ExtremeCheckResult {
    /// `|scaled / predicted - 1|` per order.
    pub fn relative_gaps(&self) -> Vec<f64> {
        self.scaled_norms
            .iter()
            .map(|s| (s / self.predicted_limit - 1.0).abs())
            .collect()
    }
}

/// Limit of `|Q(tau u)|^2 (1 - tau)` as `tau -> 1` for covariance `cov`.
pub fn predicted_extreme_limit(cov: &[Vec<f64>], u: &[f64]) -> f64 {
    let trace: f64 = (0..cov.len()).map(|i| cov[i][i]).sum();
    let quad: f64 = (0..cov.len())
        .map(|i| (0..cov.len()).map(|j| u[i] * cov[i][j] * u[j]).sum::<f64>())
        .sum();
    0.5 * (trace - quad)
}

/// Unit eigenvectors of a symmetric 2x2 matrix, largest eigenvalue last.
fn eigenvectors_2x2(m: &[Vec<f64>]) -> [UnitDirection; 2] {
    let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
    if b.abs() <= 1e-15 * (a.abs() + d.abs()).max(f64::MIN_POSITIVE) {
        let axis = |c: Vec<f64>| UnitDirection::new(c).expect("unit axis");
        let (x, y) = (axis(vec![1.0, 0.0]), axis(vec![0.0, 1.0]));
        return if a <= d { [x, y] } else { [y, x] };
    }
    let theta = 0.5 * (2.0 * b).atan2(a - d);
    let major = UnitDirection::from_angle(theta);
    let minor = UnitDirection::from_angle(theta + std::f64::consts::FRAC_PI_2);
    [minor, major]
}

/// Geometric quantiles of a large Gaussian sample at extreme orders along
/// the eigenvectors of its covariance. Writes `extreme_check.csv` when
/// `out_dir` is set.
pub fn run_extreme_check(config: &ExperimentConfig) -> Result<Vec<ExtremeCheckResult>> {
    config.validate()?;
    let dist = &config.distributions[0];
    let DistributionSpec::Gaussian(component) = &dist.spec else {
        return Err(Error::Config(
            "extreme-check needs a Gaussian distribution".into(),
        ));
    };
    if component.mean.len() != 2 {
        return Err(Error::Config("extreme-check is planar".into()));
    }
    let s = sample(&dist.spec, config.n, derive_seed(config.seed, 0))?;
    let directions = eigenvectors_2x2(&component.cov);
    let tasks: Vec<(usize, usize)> = (0..2)
        .flat_map(|d| (0..config.taus.len()).map(move |t| (d, t)))
        .collect();
    let solved: Vec<Result<(f64, bool)>> = tasks
        .par_iter()
        .map(|&(d, t)| {
            let tau = QuantileOrder::new(config.taus[t])?;
            let (point, ok) = match geometric_quantile(&s, tau, &directions[d], config.solver()) {
                Ok(r) => (r.point.into_inner(), true),
                Err(Error::NotConverged { point, .. }) => (point, false),
                Err(e) => return Err(e),
            };
            let sq: f64 = point.iter().map(|c| c * c).sum();
            Ok((sq * (1.0 - tau.value()), ok))
        })
        .collect();
    let mut solved = solved.into_iter();
    let mut results = Vec::new();
    for u in directions {
        let mut scaled_norms = Vec::new();
        let mut converged = Vec::new();
        for _ in &config.taus {
            let (v, ok) = solved.next().expect("one result per task")?;
            scaled_norms.push(v);
            converged.push(ok);
        }
        results.push(ExtremeCheckResult {
            predicted_limit: predicted_extreme_limit(&component.cov, &u),
            direction: u,
            taus: config.taus.clone(),
            scaled_norms,
            converged,
        });
    }
    if let Some(dir) = &config.out_dir {
        fs::create_dir_all(dir)?;
        let rows: Vec<ExtremeRow> = results
            .iter()
            .flat_map(|r| {
                let gaps = r.relative_gaps();
                (0..r.taus.len()).map(move |i| ExtremeRow {
                    ux: r.direction[0],
                    uy: r.direction[1],
                    tau: r.taus[i],
                    scaled_norm: r.scaled_norms[i],
                    predicted_limit: r.predicted_limit,
                    relative_gap: gaps[i],
                    converged: r.converged[i],
                })
            })
            .collect();
        write_table(&rows, &dir.join("extreme_check.csv"))?;
        fs::write(dir.join("extreme_check_manifest.txt"), config.to_manifest())?;
    }
    Ok(results)
}

#[derive(Serialize)]
struct ExtremeRow {
    ux: f64,
    uy: f64,
    tau: f64,
    scaled_norm: f64,
    predicted_limit: f64,
    relative_gap: f64,
    converged: bool,
}

/// One row of the Glivenko-Cantelli study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcRow {
    pub n: usize,
    pub n_rings: usize,
    pub n_sectors: usize,
    /// `max_z |F_N(z) - F_ref(z)|` over the test points.
    pub geometric_error: f64,
    /// `max_z |interpolated F_N(z) - F(z)|` against the analytic map;
    /// only available for the standard bivariate normal.
    pub transport_error: Option<f64>,
}

/// Sup-norm errors of the empirical geometric and (interpolated)
/// center-outward distribution functions over a ladder of sample sizes.
/// Writes `gc_check.csv` when `out_dir` is set.
pub fn run_gc_check(config: &ExperimentConfig) -> Result<Vec<GcRow>> {
    config.validate()?;
    let dist = &config.distributions[0];
    if dist.spec.dim() != 2 {
        return Err(Error::Config("gc-check is planar".into()));
    }
    let analytic = dist.spec == DistributionSpec::standard_gaussian(2);
    let tests = sample(
        &dist.spec,
        config.test_points.max(1),
        derive_seed(config.seed, 1_000_001),
    )?;
    let reference = sample(
        &dist.spec,
        config.reference_n,
        derive_seed(config.seed, 1_000_002),
    )?;
    let reference_values: Vec<Vec<f64>> = tests
        .points()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|z| geometric_cdf(z, &reference).map(|v| v.value.into_inner()))
        .collect::<Result<_>>()?;

    let rows: Vec<Result<GcRow>> = config
        .n_ladder
        .par_iter()
        .map(|&n| {
            let s = sample(&dist.spec, n, derive_seed(config.seed, n as u64))?;
            let mut geometric_error: f64 = 0.0;
            for (z, f_ref) in tests.points().zip(&reference_values) {
                let f = geometric_cdf(z, &s)?;
                let e = f
                    .value
                    .iter()
                    .zip(f_ref)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                geometric_error = geometric_error.max(e);
            }
            let (n_rings, n_sectors) = default_grid_shape(n);
            let transport_error = if analytic {
                let grid = make_spherical_grid(n_rings, n_sectors)?;
                let coupling = optimal_assignment(&s, &grid)?;
                let mut worst: f64 = 0.0;
                for z in tests.points() {
                    let f =
                        interpolated_center_outward_cdf(&coupling, &grid, &s, z, config.neighbors)?;
                    let truth = analytic_center_outward_cdf(z);
                    let e = f
                        .iter()
                        .zip(&truth)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(e);
                }
                Some(worst)
            } else {
                None
            };
            Ok(GcRow {
                n,
                n_rings,
                n_sectors,
                geometric_error,
                transport_error,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    if let Some(dir) = &config.out_dir {
        fs::create_dir_all(dir)?;
        write_table(&rows, &dir.join("gc_check.csv"))?;
        fs::write(dir.join("gc_check_manifest.txt"), config.to_manifest())?;
    }
    Ok(rows)
}

/// One CSV row per contour vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourRow {
    pub distribution: String,
    pub method: String,
    pub tau: f64,
    pub k: usize,
    pub x: f64,
    pub y: f64,
}

/// Writes contours as CSV with header `distribution,method,tau,k,x,y`, one
/// row per vertex. Floats use shortest round-trip formatting.
pub fn emit_csv(contours: &[LabeledContour], path: &Path) -> Result<()> {
    fs::write(path, contours_to_csv(contours)?)?;
    Ok(())
}

pub fn contours_to_csv(contours: &[LabeledContour]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    // The header is written explicitly so that an empty file still has one.
    w.write_record(["distribution", "method", "tau", "k", "x", "y"])?;
    let mut w = {
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(bytes)
    };
    for lc in contours {
        for (k, v) in lc.contour.vertices.iter().enumerate() {
            w.serialize(ContourRow {
                distribution: lc.distribution.clone(),
                method: lc.contour.method.tag().to_string(),
                tau: lc.contour.tau.value(),
                k,
                x: v[0],
                y: v[1],
            })?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn read_contour_csv(path: &Path) -> Result<Vec<ContourRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Writes any serializable table with a header row.
pub fn write_table<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Rendering options for [`emit_svg`].
#[derive(Clone, Debug, PartialEq)]
pub struct SvgStyle {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub point_radius: f64,
    pub point_color: String,
    pub geometric_color: String,
    pub transport_color: String,
    pub stroke_width: f64,
}

impl Default for SvgStyle {
    fn default() -> Self {
        Self {
            width: 600.0,
            height: 600.0,
            margin: 20.0,
            point_radius: 1.2,
            point_color: "#808080".into(),
            geometric_color: "red".into(),
            transport_color: "blue".into(),
            stroke_width: 1.5,
        }
    }
}

/// Renders a scatter of the sample and one closed polyline per contour.
pub fn render_svg(contours: &[Contour], sample: Option<&SampleSet>, style: &SvgStyle) -> String {
    let mut xs: Vec<[f64; 2]> = Vec::new();
    if let Some(s) = sample {
        xs.extend(s.points().map(|p| [p[0], p[1]]));
    }
    for c in contours {
        xs.extend(c.planar_vertices());
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &xs {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    if xs.is_empty() {
        (lo, hi) = ([-1.0; 2], [1.0; 2]);
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let scale = (style.width.min(style.height) - 2.0 * style.margin) / span;
    let map = |p: [f64; 2]| -> (f64, f64) {
        (
            style.margin + (p[0] - lo[0]) * scale,
            style.height - style.margin - (p[1] - lo[1]) * scale,
        )
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = style.width,
        h = style.height
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(s) = sample {
        let _ = writeln!(out, r#"<g id="sample" fill="{}">"#, style.point_color);
        for p in s.points() {
            let (x, y) = map([p[0], p[1]]);
            let _ = writeln!(
                out,
                r#"<circle cx="{x:.3}" cy="{y:.3}" r="{}"/>"#,
                style.point_radius
            );
        }
        let _ = writeln!(out, "</g>");
    }
    for c in contours {
        let color = match c.method {
            Method::GeometricRelabeled => &style.geometric_color,
            Method::CenterOutward => &style.transport_color,
        };
        let mut pts: Vec<String> = c
            .planar_vertices()
            .into_iter()
            .map(|p| {
                let (x, y) = map(p);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        if c.closed {
            if let Some(first) = pts.first().cloned() {
                pts.push(first);
            }
        }
        let _ = writeln!(
            out,
            r#"<polyline class="{}" data-tau="{}" fill="none" stroke="{color}" stroke-width="{}" points="{}"/>"#,
            c.method.tag(),
            c.tau,
            style.stroke_width,
            pts.join(" ")
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn emit_svg(
    contours: &[Contour],
    sample: Option<&SampleSet>,
    path: &Path,
    style: &SvgStyle,
) -> Result<()> {
    fs::write(path, render_svg(contours, sample, style))?;
    Ok(())
}

/// Reads a CLI config file of `key=value` lines.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_key_values(&fs::read_to_string(path)?)
}
