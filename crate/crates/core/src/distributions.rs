//! Seeded samplers for the experiment distributions.
//!
//! Every sampler draws from a [`ChaCha8Rng`] seeded explicitly by the caller,
//! so `(spec, n, seed)` always maps to the same bits on every platform. There
//! is no global RNG state.
//!
//! The supported families are:
//!
//! * centered or shifted Gaussians, drawn as `mean + L z` with `L L' = cov`;
//! * independent exponential marginals, drawn by inverting the CDF;
//! * the skew-t with identity scale, drawn as a skew-normal (conditioning
//!   representation) divided by `sqrt(chi2_dof / dof)`;
//! * the three-component "banana" Gaussian mixture and arbitrary Gaussian
//!   mixtures, drawn by picking a component and then a Gaussian point.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::distr::Distribution as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, StandardNormal};

use crate::base::QuantileOrder;
use crate::error::{Error, Result};

/// Parameters of one Gaussian component.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianComponent {
    pub mean: Vec<f64>,
    /// Row-major `d x d` covariance.
    pub cov: Vec<Vec<f64>>,
}

/// A distribution the sampler knows how to draw from.
#[derive(Clone, Debug, PartialEq)]
pub enum DistributionSpec {
    Gaussian(GaussianComponent),
    IndepExponential {
        rates: Vec<f64>,
    },
    /// Skew-t with location zero and identity scale.
    SkewT {
        dof: f64,
        slant: Vec<f64>,
    },
    /// `3/8 N(mu1, S1) + 3/8 N(mu2, S2) + 1/4 N(mu3, S3)`.
    Banana,
    CustomMixture {
        weights: Vec<f64>,
        components: Vec<GaussianComponent>,
    },
}

/// Names accepted by [`DistributionSpec::preset`].
pub const PRESET_NAMES: [&str; 6] = [
    "gauss",
    "gauss-aniso",
    "gauss-diag",
    "exp",
    "skewt",
    "banana",
];

impl DistributionSpec {
    pub fn standard_gaussian(dim: usize) -> Self {
        let cov = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::Gaussian(GaussianComponent {
            mean: vec![0.0; dim],
            cov,
        })
    }

    pub fn centered_gaussian(cov: Vec<Vec<f64>>) -> Self {
        let dim = cov.len();
        Self::Gaussian(GaussianComponent {
            mean: vec![0.0; dim],
            cov,
        })
    }

    /// The named distributions used by the CLI.
    ///
    /// * `gauss`: standard bivariate normal
    /// * `gauss-aniso`: centered normal with covariance `[[2, 1], [1, 1]]`
    /// * `gauss-diag`: centered normal with covariance `diag(1/8, 3/4)`
    /// * `exp`: independent unit-mean exponential marginals
    /// * `skewt`: skew-t with 4 degrees of freedom and slant `(10, 10)`
    /// * `banana`: the three-component banana mixture
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "gauss" => Self::standard_gaussian(2),
            "gauss-aniso" => Self::centered_gaussian(vec![vec![2.0, 1.0], vec![1.0, 1.0]]),
            "gauss-diag" => Self::centered_gaussian(vec![vec![0.125, 0.0], vec![0.0, 0.75]]),
            "exp" => Self::IndepExponential {
                rates: vec![1.0, 1.0],
            },
            "skewt" => Self::SkewT {
                dof: 4.0,
                slant: vec![10.0, 10.0],
            },
            "banana" => Self::Banana,
            other => {
                return Err(Error::Config(format!(
                    "unknown distribution '{other}' (expected one of {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(c) => c.mean.len(),
            Self::IndepExponential { rates } => rates.len(),
            Self::SkewT { slant, .. } => slant.len(),
            Self::Banana => 2,
            Self::CustomMixture { components, .. } => {
                components.first().map_or(0, |c| c.mean.len())
            }
        }
    }

    /// Population mean, when it exists.
    pub fn mean(&self) -> Option<Vec<f64>> {
        match self {
            Self::Gaussian(c) => Some(c.mean.clone()),
            Self::IndepExponential { rates } => Some(rates.iter().map(|r| 1.0 / r).collect()),
            Self::SkewT { .. } => None,
            Self::Banana => mixture_mean(&banana_weights(), &banana_components()),
            Self::CustomMixture {
                weights,
                components,
            } => mixture_mean(weights, components),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "distribution has dimension 0".into(),
            ));
        }
        match self {
            Self::Gaussian(c) => {
                cholesky(&c.cov)?;
                check_len(&c.mean, dim)
            }
            Self::IndepExponential { rates } => {
                if rates.iter().all(|r| r.is_finite() && *r > 0.0) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "exponential rates must be > 0: {rates:?}"
                    )))
                }
            }
            Self::SkewT { dof, slant } => {
                if !(dof.is_finite() && *dof > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "dof must be > 0, got {dof}"
                    )));
                }
                if slant.iter().any(|a| !a.is_finite()) {
                    return Err(Error::InvalidParameter("slant must be finite".into()));
                }
                Ok(())
            }
            Self::Banana => Ok(()),
            Self::CustomMixture {
                weights,
                components,
            } => {
                if weights.len() != components.len() || weights.is_empty() {
                    return Err(Error::InvalidParameter(
                        "mixture needs one weight per component".into(),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::InvalidParameter(
                        "mixture weights must be >= 0".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "mixture weights sum to {total}, expected 1"
                    )));
                }
                for c in components {
                    check_len(&c.mean, dim)?;
                    cholesky(&c.cov)?;
                }
                Ok(())
            }
        }
    }

    /// Serializes to the plain-text `key=value` block read by
    /// [`DistributionSpec::from_config`].
    pub fn to_config(&self) -> String {
        let mut out = String::new();
        match self {
            Self::Gaussian(c) => {
                out.push_str("kind=gaussian\n");
                write_component(&mut out, "", c);
            }
            Self::IndepExponential { rates } => {
                let _ = writeln!(out, "kind=indep_exponential\nrates={}", join(rates));
            }
            Self::SkewT { dof, slant } => {
                let _ = writeln!(out, "kind=skew_t\ndof={dof}\nslant={}", join(slant));
            }
            Self::Banana => out.push_str("kind=banana\n"),
            Self::CustomMixture {
                weights,
                components,
            } => {
                let _ = writeln!(out, "kind=custom_mixture\nweights={}", join(weights));
                for (i, c) in components.iter().enumerate() {
                    write_component(&mut out, &format!(".{i}"), c);
                }
            }
        }
        out
    }

    /// Parses a `key=value` block. Blank lines and `#` comments are skipped.
    pub fn from_config(text: &str) -> Result<Self> {
        let map = parse_key_values(text)?;
        Self::from_map(&map)
    }

    pub(crate) fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| {
            map.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Config(format!("missing key '{k}'")))
        };
        let spec = match get("kind")? {
            "gaussian" => Self::Gaussian(read_component(map, "")?),
            "indep_exponential" => Self::IndepExponential {
                rates: parse_list(get("rates")?)?,
            },
            "skew_t" => Self::SkewT {
                dof: parse_f64(get("dof")?)?,
                slant: parse_list(get("slant")?)?,
            },
            "banana" => Self::Banana,
            "custom_mixture" => {
                let weights = parse_list(get("weights")?)?;
                let components = (0..weights.len())
                    .map(|i| read_component(map, &format!(".{i}")))
                    .collect::<Result<_>>()?;
                Self::CustomMixture {
                    weights,
                    components,
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown distribution kind '{other}'"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn check_len(v: &[f64], dim: usize) -> Result<()> {
    if v.len() == dim {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: dim,
            found: v.len(),
        })
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn write_component(out: &mut String, suffix: &str, c: &GaussianComponent) {
    let rows: Vec<String> = c.cov.iter().map(|r| join(r)).collect();
    let _ = writeln!(
        out,
        "mean{suffix}={}\ncov{suffix}={}",
        join(&c.mean),
        rows.join(";")
    );
}

fn read_component(map: &BTreeMap<String, String>, suffix: &str) -> Result<GaussianComponent> {
    let mean_key = format!("mean{suffix}");
    let cov_key = format!("cov{suffix}");
    let mean = parse_list(
        map.get(&mean_key)
            .ok_or_else(|| Error::Config(format!("missing key '{mean_key}'")))?,
    )?;
    let cov = map
        .get(&cov_key)
        .ok_or_else(|| Error::Config(format!("missing key '{cov_key}'")))?
        .split(';')
        .map(parse_list)
        .collect::<Result<Vec<_>>>()?;
    Ok(GaussianComponent { mean, cov })
}

pub(crate) fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("'{s}' is not a number")))
}

pub(crate) fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_f64).collect()
}

/// Reads `key=value` lines into a map; later keys override earlier ones.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn banana_weights() -> Vec<f64> {
    vec![3.0 / 8.0, 3.0 / 8.0, 1.0 / 4.0]
}

fn banana_components() -> Vec<GaussianComponent> {
    vec![
        GaussianComponent {
            mean: vec![-3.0, 0.0],
            cov: vec![vec![5.0, -4.0], vec![-4.0, 5.0]],
        },
        GaussianComponent {
            mean: vec![3.0, 0.0],
            cov: vec![vec![5.0, 4.0], vec![4.0, 5.0]],
        },
        GaussianComponent {
            mean: vec![0.0, -2.5],
            cov: vec![vec![4.0, 0.0], vec![0.0, 1.0]],
        },
    ]
}

fn mixture_mean(weights: &[f64], components: &[GaussianComponent]) -> Option<Vec<f64>> {
    let dim = components.first()?.mean.len();
    let mut m = vec![0.0; dim];
    for (w, c) in weights.iter().zip(components) {
        for (acc, x) in m.iter_mut().zip(&c.mean) {
            *acc += w * x;
        }
    }
    Some(m)
}

/// Lower-triangular `L` with `L L' = cov`, tolerating positive semi-definite
/// input (zero pivots produce zero columns).
pub(crate) fn cholesky(cov: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = cov.len();
    if n == 0 || cov.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidParameter(
            "covariance must be a square matrix".into(),
        ));
    }
    let scale = (0..n)
        .map(|i| cov[i][i].abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let eps = 1e-12 * scale;
    for i in 0..n {
        for j in 0..i {
            if !cov[i][j].is_finite() || (cov[i][j] - cov[j][i]).abs() > eps {
                return Err(Error::NonPsdCovariance);
            }
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let pivot = cov[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if pivot < -eps || !pivot.is_finite() {
            return Err(Error::NonPsdCovariance);
        }
        if pivot <= eps {
            // Zero pivot: the remainder of this column must vanish too.
            for i in j + 1..n {
                let r = cov[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                if r.abs() > eps.sqrt() * scale.sqrt() {
                    return Err(Error::NonPsdCovariance);
                }
            }
            continue;
        }
        let d = pivot.sqrt();
        l[j][j] = d;
        for i in j + 1..n {
            let r = cov[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = r / d;
        }
    }
    Ok(l)
}

/// An immutable `N x d` sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    data: Vec<f64>,
    dim: usize,
    seed: Option<u64>,
    spec: Option<DistributionSpec>,
}

impl SampleSet {
    /// Wraps user-provided points (no generating distribution).
    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let first = points.first().ok_or_else(|| {
            Error::InvalidParameter("sample must contain at least one point".into())
        })?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            check_len(p.as_ref(), dim)?;
            data.extend_from_slice(p.as_ref());
        }
        Self::from_flat(data, dim)
    }

    /// Wraps a row-major buffer of `N * dim` coordinates.
    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "cannot split {} coordinates into points of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(
                "sample contains non-finite coordinates".into(),
            ));
        }
        Ok(Self {
            data,
            dim,
            seed: None,
            spec: None,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn spec(&self) -> Option<&DistributionSpec> {
        self.spec.as_ref()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Applies `f` to every point. The result has no generating distribution.
    pub fn map<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let pts: Vec<Vec<f64>> = self.points().map(f).collect();
        Self::from_points(&pts)
    }

    /// Coordinatewise sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.points() {
            for (acc, x) in m.iter_mut().zip(p) {
                *acc += x;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }

    /// Sample covariance (divisor `N - 1`).
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let m = self.mean();
        let mut c = vec![vec![0.0; self.dim]; self.dim];
        for p in self.points() {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    c[i][j] += (p[i] - m[i]) * (p[j] - m[j]);
                }
            }
        }
        let denom = (self.len().max(2) - 1) as f64;
        c.iter_mut().flatten().for_each(|x| *x /= denom);
        c
    }
}

/// Draws `n` i.i.d. points from `spec` using a generator seeded by `seed`.
pub fn sample(spec: &DistributionSpec, n: usize, seed: u64) -> Result<SampleSet> {
    sample_with_components(spec, n, seed).map(|(s, _)| s)
}

/// As [`sample`], also returning the mixture component each point came from
/// (always 0 for non-mixtures).
pub fn sample_with_components(
    spec: &DistributionSpec,
    n: usize,
    seed: u64,
) -> Result<(SampleSet, Vec<usize>)> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be >= 1".into()));
    }
    spec.validate()?;
    let sampler = Sampler::new(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = spec.dim();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(sampler.draw(&mut rng, &mut data));
    }
    Ok((
        SampleSet {
            data,
            dim,
            seed: Some(seed),
            spec: Some(spec.clone()),
        },
        labels,
    ))
}

struct GaussianFactor {
    mean: Vec<f64>,
    chol: Vec<Vec<f64>>,
}

impl GaussianFactor {
    fn new(c: &GaussianComponent) -> Result<Self> {
        Ok(Self {
            mean: c.mean.clone(),
            chol: cholesky(&c.cov)?,
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R, out: &mut Vec<f64>) {
        let z: Vec<f64> = (0..self.mean.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        for (i, m) in self.mean.iter().enumerate() {
            out.push(m + (0..=i).map(|k| self.chol[i][k] * z[k]).sum::<f64>());
        }
    }
}

enum Sampler {
    Mixture {
        cumulative: Vec<f64>,
        components: Vec<GaussianFactor>,
    },
    Exponential(Vec<f64>),
    SkewT {
        /// Cholesky factor of `[[1, delta'], [delta, I]]`.
        joint: Vec<Vec<f64>>,
        chi2: ChiSquared<f64>,
        dof: f64,
    },
}

impl Sampler {
    fn new(spec: &DistributionSpec) -> Result<Self> {
        Ok(match spec {
            DistributionSpec::Gaussian(c) => Self::mixture(&[1.0], std::slice::from_ref(c))?,
            DistributionSpec::Banana => Self::mixture(&banana_weights(), &banana_components())?,
            DistributionSpec::CustomMixture {
                weights,
                components,
            } => Self::mixture(weights, components)?,
            DistributionSpec::IndepExponential { rates } => Self::Exponential(rates.clone()),
            DistributionSpec::SkewT { dof, slant } => {
                let d = slant.len();
                let denom = (1.0 + slant.iter().map(|a| a * a).sum::<f64>()).sqrt();
                let delta: Vec<f64> = slant.iter().map(|a| a / denom).collect();
                let mut omega = vec![vec![0.0; d + 1]; d + 1];
                omega[0][0] = 1.0;
                for i in 0..d {
                    omega[0][i + 1] = delta[i];
                    omega[i + 1][0] = delta[i];
                    omega[i + 1][i + 1] = 1.0;
                }
                Self::SkewT {
                    joint: cholesky(&omega)?,
                    chi2: ChiSquared::new(*dof)
                        .map_err(|e| Error::InvalidParameter(format!("dof: {e}")))?,
                    dof: *dof,
                }
            }
        })
    }

    fn mixture(weights: &[f64], components: &[GaussianComponent]) -> Result<Self> {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self::Mixture {
            cumulative,
            components: components
                .iter()
                .map(GaussianFactor::new)
                .collect::<Result<_>>()?,
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R, out: &mut Vec<f64>) -> usize {
        match self {
            Self::Mixture {
                cumulative,
                components,
            } => {
                let idx = if components.len() == 1 {
                    0
                } else {
                    let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
                    cumulative
                        .iter()
                        .position(|&c| u < c)
                        .unwrap_or(components.len() - 1)
                };
                components[idx].draw(rng, out);
                idx
            }
            Self::Exponential(rates) => {
                for r in rates {
                    let u: f64 = rng.random();
                    out.push(-(1.0 - u).ln() / r);
                }
                0
            }
            Self::SkewT { joint, chi2, dof } => {
                let n = joint.len();
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let w: f64 = chi2.sample(rng);
                let scale = (w / dof).sqrt();
                let lead: f64 = joint[0][0] * z[0];
                let sign = if lead > 0.0 { 1.0 } else { -1.0 };
                for i in 1..n {
                    let x: f64 = (0..=i).map(|k| joint[i][k] * z[k]).sum();
                    out.push(sign * x / scale);
                }
                0
            }
        }
    }
}

/// Radius of the population center-outward contour of order `tau` for the
/// standard bivariate normal: `sqrt(-2 ln(1 - tau))`.
pub fn analytic_center_outward_radius(tau: QuantileOrder) -> f64 {
    (-2.0 * (1.0 - tau.value()).ln()).sqrt()
}

/// Population center-outward distribution function of the standard bivariate
/// normal: `(1 - exp(-|z|^2 / 2)) z / |z|`.
pub fn analytic_center_outward_cdf(z: &[f64]) -> Vec<f64> {
    let r = crate::base::norm(z);
    if r == 0.0 {
        return vec![0.0; z.len()];
    }
    let rank = -(-0.5 * r * r).exp_m1();
    z.iter().map(|c| rank * c / r).collect()
}

/// Mixes a base seed with a stream index (SplitMix64 finalizer), giving
/// well-separated seeds for independent sub-experiments.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
