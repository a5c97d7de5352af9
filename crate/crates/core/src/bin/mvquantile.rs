use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use mvquantile::distributions::{derive_seed, sample};
use mvquantile::experiments::{
    self, read_config_file, ContourStudy, ExperimentConfig, ExperimentKind,
};
use mvquantile::Error;

#[derive(Parser)]
#[command(
    name = "mvquantile",
    version,
    about = "Geometric and center-outward quantile contours"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample and write it as CSV.
    Sample(Common),
    /// Quantile contours of one distribution.
    Contour {
        #[command(flatten)]
        common: Common,
        /// `geom` (relabeled geometric) or `ot` (center-outward).
        #[arg(long)]
        method: Option<String>,
    },
    /// Four distributions, both methods, orders .25/.5/.75.
    Figure1(Common),
    /// Extreme contours of an anisotropic Gaussian.
    Figure2(Common),
    /// Scaled norms of extreme geometric quantiles against their limit.
    ExtremeCheck(Common),
    /// Sup-norm errors of the empirical distribution functions.
    GcCheck(Common),
}

#[derive(Args, Default)]
struct Common {
    /// Preset name(s), comma separated, or a name for `dist.*` config keys.
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated orders.
    #[arg(long)]
    taus: Option<String>,
    #[arg(long)]
    nr: Option<usize>,
    #[arg(long)]
    ns: Option<usize>,
    #[arg(long = "k-dirs")]
    k_dirs: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// File of `key=value` lines; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("dist", self.dist.clone());
        put("n", self.n.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("taus", self.taus.clone());
        put("nr", self.nr.map(|v| v.to_string()));
        put("ns", self.ns.map(|v| v.to_string()));
        put("k-dirs", self.k_dirs.map(|v| v.to_string()));
        put("tol", self.tol.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        m
    }
}

fn resolve(
    kind: ExperimentKind,
    common: &Common,
    extra: BTreeMap<String, String>,
) -> anyhow::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::for_kind(kind);
    let mut file = match &common.config {
        Some(path) => {
            read_config_file(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => BTreeMap::new(),
    };
    let flags = common.overrides();
    // A preset named on the command line replaces a custom distribution
    // described in the file.
    if flags.contains_key("dist") {
        file.retain(|k, _| k != "dist" && !k.starts_with("dist."));
    }
    file.remove("experiment");
    config.apply(&file)?;
    config.apply(&flags)?;
    config.apply(&extra)?;
    // Changing n without a grid picks a matching grid shape.
    if (flags.contains_key("n") || file.contains_key("n"))
        && !(flags.contains_key("nr")
            || file.contains_key("nr")
            || flags.contains_key("ns")
            || file.contains_key("ns"))
    {
        (config.n_rings, config.n_sectors) = experiments::default_grid_shape(config.n);
    }
    Ok(config)
}

fn print_study(study: &ContourStudy) {
    println!("distribution,method,tau,solved_order,content,half_width,half_height,failed_directions,ring_fallback");
    for s in &study.summaries {
        println!(
            "{},{},{},{},{},{},{},{},{}",
            s.distribution,
            s.method,
            s.tau,
            s.solved_order,
            s.content,
            s.half_width,
            s.half_height,
            s.failed_directions,
            s.ring_fallback
        );
    }
}

fn study_status(study: &ContourStudy) -> ExitCode {
    if study.has_failures() {
        let mut err = std::io::stderr();
        for c in study.contours.iter().filter(|c| c.contour.is_partial()) {
            for k in &c.contour.failed {
                let _ = writeln!(
                    err,
                    "not converged: distribution={} tau={} k={k}",
                    c.distribution, c.contour.tau
                );
            }
        }
        let _ = writeln!(err, "partial contours were written");
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Sample(common) => {
            let config = resolve(ExperimentKind::Contour, &common, BTreeMap::new())?;
            let dist = &config.distributions[0];
            let s = sample(&dist.spec, config.n, derive_seed(config.seed, 0))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record((0..s.dim()).map(|i| format!("x{i}")))?;
            for p in s.points() {
                w.write_record(p.iter().map(|v| v.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| e.into_error())?;
            match &config.out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    std::fs::write(dir.join("sample.csv"), bytes)?;
                    std::fs::write(dir.join("sample_manifest.txt"), config.to_manifest())?;
                }
                None => std::io::stdout().write_all(&bytes)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Contour { common, method } => {
            let mut extra = BTreeMap::new();
            if let Some(m) = method {
                extra.insert("method".to_string(), m);
            }
            let config = resolve(ExperimentKind::Contour, &common, extra)?;
            let study = experiments::run_contour(&config)?;
            print_study(&study);
            Ok(study_status(&study))
        }
        Command::Figure1(common) => {
            let study = experiments::run_figure1(&resolve(
                ExperimentKind::Figure1,
                &common,
                BTreeMap::new(),
            )?)?;
            print_study(&study);
            Ok(study_status(&study))
        }
        Command::Figure2(common) => {
            let study = experiments::run_figure2(&resolve(
                ExperimentKind::Figure2,
                &common,
                BTreeMap::new(),
            )?)?;
            print_study(&study);
            Ok(study_status(&study))
        }
        Command::ExtremeCheck(common) => {
            let config = resolve(ExperimentKind::ExtremeCheck, &common, BTreeMap::new())?;
            let results = experiments::run_extreme_check(&config)?;
            println!("ux,uy,tau,scaled_norm,predicted_limit,relative_gap,converged");
            let mut all_converged = true;
            for r in &results {
                for ((tau, (s, gap)), ok) in r
                    .taus
                    .iter()
                    .zip(r.scaled_norms.iter().zip(r.relative_gaps()))
                    .zip(&r.converged)
                {
                    println!(
                        "{},{},{tau},{s},{},{gap},{ok}",
                        r.direction[0], r.direction[1], r.predicted_limit
                    );
                    all_converged &= ok;
                }
            }
            Ok(if all_converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::GcCheck(common) => {
            let config = resolve(ExperimentKind::GcCheck, &common, BTreeMap::new())?;
            let rows = experiments::run_gc_check(&config)?;
            println!("n,n_rings,n_sectors,geometric_error,transport_error");
            for r in rows {
                let t = r.transport_error.map(|v| v.to_string()).unwrap_or_default();
                println!(
                    "{},{},{},{},{t}",
                    r.n, r.n_rings, r.n_sectors, r.geometric_error
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e:#}");
            if matches!(e.downcast_ref::<Error>(), Some(Error::NotConverged { .. })) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
