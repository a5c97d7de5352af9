//! Multivariate quantile contours: relabeled geometric quantiles and
//! center-outward quantiles built from optimal transport.
//!
//! * [`geometric`] computes the empirical geometric distribution function,
//!   geometric quantiles as minimizers of a convex objective, and contours
//!   relabeled by probability content.
//! * [`transport`] couples a sample with a polar grid of the unit disk by
//!   exact least-squares assignment and reads center-outward ranks, signs and
//!   contours off the coupling.
//! * [`distributions`] draws seeded samples from the experiment distributions.
//! * [`experiments`] reproduces the comparison figures and the numerical
//!   checks and writes CSV and SVG output.
//!
//! ```
//! use mvquantile::{base, distributions, geometric, transport};
//!
//! let spec = distributions::DistributionSpec::preset("gauss")?;
//! let sample = distributions::sample(&spec, 600, 1)?;
//! let tau = base::QuantileOrder::new(0.5)?;
//! let dirs = base::make_direction_grid(24, 2)?;
//!
//! let geom = geometric::relabeled_geometric_contour(&sample, tau, &dirs, Default::default())?;
//! let grid = transport::make_spherical_grid(20, 30)?;
//! let coupling = transport::optimal_assignment(&sample, &grid)?;
//! let ot = transport::center_outward_contour(&coupling, &grid, &sample, tau, &dirs)?;
//!
//! assert_eq!(geom.len(), 24);
//! assert_eq!(ot.len(), 24);
//! # Ok::<(), mvquantile::Error>(())
//! ```

pub mod assignment;
pub mod base;
pub mod contour;
pub mod distributions;
mod error;
pub mod experiments;
pub mod geometric;
pub mod transport;

pub use error::{Error, Result};

// Compiles and runs the code listings of the guide in book/ as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometric.md")]
    mod geometric {}
    #[doc = include_str!("../../../book/src/relabeling.md")]
    mod relabeling {}
    #[doc = include_str!("../../../book/src/transport.md")]
    mod transport {}
    #[doc = include_str!("../../../book/src/extremes.md")]
    mod extremes {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
