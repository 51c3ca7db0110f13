//! Numerical toolkit for hypersurfaces of the round sphere S^{n+1} and its
//! spherical space forms.
//!
//! The crate is organized bottom-up:
//!
//! * [`sphere`]: point maps of the sphere (exponential map, projections,
//!   Möbius contractions, the ζ flow, rotations).
//! * [`immersion`]: parametric immersions `Sⁿ → S^{n+1}` or `S¹×S¹ → S³`
//!   given as expression trees, differentiated with [`jet`]s.
//! * [`curvature`]: Gauss map, principal curvatures and radii, `J(f)`.
//! * [`operators`]: normal translates, duals, circumcaps, Ψ and Φ.
//! * [`rigidity`]: self-intersection detection, deck groups, covering counts.
//! * [`homotopy`]: monitored deformation tracks.
//! * [`scenario`] and [`acceptance`]: the scenario runner and verification
//!   battery shared by the command-line tool.

pub mod acceptance;
pub mod curvature;
pub mod error;
pub mod homotopy;
pub mod immersion;
pub mod jet;
pub mod operators;
pub mod rigidity;
pub mod scenario;
pub mod sphere;
mod spatial;

pub use curvature::{CircleInterval, CurvatureSample, Hypotheses};
pub use error::{Error, Result};
pub use immersion::{ChartPoint, DiffMode, Domain, DomainDiffeo, Expr, Immersion};
pub use rigidity::{DeckGroup, IntersectionReport};
pub use sphere::{EuclideanPoint, Rotation, SpherePoint, TangentVector};

/// Default samples per chart axis.
pub const DEFAULT_RESOLUTION: usize = 64;

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n` in parallel when the `parallel` feature is on.
pub(crate) fn par_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    par_map(&idx, |&i| f(i))
}
