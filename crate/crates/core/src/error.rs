use thiserror::Error;

/// Errors raised by geometric constructions and checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("pole error: point within {distance:.3e} of the excluded pole")]
    Pole { distance: f64 },

    #[error("degenerate immersion at sample {sample}: {detail}")]
    Degenerate { sample: usize, detail: String },

    #[error(
        "principal radius hit: translation {r:.6} is within {distance:.3e} of principal radius {radius:.6} at sample {sample}"
    )]
    PrincipalRadiusHit {
        r: f64,
        radius: f64,
        distance: f64,
        sample: usize,
    },

    #[error("flat point: principal curvature {kappa:.3e} at sample {sample}")]
    FlatPoint { kappa: f64, sample: usize },

    #[error("not hemispherical: enclosing cap radius {radius:.6} is not below pi/2")]
    NotHemispherical { radius: f64 },

    #[error("not locally convex: principal curvature {kappa:.3e} at sample {sample}")]
    NotConvex { kappa: f64, sample: usize },

    #[error("group does not act freely: element {element} fixes a point ({detail})")]
    NonFreeAction { element: usize, detail: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("resolution error: {0}")]
    Resolution(String),
}

pub type Result<T> = std::result::Result<T, Error>;
