use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("filter assigns zero weight to every level")]
    DegenerateFilter,

    #[error("preparation filter missed the spectrum (success probability {p_mc:e})")]
    FilterMissedSpectrum { p_mc: f64 },

    #[error("too few levels in spacing window: {found} < {required}")]
    TooFewLevels { found: usize, required: usize },

    #[error(
        "dressing resonance for pair ({i}, {j}) at r = {distance:.4} um: denominator {denominator:e} \
         below threshold {threshold:e}"
    )]
    Resonance {
        i: usize,
        j: usize,
        distance: f64,
        denominator: f64,
        threshold: f64,
    },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("serialization: {0}")]
    Serialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical backend rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::FilterMissedSpectrum { .. } | Error::Resonance { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
