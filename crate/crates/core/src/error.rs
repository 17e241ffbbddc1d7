use num_complex::Complex64;
use thiserror::Error;

use crate::sphere::SpherePoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("derivative at infinity is undefined for transcendental maps")]
    TranscendentalAtInfinity,
    #[error("point {0} is a pole")]
    PoleAt(Complex64),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("series tail bound {bound:e} too large at z = {z}")]
    TailTooLarge { z: Complex64, bound: f64 },
    #[error("root search failed on {0}")]
    RootSearchFailed(String),
    #[error("no repelling fixed point found")]
    NoRepellingSeed,
    #[error("could only collect {found} of {wanted} Julia sample points")]
    SampleExhausted { found: usize, wanted: usize },
    #[error("fit is degenerate: {usable} usable depths (need 3)")]
    DegenerateFit { usable: usize },
    #[error("{0} is an omitted value of the map")]
    OmittedValue(SpherePoint),
    #[error("root polish failed for branch {0}")]
    RootPolishFailed(i64),
    #[error("pressure sums diverge at t = {t}")]
    Diverged { t: f64 },
    #[error("bad bracket: P({lo}) = {p_lo}, P({hi}) = {p_hi}")]
    BadBracket { lo: f64, hi: f64, p_lo: f64, p_hi: f64 },
    #[error("power iteration not converged: log-factor spread {spread:e}")]
    NotConverged { spread: f64 },
    #[error("too few admissible IFS branches: {0}")]
    TooFewBranches(usize),
    #[error("raster is degenerate: {occupied} occupied cells at the coarsest scale")]
    DegenerateRaster { occupied: usize },
    #[error("hypothesis unverified: {0}")]
    HypothesisUnverified(String),
    #[error("point lies {distance:e} from a strip boundary")]
    StripAmbiguous { distance: f64 },
    #[error("sequence has no symbols")]
    EmptySequence,
    #[error("undecidable: need {needed} resolved symbols")]
    Undecidable { needed: usize },
    #[error("at tree path {path:?}: {source}")]
    AtPath { path: Vec<i64>, source: Box<Error> },
    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<Error> },
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn at_stage(self, stage: &str) -> Error {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }

    pub fn root(&self) -> &Error {
        match self {
            Error::AtPath { source, .. } | Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Errors that mean "the numerics could not confirm the premise" rather than a failure.
    pub fn is_hypothesis(&self) -> bool {
        matches!(
            self.root(),
            Error::HypothesisUnverified(_) | Error::BadBracket { .. } | Error::Diverged { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
