use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("sample rate too low: emission needs fs > {required_fs} Hz")]
    Undersampled { required_fs: f64 },

    #[error("duration {duration} s is too short; at least {minimum} s is needed to hold every arrival")]
    DurationTooShort { duration: f64, minimum: f64 },

    #[error("invalid band {lo}..{hi} Hz for fs = {fs} Hz (need 0 < lo < hi < fs/2)")]
    InvalidBand { lo: f64, hi: f64, fs: f64 },

    #[error("empty window")]
    EmptyWindow,

    #[error("power spectra are on different frequency grids")]
    MismatchedGrids,

    #[error(
        "need at least 3 detected channels over 2 distinct heights, got {channels} channels over {heights} heights"
    )]
    InsufficientChannels { channels: usize, heights: usize },

    #[error("degenerate wavefront: {0}")]
    Degenerate(String),

    #[error("wavefront fit did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("wavefront fit rejected: rmse {rmse} s exceeds {limit} s")]
    FitRejected { rmse: f64, limit: f64 },

    #[error("no wavefront detected")]
    NoDetection,

    #[error("signal too weak: peak/background ratio {ratio:.2} below {limit:.2}")]
    LowSnr { ratio: f64, limit: f64 },

    #[error("azimuth objective is flat (spread {spread:.3e} dB^2); azimuth is ambiguous")]
    Ambiguous { spread: f64 },

    #[error("measured ratio does not overlap the fit band")]
    EmptyBand,

    #[error("array fits disagree on source height: {z0_a:.3} m vs {z0_b:.3} m")]
    InconsistentHeights { z0_a: f64, z0_b: f64 },

    #[error("the edge pipeline requires two arrays, found {found}")]
    TwoArraysRequired { found: usize },

    #[error("search grid is empty")]
    EmptyGrid,
}

impl Error {
    /// True for errors raised by the screening rules of a pipeline on otherwise
    /// well-formed input (nothing detected, poor fit, ambiguous azimuth, ...).
    pub fn is_rejection(&self) -> bool {
        matches!(
            self,
            Error::NoDetection
                | Error::LowSnr { .. }
                | Error::FitRejected { .. }
                | Error::Degenerate(_)
                | Error::NoConvergence { .. }
                | Error::InsufficientChannels { .. }
                | Error::Ambiguous { .. }
                | Error::InconsistentHeights { .. }
        )
    }
}
