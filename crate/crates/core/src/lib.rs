//! Passive acoustic localization of a hidden impulsive point source from
//! edge-diffracted arrivals, without a relay surface.
//!
//! Two pipelines are provided:
//!
//! * **doorway**: the near jamb diffracts and the far jamb reflects the
//!   source's wavefront towards a vertical microphone array. A wavefront fit
//!   gives range and height; a gated-envelope beamformer over the hidden
//!   region resolves the azimuth.
//! * **single edge**: two vertical arrays at different azimuths around one
//!   edge. The wavefront fit gives range and height; the ratio of the two
//!   arrays' spectra is matched against knife-edge diffraction theory to
//!   recover the azimuth.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`.

mod error;
mod real;

pub mod arrivals;
pub mod dsp;
pub mod export;
pub mod forward;
pub mod kedge;
pub mod localize;
pub mod scene;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

pub use error::{Error, Result};
pub use real::Real;

/// `f64` instances of the generic types.
pub type Point = scene::Point3<f64>;
pub type DoorwayScene = scene::DoorwayScene<f64>;
pub type EdgeScene = scene::EdgeScene<f64>;
pub type MicArray = scene::MicArray<f64>;
pub type Source = scene::SourceGroundTruth<f64>;
pub type Physics = scene::PhysicsConfig<f64>;
pub type Emission = forward::EmissionSpec<f64>;
pub type Noise = forward::NoiseSpec<f64>;
pub type Traces = forward::TraceSet<f64>;
pub type Envelope = dsp::EnvelopeImage<f64>;
pub type Arrivals = arrivals::ArrivalSet<f64>;
pub type Fit = arrivals::WavefrontFit<f64>;
pub type LossCurve = kedge::LossCurve<f64>;
pub type RatioCurve = kedge::RatioCurve<f64>;
pub type Grid = localize::GridSpec<f64>;
pub type Heatmap = localize::Heatmap<f64>;
pub type Localization = localize::LocalizationResult<f64>;
pub type DoorwayConfig = localize::DoorwayConfig<f64>;
pub type EdgeConfig = localize::EdgeConfig<f64>;
