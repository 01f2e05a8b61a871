//! Correlation-OTDR toolkit.
//!
//! Simulates a reflective optical-fiber channel probed by a PRBS intensity
//! burst and recovers round-trip latencies from the back-reflected signal
//! with sub-sample (picosecond-scale) resolution:
//!
//! * [`seqgen`]: maximal-length PRBS generation and NRZ burst rendering.
//! * [`fibersim`]: reflection-path enumeration, wavelength/temperature
//!   dependent group delay, backscatter and receiver effects.
//! * [`corrproc`]: trace averaging, fast cross-correlation and the
//!   bit-spaced sidelobe deconvolution filter.
//! * [`peakfit`]: peak detection, four-parameter Gaussian fitting and
//!   latency/consistency reporting.
//! * [`cdscan`]: multi-wavelength workflow with drift estimation and
//!   compensation, quadratic latency fit and dispersion extraction.
//! * [`oracle`]: independent brute-force reference implementations used by
//!   the verification suites.
//!
//! The numeric core is generic over the scalar type via [`Real`]
//! (`f32`/`f64`); all types default to `f64`, which is required for
//! picosecond work on delays of tens of microseconds.

pub mod cdscan;
pub mod corrproc;
mod dsp;
pub mod error;
pub mod fibersim;
mod linalg;
mod num;
pub mod oracle;
pub mod peakfit;
pub mod presets;
pub mod seqgen;

pub use error::{Error, Result};
pub use num::Real;

pub use cdscan::{DispersionResult, DriftModel, ReferenceDispersion, WavelengthScan};
pub use corrproc::{CorrelationResult, SidelobeFilter};
pub use fibersim::{
    CaptureSettings, DispersionParams, FiberModel, ReflectionEvent, TemperatureProfile, Trace,
};
pub use peakfit::{LatencyReport, PeakEstimate, PipelineConfig, SubsetRmsRow};
pub use seqgen::{BitSequence, BurstSpec, SampledWaveform};

/// `f32` aliases for the generic core types; the unsuffixed names default to
/// `f64`.
pub type Waveform32 = seqgen::SampledWaveform<f32>;
pub type BurstSpec32 = seqgen::BurstSpec<f32>;
pub type Correlation32 = corrproc::CorrelationResult<f32>;
pub type Trace32 = fibersim::Trace<f32>;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
