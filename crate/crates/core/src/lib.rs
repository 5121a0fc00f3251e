//! Removal of high-variance electrode artifacts (pops and drifts) from
//! multichannel EEG.
//!
//! Each channel's short-term variance is tracked against a calibration
//! reference; channels whose variance rises well above it are smoothly
//! replaced by an inverse-distance interpolation of their nearest neighbors.
//! The correction runs causally, sample by sample ([`Mode::Online`]), or over
//! a whole recording with a zero-phase variance estimate ([`Mode::Offline`]).
//!
//! The crate also ships a synthetic EEG generator with ground-truth artifacts
//! ([`sim`]) and the metrics used to score a corrector on it ([`eval`]).

mod corrector;
mod error;
pub mod eval;
pub mod io;
pub mod montage;
mod par;
pub mod sim;
pub mod variance;

pub use corrector::{
    artifact_probability, calibrate, calibrate_with, std_normal_cdf, uncorrectable_probability, CalibrationModel,
    CorrectedSample, Correction, Corrector, HearConfig, Mode,
};
pub use error::{Error, Result};
pub use montage::{Electrode, ElectrodeMontage, InterpolationMatrix, Neighbor};
pub use par::Exec;
pub use variance::{SmoothingSpec, VarianceState};
