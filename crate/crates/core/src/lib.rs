//! Harmonic excitation toolkit for GAN vocoder conditioning.
//!
//! * [`signal`]: pitch interpolation, sine excitation, seeded noise.
//! * [`ltv`]: time-varying FIR filtering, coefficient estimation and fitting.
//! * [`spectral`]: STFT, log-mel and loudness features.
//! * [`metrics`]: MR-STFT / mel losses, the weighted objective, jitter and U/V error.
//! * [`conditioning`]: channel stacking, multi-scale decimation, tensor export.

pub mod banded;
pub mod conditioning;
pub mod error;
pub mod ltv;
pub mod metrics;
pub mod minphase;
pub mod signal;
pub mod spectral;
pub mod tensor;
pub mod vowel;

pub use error::{Error, Result};
pub use ltv::{apply_ltv, estimate_coeffs_from_mel, fit_coeffs_least_squares, frequency_response};
pub use ltv::{EstimatorConfig, FitConfig, LtvFirCoeffs};
pub use signal::{gaussian_noise, harmonic_count, interpolate_f0, sine_excitation};
pub use signal::{AudioSignal, ExcitationConfig, F0Track, PhaseInit, SampleF0};
