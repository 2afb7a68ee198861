//! Noise calibration toolkit for continuous-variable QKD receivers.
//!
//! Covers parametric PSD models, time-gated variance, trace synthesis,
//! stationarity tests, white-floor isolation, shot-noise calibration and
//! the parameter-estimation and key-rate consequences of each scheme.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod psd;
pub mod qkd;
pub mod special;
pub mod stats;
pub mod synth;
pub mod tgv;
pub mod trace;
pub mod white;
pub mod wss;

pub use calibration::{CalibrationResult, Scheme, ShotNoiseTruth};
pub use error::{Error, Result};
pub use psd::{DiracTone, LorentzianLine, NoisePsdModel, PowerLawSet};
pub use qkd::{EstimationReport, KeyRateReport, MeasurementSim, QkdScenario};
pub use tgv::{GateConfig, GatedSpectrum, TgvCurve};
pub use trace::{Switches, Trace};
pub use white::{WhiteEstimate, WhiteMethod};
pub use wss::{BlockScanReport, WssVerdict};
