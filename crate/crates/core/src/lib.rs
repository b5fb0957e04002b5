//! Phase-shifting interferometry with nonlinear step errors.
//!
//! A temporal phase-shifting algorithm (PSA) mixes in a conjugate term
//! `A2*exp(-i*phi)` whenever the actual phase steps deviate from nominal. This
//! crate synthesizes fringe stacks, evaluates PSA frequency transfer functions,
//! predicts the resulting double-frequency ripple, and removes it with a spatial
//! carrier plus low-pass filtering.

pub mod artifact;
pub mod carrier;
pub mod error;
pub mod fft;
pub mod field;
pub mod io;
pub mod metrics;
pub mod phase;
pub mod psa;

pub use artifact::{conjugate_amplitudes, measure_leak, predicted_error_map, ConjugatePair, LeakEstimate};
pub use carrier::{
    demodulate_spatial, demodulate_temporal_only, estimate_carrier, CarrierChoice, SpatialDemod,
    SpectralMask,
};
pub use error::{Error, ErrorClass, Result};
pub use field::{
    generate_stack, synthesize_wavefront, CarrierSpec, ComplexField, ErrorModel, ErrorSchedule,
    InterferogramStack, PhaseMap, StackMeta, StackSynthesis, Wavefront,
};
pub use psa::{demodulate_temporal, extract_phase, ftf_eval, sh5_spec, taps_from_zeros, ExtractedPhase, PsaSpec};
