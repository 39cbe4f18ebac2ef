//! Noncoherent compressive estimation of sparse mm-wave spatial channels.
//!
//! A transmitter with an `N`-element uniform linear array sends `M` beacons
//! whose element weights are restricted to the 2-bit alphabet `{1, j, -1, -j}`.
//! Receivers report only the received signal strength of each beacon. The
//! crate recovers the dominant spatial frequencies from those RSS values in
//! two stages:
//!
//! 1. the physical beacon matrix is generated as the quantized product of a
//!    phase-retrieval factor `A_PR` (`M x M_CS`) and a compressive factor
//!    `A_CS` (`M_CS x N`); Wirtinger Flow recovers `y_CS = A_CS h` up to a
//!    global phase ([`phase_retrieval`]);
//! 2. Newtonized orthogonal matching pursuit extracts continuous-valued
//!    frequencies and amplitudes from `y_CS` ([`nomp`]).
//!
//! [`experiments`] wraps both stages in a seeded Monte Carlo harness with
//! CSV/JSON persistence.

pub mod channel;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod nomp;
pub mod phase_retrieval;
pub mod rng;
pub mod sensing;

pub use num_complex::Complex64;

pub use channel::{
    beamforming_loss_db, best_single_beam_gain, mrt_loss_db, spatial_freq_from_angle,
    steering_vector, synthesize_channel, wrap_phase, ArrayConfig, PathComponent, SparseChannel,
};
pub use error::{Error, Result};
pub use experiments::{
    estimate_coherent, estimate_noncoherent, find_min_measurements, run_trial, sweep_array_size,
    sweep_mcs, AmplitudeModel, EstimatorMode, LadderOptions, LadderOutcome, ScalingTable,
    SweepPoint, SweepResult, TrialConfig, TrialRecord,
};
pub use nomp::{
    extract_paths, Dictionary, EstimateResult, EstimatedPath, NompOptions, StopMode,
};
pub use phase_retrieval::{
    phase_aligned_distance, spectral_initialize, wf_gradient, wirtinger_flow, WfOptions, WfResult,
};
pub use sensing::{
    build_ensemble, measure_coherent, measure_rss, CMatrix, CoherentMeasurements,
    QuantizedMatrix, RssMeasurements, SensingEnsemble, Symbol,
};
