//! Monte Carlo harness: trial configuration, seeded trials, sweeps, the
//! minimal-measurement ladder and result persistence.

mod config;
mod float_serde;
mod output;
mod stats;
mod sweep;
mod trial;
pub mod validate;

use std::time::Instant;

pub use config::{AmplitudeModel, CoherentMatrix, EstimatorMode, TrialConfig};
pub use output::{
    read_trials_csv, write_ladder_json, write_scaling_csv, write_summary_csv, write_sweep_json, write_trials_csv,
    write_trials_json, SUMMARY_COLUMNS, TRIAL_COLUMNS,
};
pub use stats::{mean, median, wilson_interval, wilson_interval_z, Z_95};
pub use sweep::{
    aggregate, find_min_measurements, mcs_heuristic, run_trials, sweep_array_size, sweep_mcs, LadderOptions,
    LadderOutcome, Rung, ScalingRow, ScalingTable, SweepOutput, SweepPoint, SweepResult,
};
pub use trial::{draw_channel, run_trial, run_trial_indexed, TrialRecord, LOSS_CAP_DB};

use crate::error::Result;
use crate::linalg::CMatrix;
use crate::nomp::{extract_paths, Dictionary, EstimateResult, NompOptions};
use crate::phase_retrieval::{wirtinger_flow, WfOptions};
use crate::sensing::{CoherentMeasurements, RssMeasurements, SensingEnsemble};

/// Two-stage estimate from RSS: Wirtinger Flow on `A_PR` recovers `A_CS h`
/// up to a global phase, then NOMP runs on `A_CS`.
pub fn estimate_noncoherent(
    y: &RssMeasurements,
    ensemble: &SensingEnsemble,
    wf: &WfOptions,
    nomp: &NompOptions,
) -> Result<EstimateResult> {
    let start = Instant::now();
    let stage1 = wirtinger_flow(&ensemble.a_pr, y, wf)?;
    let mut result = if stage1.estimate.iter().all(|z| z.norm_sqr() == 0.0) {
        EstimateResult::empty()
    } else {
        let dict = Dictionary::new(ensemble.a_cs.clone(), nomp.grid_oversampling)?;
        extract_paths(&stage1.estimate, &dict, nomp)?
    };
    result.stage1 = Some(stage1);
    result.elapsed = start.elapsed();
    Ok(result)
}

/// NOMP directly on complex measurements `y = A h + n`.
pub fn estimate_coherent(y: &CoherentMeasurements, a: &CMatrix, nomp: &NompOptions) -> Result<EstimateResult> {
    let start = Instant::now();
    let dict = Dictionary::new(a.clone(), nomp.grid_oversampling)?;
    let mut result = extract_paths(&y.values, &dict, nomp)?;
    result.elapsed = start.elapsed();
    Ok(result)
}
