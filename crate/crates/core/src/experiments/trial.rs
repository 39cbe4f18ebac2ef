use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{AmplitudeModel, CoherentMatrix, EstimatorMode, TrialConfig};
use super::{estimate_coherent, estimate_noncoherent};
use crate::channel::{
    beam_gain, best_single_beam_gain, freq_distance, loss_against, synthesize_channel, ArrayConfig,
    PathComponent, SparseChannel,
};
use crate::error::{Error, Result};
use crate::nomp::{EstimateResult, StopMode};
use crate::rng::{stream, STREAM_CHANNEL, STREAM_GAUSSIAN, STREAM_NOISE, STREAM_QUANTIZED};
use crate::sensing::{build_ensemble, measure_coherent, measure_rss, sample_gaussian_matrix, sample_quantized_matrix};

/// Losses above this are clipped when averaged across trials.
pub const LOSS_CAP_DB: f64 = 40.0;

const MAX_PLACEMENT_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub m_cs: usize,
    pub mode: EstimatorMode,
    pub config_hash: String,
    /// Loss when steering toward the estimated strongest direction.
    #[serde(with = "super::float_serde")]
    pub loss_strongest_db: f64,
    /// Per true path, in generation order: single-path steering loss of the
    /// matched estimate (`+∞` when unmatched).
    #[serde(with = "super::float_serde::vec")]
    pub loss_all_paths_db: Vec<f64>,
    /// Per true path: wrapped frequency error of the matched estimate.
    #[serde(with = "super::float_serde::vec")]
    pub freq_errors: Vec<f64>,
    pub stage1_converged: bool,
    pub success_1db: bool,
    pub mismatch_fro_rel: Option<f64>,
    pub error: Option<String>,
    pub wall_ms: f64,
}

impl TrialRecord {
    pub fn freq_err_max(&self) -> f64 {
        self.freq_errors.iter().cloned().fold(0.0, f64::max)
    }

    pub fn capped_loss(&self) -> f64 {
        self.loss_strongest_db.min(LOSS_CAP_DB)
    }

    pub fn mean_capped_path_loss(&self) -> f64 {
        if self.loss_all_paths_db.is_empty() {
            return LOSS_CAP_DB;
        }
        self.loss_all_paths_db.iter().map(|l| l.min(LOSS_CAP_DB)).sum::<f64>() / self.loss_all_paths_db.len() as f64
    }

    /// Same record with timing removed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self { wall_ms: 0.0, ..self.clone() }
    }
}

/// `K` frequencies, uniform on `[-π, π)`, each redrawn until it keeps
/// `min_sep` from all previously placed ones.
pub fn draw_channel<R: Rng + ?Sized>(cfg: &TrialConfig, rng: &mut R) -> Result<SparseChannel> {
    let array = ArrayConfig::ula(cfg.n_elements)?;
    let sep = cfg.min_separation();
    let mut freqs: Vec<f64> = Vec::with_capacity(cfg.k_paths);
    while freqs.len() < cfg.k_paths {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let w = rng.random_range(-PI..PI);
            if freqs.iter().all(|&f| freq_distance(f, w) >= sep) {
                freqs.push(w);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Config(format!(
                "could not place {} paths {sep} rad apart",
                cfg.k_paths
            )));
        }
    }
    let paths = freqs
        .into_iter()
        .map(|w| {
            let amplitude = match cfg.amplitude_model {
                AmplitudeModel::UnitModulusRandomPhase => Complex64::from_polar(1.0, rng.random_range(-PI..PI)),
                AmplitudeModel::ComplexGaussian => {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                }
            };
            PathComponent::new(amplitude, w)
        })
        .collect();
    Ok(SparseChannel::new(array, paths))
}

/// Single-path steering loss `20 log10(N / |a(ω̂)ᴴ a(ω)|)`.
fn path_loss(n: usize, truth: f64, estimate: f64) -> f64 {
    let delta = estimate - truth;
    let gain = (1..=n)
        .map(|i| Complex64::from_polar(1.0, i as f64 * delta))
        .sum::<Complex64>()
        .norm();
    loss_against(n as f64, gain)
}

/// Greedy nearest-frequency matching of estimates to true paths. Returns,
/// per true path, the matched estimate's frequency.
fn match_paths(truth: &[PathComponent], estimate: &EstimateResult) -> Vec<Option<f64>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, e) in estimate.paths.iter().enumerate() {
            pairs.push((freq_distance(t.spatial_freq, e.spatial_freq), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; truth.len()];
    let mut used = vec![false; estimate.paths.len()];
    for (_, i, j) in pairs {
        if out[i].is_none() && !used[j] {
            out[i] = Some(estimate.paths[j].spatial_freq);
            used[j] = true;
        }
    }
    out
}

fn estimate(cfg: &TrialConfig, h: &[Complex64]) -> Result<(EstimateResult, Option<f64>)> {
    let mut nomp = cfg.nomp;
    if let StopMode::KnownK(_) = nomp.stop_mode {
        nomp.stop_mode = StopMode::KnownK(cfg.k_paths);
    }
    let mut noise_rng = stream(cfg.seed, STREAM_NOISE);
    match cfg.mode {
        EstimatorMode::Noncoherent => {
            let ensemble = build_ensemble(cfg.m, cfg.m_cs, cfg.n_elements, cfg.seed)?;
            let y = measure_rss(&ensemble.a_final, h, cfg.noise_std, &mut noise_rng)?;
            let est = estimate_noncoherent(&y, &ensemble, &cfg.wf, &nomp)?;
            Ok((est, Some(ensemble.mismatch_fro_rel)))
        }
        EstimatorMode::Coherent => {
            let a = match cfg.coherent_matrix {
                CoherentMatrix::Quantized => {
                    sample_quantized_matrix(cfg.m, cfg.n_elements, &mut stream(cfg.seed, STREAM_QUANTIZED)).to_complex()
                }
                CoherentMatrix::Gaussian => {
                    sample_gaussian_matrix(cfg.m, cfg.n_elements, &mut stream(cfg.seed, STREAM_GAUSSIAN))
                }
            };
            let y = measure_coherent(&a, h, cfg.noise_std, &mut noise_rng)?;
            Ok((estimate_coherent(&y, &a, &nomp)?, None))
        }
    }
}

/// One seeded trial with index 0.
pub fn run_trial(cfg: &TrialConfig) -> Result<TrialRecord> {
    run_trial_indexed(cfg, 0)
}

/// Runs one trial. Only configuration errors are returned as `Err`;
/// numerical failures become failed records.
pub fn run_trial_indexed(cfg: &TrialConfig, trial_index: usize) -> Result<TrialRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let channel = draw_channel(cfg, &mut stream(cfg.seed, STREAM_CHANNEL))?;
    let h = synthesize_channel(&channel);
    let k = channel.k();

    let mut record = TrialRecord {
        trial_index,
        seed: cfg.seed,
        n: cfg.n_elements,
        k,
        m: cfg.m,
        m_cs: if cfg.mode == EstimatorMode::Noncoherent { cfg.m_cs } else { 0 },
        mode: cfg.mode,
        config_hash: cfg.hash(),
        loss_strongest_db: f64::INFINITY,
        loss_all_paths_db: vec![f64::INFINITY; k],
        freq_errors: vec![f64::INFINITY; k],
        stage1_converged: cfg.mode == EstimatorMode::Coherent,
        success_1db: false,
        mismatch_fro_rel: None,
        error: None,
        wall_ms: 0.0,
    };

    match estimate(cfg, &h) {
        Ok((est, mismatch)) => {
            record.mismatch_fro_rel = mismatch;
            if let Some(stage1) = &est.stage1 {
                record.stage1_converged = stage1.converged;
            }
            if let Some(w) = est.steering_direction(cfg.n_elements) {
                let (_, opt) = best_single_beam_gain(&h)?;
                record.loss_strongest_db = loss_against(opt, beam_gain(&h, w));
            }
            for (i, matched) in match_paths(&channel.paths, &est).into_iter().enumerate() {
                if let Some(w) = matched {
                    let truth = channel.paths[i].spatial_freq;
                    record.freq_errors[i] = freq_distance(w, truth);
                    record.loss_all_paths_db[i] = path_loss(cfg.n_elements, truth, w);
                }
            }
        }
        Err(e) if e.is_config() => return Err(e),
        Err(e) => record.error = Some(e.to_string()),
    }
    record.success_1db = record.loss_strongest_db <= 1.0;
    record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(record)
}
