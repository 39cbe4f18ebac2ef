//! Seeded sweeps and the minimal-measurement ladder.
//!
//! Trial `i` of any sweep uses seed `split_seed(template.seed, i)`, so every
//! sweep point sees the same channels and ensembles draws (common random
//! numbers) and results do not depend on scheduling.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EstimatorMode, TrialConfig};
use super::stats::{mean, median, wilson_interval};
use super::trial::{run_trial_indexed, TrialRecord};
use crate::error::{Error, Result};
use crate::rng::split_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// Mean of the strongest-direction loss, each clipped at [`super::LOSS_CAP_DB`].
    pub mean_loss_db: f64,
    pub median_loss_db: f64,
    /// Mean over trials of the per-path loss averaged over all true paths.
    pub mean_loss_all_paths_db: f64,
    pub stage1_converged_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: String,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn axis_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.axis_value).collect()
    }
}

/// Sweep summary together with every trial behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub result: SweepResult,
    pub records: Vec<TrialRecord>,
}

/// Aggregates records, counting a trial as a success when its strongest-path
/// loss is at most `loss_db`.
pub fn aggregate(axis_value: f64, records: &[TrialRecord], loss_db: f64) -> SweepPoint {
    let trials = records.len();
    let successes = records.iter().filter(|r| r.loss_strongest_db <= loss_db).count();
    let (wilson_lo, wilson_hi) = wilson_interval(successes, trials);
    let capped: Vec<f64> = records.iter().map(TrialRecord::capped_loss).collect();
    let all_paths: Vec<f64> = records.iter().map(TrialRecord::mean_capped_path_loss).collect();
    let converged = records.iter().filter(|r| r.stage1_converged).count();
    SweepPoint {
        axis_value,
        trials,
        successes,
        success_rate: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
        wilson_lo,
        wilson_hi,
        mean_loss_db: mean(&capped),
        median_loss_db: median(&records.iter().map(|r| r.loss_strongest_db).collect::<Vec<_>>()),
        mean_loss_all_paths_db: mean(&all_paths),
        stage1_converged_rate: if trials == 0 { 0.0 } else { converged as f64 / trials as f64 },
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers <= 1 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Trials `range` of `template`, ordered by trial index.
pub fn run_trials(
    template: &TrialConfig,
    range: std::ops::Range<usize>,
    workers: usize,
) -> Result<Vec<TrialRecord>> {
    template.validate()?;
    let one = |i: usize| {
        let cfg = TrialConfig {
            seed: split_seed(template.seed, i as u64),
            ..template.clone()
        };
        run_trial_indexed(&cfg, i)
    };
    if workers <= 1 {
        range.map(one).collect()
    } else {
        with_pool(workers, || range.into_par_iter().map(one).collect())
    }
}

/// Loss/success curve as a function of `M_CS` at fixed `M`.
pub fn sweep_mcs(
    template: &TrialConfig,
    mcs_values: &[usize],
    trials_per_point: usize,
    workers: usize,
) -> Result<SweepOutput> {
    for &m_cs in mcs_values {
        TrialConfig { m_cs, ..template.clone() }.validate()?;
    }
    let mut points = Vec::with_capacity(mcs_values.len());
    let mut records = Vec::new();
    for &m_cs in mcs_values {
        let cfg = TrialConfig { m_cs, ..template.clone() };
        let recs = run_trials(&cfg, 0..trials_per_point, workers)?;
        points.push(aggregate(m_cs as f64, &recs, 1.0));
        records.extend(recs);
    }
    Ok(SweepOutput {
        result: SweepResult { axis: "m_cs".into(), points },
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LadderOptions {
    pub target_rate: f64,
    pub loss_db: f64,
    pub trials_per_point: usize,
    /// First rung; `None` means `2K + 2`.
    pub m_start: Option<usize>,
    /// Largest `M` tried before giving up.
    pub m_cap: usize,
    /// Bisection stops once the bracket is at most `max(1, lo * resolution)` wide.
    pub resolution: f64,
    /// Candidate constants `c` for `M_CS = clamp(round(c K log2 N), 2K + 1, M / 2)`.
    /// A rung passes if any candidate does; with several entries this is an
    /// inner sweep over `M_CS` at every `M`.
    pub mcs_factors: Vec<f64>,
    /// Trials are run in chunks of this size; a rung is abandoned as soon as
    /// even all-successes on the remaining trials could not reach the target.
    pub chunk: usize,
    pub workers: usize,
}

impl Default for LadderOptions {
    fn default() -> Self {
        Self {
            target_rate: 0.99,
            loss_db: 1.0,
            trials_per_point: 400,
            m_start: None,
            m_cap: 2048,
            resolution: 1.0 / 16.0,
            mcs_factors: vec![1.5],
            chunk: 50,
            workers: 1,
        }
    }
}

impl LadderOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.target_rate) {
            return Err(Error::Config(format!("target_rate {} not in [0, 1)", self.target_rate)));
        }
        if self.trials_per_point == 0 || self.chunk == 0 {
            return Err(Error::Config("trials_per_point and chunk must be positive".into()));
        }
        if self.mcs_factors.is_empty() || self.mcs_factors.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::Config("mcs_factors must be a non-empty list of positive values".into()));
        }
        if !(self.resolution >= 0.0) {
            return Err(Error::Config("resolution must be non-negative".into()));
        }
        Ok(())
    }
}

/// `M_CS` used for a ladder rung at `M` measurements.
pub fn mcs_heuristic(n: usize, k: usize, m: usize, factor: f64) -> usize {
    let target = (factor * k as f64 * (n as f64).log2()).round() as usize;
    target.max(2 * k + 1).min(m / 2).min(n).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub m_cs: usize,
    pub passed: bool,
    /// Trials actually run; fewer than requested when abandoned early.
    pub point: SweepPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub m: usize,
    /// `M_CS` of the first passing candidate, else of the best one tried.
    pub m_cs: usize,
    pub passed: bool,
    pub point: SweepPoint,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderOutcome {
    /// Smallest tested `M` meeting the target; `None` if the cap was hit.
    pub m_star: Option<usize>,
    /// Rungs in evaluation order.
    pub rungs: Vec<Rung>,
}

fn evaluate_candidate(cfg: &TrialConfig, m: usize, opts: &LadderOptions) -> Result<Candidate> {
    let total = opts.trials_per_point;
    let mut records = Vec::with_capacity(total);
    let mut passed = true;
    while records.len() < total {
        let end = (records.len() + opts.chunk).min(total);
        records.extend(run_trials(cfg, records.len()..end, opts.workers)?);
        let successes = records.iter().filter(|r| r.loss_strongest_db <= opts.loss_db).count();
        let best_case = wilson_interval(successes + (total - records.len()), total).0;
        if best_case < opts.target_rate {
            passed = false;
            break;
        }
    }
    let point = aggregate(m as f64, &records, opts.loss_db);
    if records.len() == total {
        passed = point.wilson_lo >= opts.target_rate;
    }
    Ok(Candidate { m_cs: cfg.m_cs, passed, point })
}

fn evaluate_rung(template: &TrialConfig, m: usize, opts: &LadderOptions) -> Result<Rung> {
    let noncoherent = template.mode == EstimatorMode::Noncoherent;
    let mut mcs_values: Vec<usize> = Vec::new();
    if noncoherent {
        for &c in &opts.mcs_factors {
            let v = mcs_heuristic(template.n_elements, template.k_paths, m, c);
            if !mcs_values.contains(&v) {
                mcs_values.push(v);
            }
        }
    } else {
        // Unused by the coherent estimator; any valid value.
        mcs_values.push(template.m_cs.min(m / 2).max(1));
    }

    let mut candidates = Vec::with_capacity(mcs_values.len());
    for m_cs in mcs_values {
        let cfg = TrialConfig { m, m_cs, ..template.clone() };
        let cand = evaluate_candidate(&cfg, m, opts)?;
        let done = cand.passed;
        candidates.push(cand);
        if done {
            break;
        }
    }
    let chosen = candidates
        .iter()
        .find(|c| c.passed)
        .or_else(|| {
            candidates.iter().max_by(|a, b| {
                (a.point.successes as f64 / a.point.trials.max(1) as f64)
                    .total_cmp(&(b.point.successes as f64 / b.point.trials.max(1) as f64))
            })
        })
        .expect("at least one candidate");
    Ok(Rung {
        m,
        m_cs: if noncoherent { chosen.m_cs } else { 0 },
        passed: chosen.passed,
        point: chosen.point.clone(),
        candidates,
    })
}

/// Smallest `M` whose 95% Wilson lower bound on the success rate reaches
/// `target_rate`: doubling from `m_start`, then bisection.
pub fn find_min_measurements(template: &TrialConfig, opts: &LadderOptions) -> Result<LadderOutcome> {
    opts.validate()?;
    let k = template.k_paths;
    let start = opts.m_start.unwrap_or(2 * k + 2).max(2);
    let mut rungs: Vec<Rung> = Vec::new();
    let mut cache: BTreeMap<usize, bool> = BTreeMap::new();
    let mut eval = |m: usize, rungs: &mut Vec<Rung>| -> Result<bool> {
        if let Some(&p) = cache.get(&m) {
            return Ok(p);
        }
        let rung = evaluate_rung(template, m, opts)?;
        let p = rung.passed;
        cache.insert(m, p);
        rungs.push(rung);
        Ok(p)
    };

    let mut lo: Option<usize> = None;
    let mut m = start;
    let hi = loop {
        if m > opts.m_cap {
            return Ok(LadderOutcome { m_star: None, rungs });
        }
        if eval(m, &mut rungs)? {
            break m;
        }
        lo = Some(m);
        m *= 2;
    };

    let mut hi = hi;
    if let Some(mut lo) = lo {
        while hi - lo > ((lo as f64 * opts.resolution).floor() as usize).max(1) {
            let mid = lo + (hi - lo) / 2;
            if eval(mid, &mut rungs)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    Ok(LadderOutcome { m_star: Some(hi), rungs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub k: usize,
    pub m_star: Option<usize>,
    /// Coherent-baseline `M*` when requested.
    pub m_star_coherent: Option<usize>,
}

impl ScalingRow {
    /// `M*_noncoherent / M*_coherent`.
    pub fn overhead_ratio(&self) -> Option<f64> {
        Some(self.m_star? as f64 / self.m_star_coherent? as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    pub ladders: Vec<(usize, usize, EstimatorMode, LadderOutcome)>,
}

impl ScalingTable {
    pub fn m_star(&self, n: usize, k: usize) -> Option<usize> {
        self.rows.iter().find(|r| r.n == n && r.k == k).and_then(|r| r.m_star)
    }
}

/// Runs [`find_min_measurements`] for every `(N, K)`; with `with_coherent`
/// also the coherent baseline at each point.
pub fn sweep_array_size(
    template: &TrialConfig,
    n_values: &[usize],
    k_values: &[usize],
    opts: &LadderOptions,
    with_coherent: bool,
) -> Result<ScalingTable> {
    let mut rows = Vec::new();
    let mut ladders = Vec::new();
    for &k in k_values {
        for &n in n_values {
            let base = TrialConfig {
                n_elements: n,
                k_paths: k,
                min_separation: None,
                ..template.clone()
            };
            let cfg = TrialConfig { mode: EstimatorMode::Noncoherent, ..base.clone() };
            let noncoh = find_min_measurements(&cfg, opts)?;
            let m_star = noncoh.m_star;
            ladders.push((n, k, EstimatorMode::Noncoherent, noncoh));
            let m_star_coherent = if with_coherent {
                let cfg = TrialConfig { mode: EstimatorMode::Coherent, ..base };
                let coh = find_min_measurements(&cfg, opts)?;
                let m = coh.m_star;
                ladders.push((n, k, EstimatorMode::Coherent, coh));
                m
            } else {
                None
            };
            rows.push(ScalingRow { n, k, m_star, m_star_coherent });
        }
    }
    Ok(ScalingTable { rows, ladders })
}
