//! Self-check suite behind `ncce validate`: fast invariants that should hold
//! for any correct build, each with a pass/fail verdict and a short detail.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use super::stats::wilson_interval;
use crate::channel::{
    beamforming_loss_db, best_single_beam_gain, freq_distance, steering_vector, synthesize_channel, ArrayConfig,
    PathComponent, SparseChannel,
};
use crate::error::Result;
use crate::linalg::{mat_vec, CMatrix};
use crate::nomp::{extract_paths, Dictionary, NompOptions};
use crate::phase_retrieval::{wf_gradient, wf_objective};
use crate::rng::{split_seed, stream, STREAM_CHANNEL, STREAM_GAUSSIAN, STREAM_NOISE, STREAM_QUANTIZED};
use crate::sensing::{measure_rss, row_pseudoinverse, sample_gaussian_matrix, sample_quantized_matrix, Symbol};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

fn random_channel(n: usize, k: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = stream(seed, STREAM_CHANNEL);
    let paths = (0..k)
        .map(|_| {
            let amp = Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
            PathComponent::new(amp, rng.random_range(-PI..PI))
        })
        .collect();
    synthesize_channel(&SparseChannel::new(ArrayConfig { n_elements: n, spacing_over_wavelength: 0.5 }, paths))
}

pub fn check_quantizer() -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut exact = true;
    for s in Symbol::ALL {
        exact &= Symbol::quantize(s.value()) == s;
        exact &= Symbol::quantize(s.value() * 3.7) == s;
    }
    let mut rng = stream(11, STREAM_NOISE);
    for _ in 0..10_000 {
        let z = Complex64::from_polar(rng.random_range(0.1..10.0), rng.random_range(-PI..PI));
        let q = Symbol::quantize(z).value();
        exact &= [q.re, q.im].iter().all(|v| *v == 0.0 || v.abs() == 1.0);
        let err = (z.arg() - q.arg()).rem_euclid(2.0 * PI);
        worst = worst.max(err.min(2.0 * PI - err));
    }
    let tie = Symbol::quantize(Complex64::from_polar(1.0, FRAC_PI_2 / 2.0)) == Symbol::One;
    let zero = Symbol::quantize(Complex64::new(0.0, 0.0)) == Symbol::One;
    CheckOutcome::new(
        "quantizer_alphabet",
        exact && tie && zero && worst <= PI / 4.0 + 1e-12,
        format!("max phase error {worst:.4} rad, tie->1 {tie}, zero->1 {zero}"),
    )
}

pub fn check_pseudoinverse() -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for (m_cs, n) in [(8, 64), (16, 256), (32, 1024)] {
        for seed in 0..100 {
            let a = sample_gaussian_matrix(m_cs, n, &mut stream(seed, STREAM_GAUSSIAN));
            match row_pseudoinverse(&a) {
                Ok(p) => {
                    let dev = (&a * p - CMatrix::identity(m_cs, m_cs)).iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
                    worst = worst.max(dev);
                }
                Err(_) => failures += 1,
            }
        }
    }
    CheckOutcome::new(
        "pseudoinverse_identity",
        failures == 0 && worst <= 1e-8,
        format!("max |A A+ - I| = {worst:.3e} over 300 matrices, {failures} failures"),
    )
}

pub fn check_wf_gradient() -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let (m, k) = (40, 6);
        let a = sample_gaussian_matrix(m, k, &mut stream(seed, STREAM_GAUSSIAN)) * Complex64::from(k as f64).sqrt();
        let mut rng = stream(seed, STREAM_NOISE);
        let x: Vec<Complex64> = (0..k).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let z: Vec<Complex64> = (0..k).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let y = crate::sensing::RssMeasurements {
            values: mat_vec(&a, &x).iter().map(|v| v.norm_sqr()).collect(),
            noise_variance: 0.0,
        };
        let (Ok(g), Ok(_)) = (wf_gradient(&a, &y, &z), wf_objective(&a, &y, &z)) else {
            return CheckOutcome::new("wf_gradient", false, "evaluation failed".into());
        };
        let h = 1e-6;
        let mut fd = vec![Complex64::new(0.0, 0.0); k];
        for j in 0..k {
            for (dir, slot) in [(Complex64::new(1.0, 0.0), 0), (Complex64::new(0.0, 1.0), 1)] {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[j] += dir * h;
                zm[j] -= dir * h;
                let d = (wf_objective(&a, &y, &zp).unwrap() - wf_objective(&a, &y, &zm).unwrap()) / (2.0 * h);
                // df/dRe = 2 Re g, df/dIm = 2 Im g for g = ∂f/∂z̄.
                if slot == 0 {
                    fd[j].re = d / 2.0;
                } else {
                    fd[j].im = d / 2.0;
                }
            }
        }
        let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = g.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
        worst = worst.max(num / den);
    }
    CheckOutcome::new("wf_gradient", worst <= 1e-5, format!("max relative error vs finite differences {worst:.3e}"))
}

pub fn check_nomp_monotone() -> CheckOutcome {
    let mut violations = 0;
    let mut worst_rise: f64 = 0.0;
    for t in 0..100u64 {
        let seed = split_seed(5, t);
        let (n, m_cs) = (64, 16);
        let a = sample_gaussian_matrix(m_cs, n, &mut stream(seed, STREAM_GAUSSIAN));
        let h = random_channel(n, 1 + (t % 3) as usize, seed);
        let mut y = mat_vec(&a, &h);
        let mut rng = stream(seed, STREAM_NOISE);
        for v in &mut y {
            *v += Complex64::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
        }
        let Ok(dict) = Dictionary::new(a, 4) else { return CheckOutcome::new("nomp_residual_monotone", false, "dictionary".into()) };
        match extract_paths(&y, &dict, &NompOptions::default()) {
            Ok(est) => {
                let mut prev = 1.0;
                for &e in &est.residual_history {
                    if e > prev * (1.0 + 1e-12) {
                        violations += 1;
                        worst_rise = worst_rise.max(e - prev);
                    }
                    prev = e;
                }
            }
            Err(_) => violations += 1,
        }
    }
    CheckOutcome::new(
        "nomp_residual_monotone",
        violations == 0,
        format!("{violations} increases in 100 trials (largest {worst_rise:.3e})"),
    )
}

pub fn check_phase_invariance() -> CheckOutcome {
    let mut rss_dev: f64 = 0.0;
    let mut freq_dev: f64 = 0.0;
    let mut amp_dev: f64 = 0.0;
    for seed in 0..20u64 {
        let n = 64;
        let h = random_channel(n, 2, seed);
        let phi = Complex64::from_polar(1.0, 0.3 + seed as f64);
        let hr: Vec<Complex64> = h.iter().map(|v| v * phi).collect();
        let q = sample_quantized_matrix(32, n, &mut stream(seed, STREAM_QUANTIZED));
        let y1 = measure_rss(&q, &h, 0.0, &mut stream(0, STREAM_NOISE)).unwrap();
        let y2 = measure_rss(&q, &hr, 0.0, &mut stream(0, STREAM_NOISE)).unwrap();
        for (a, b) in y1.values.iter().zip(&y2.values) {
            rss_dev = rss_dev.max((a - b).abs() / a.abs().max(1.0));
        }

        let a = sample_gaussian_matrix(16, n, &mut stream(seed, STREAM_GAUSSIAN));
        let dict = Dictionary::new(a.clone(), 4).unwrap();
        let yc = mat_vec(&a, &h);
        let ycr: Vec<Complex64> = yc.iter().map(|v| v * phi).collect();
        let opts = NompOptions::known_k(2);
        let (e1, e2) = (extract_paths(&yc, &dict, &opts).unwrap(), extract_paths(&ycr, &dict, &opts).unwrap());
        for (p, r) in e1.paths.iter().zip(&e2.paths) {
            freq_dev = freq_dev.max(freq_distance(p.spatial_freq, r.spatial_freq));
            amp_dev = amp_dev.max((p.amplitude * phi - r.amplitude).norm());
        }
    }
    CheckOutcome::new(
        "global_phase_invariance",
        rss_dev <= 1e-12 && freq_dev <= 1e-8 && amp_dev <= 1e-8,
        format!("rss {rss_dev:.2e}, frequency {freq_dev:.2e}, amplitude {amp_dev:.2e}"),
    )
}

pub fn check_beam_oracle() -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for (n, omega) in [(16, 0.37), (64, -2.1), (256, 3.0)] {
        let array = ArrayConfig::ula(n)?;
        let h = steering_vector(&array, omega);
        let (w, gain) = best_single_beam_gain(&h)?;
        worst = worst.max(freq_distance(w, omega)).max((gain - n as f64).abs() / n as f64);
        worst = worst.max(beamforming_loss_db(&h, omega)?);
        // Half a bin off a single path: |Σ e^{jπi/N}|² / N² = 1 / (N² sin²(π/2N)).
        let expect = -10.0 * (1.0 / ((n * n) as f64 * (PI / (2.0 * n as f64)).sin().powi(2))).log10();
        let loss = beamforming_loss_db(&h, omega + PI / n as f64)?;
        worst = worst.max((loss - expect).abs());
    }
    Ok(CheckOutcome::new("beam_oracle_closed_form", worst <= 1e-6, format!("max deviation {worst:.3e}")))
}

pub fn check_wilson() -> CheckOutcome {
    let (lo_all, _) = wilson_interval(400, 400);
    let (lo_one_miss, _) = wilson_interval(399, 400);
    let (lo0, hi0) = wilson_interval(0, 10);
    let passed = lo_all > 0.99 && lo_one_miss < 0.99 && lo0 == 0.0 && hi0 > 0.0 && hi0 < 1.0;
    CheckOutcome::new(
        "wilson_interval",
        passed,
        format!("400/400 lo {lo_all:.5}, 399/400 lo {lo_one_miss:.5}"),
    )
}

/// Runs every check in order.
pub fn run_all() -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_quantizer(),
        check_pseudoinverse(),
        check_wf_gradient(),
        check_nomp_monotone(),
        check_phase_invariance(),
        check_beam_oracle()?,
        check_wilson(),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_all().unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
