//! Uniform linear array geometry, sparse multipath channels and
//! beamforming-quality metrics.
//!
//! Element `n` (1-indexed) of the steering vector is `e^{j n ω}` where `ω` is
//! the spatial frequency `2π (d/λ) sin θ`, wrapped into `[-π, π)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;

const TWO_PI: f64 = 2.0 * PI;

/// Grid oversampling of the beam-gain oracle relative to `N`.
pub const ORACLE_GRID_FACTOR: usize = 32;
/// Newton iterations used to polish each oracle grid peak.
pub const ORACLE_NEWTON_ITERS: usize = 20;
/// Number of strongest grid peaks polished by the oracle.
const ORACLE_PEAKS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n_elements: usize,
    pub spacing_over_wavelength: f64,
}

impl ArrayConfig {
    pub fn new(n_elements: usize, spacing_over_wavelength: f64) -> Result<Self> {
        if n_elements < 2 {
            return Err(Error::InvalidInput(format!(
                "array needs at least 2 elements, got {n_elements}"
            )));
        }
        if !(spacing_over_wavelength > 0.0 && spacing_over_wavelength <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "element spacing {spacing_over_wavelength} not in (0, 1] wavelengths"
            )));
        }
        Ok(Self {
            n_elements,
            spacing_over_wavelength,
        })
    }

    /// Half-wavelength array.
    pub fn ula(n_elements: usize) -> Result<Self> {
        Self::new(n_elements, 0.5)
    }

    /// Width of one DFT bin, `2π/N`.
    pub fn bin_width(&self) -> f64 {
        TWO_PI / self.n_elements as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    pub amplitude: Complex64,
    pub spatial_freq: f64,
}

impl PathComponent {
    pub fn new(amplitude: Complex64, spatial_freq: f64) -> Self {
        Self {
            amplitude,
            spatial_freq: wrap_phase(spatial_freq),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseChannel {
    pub paths: Vec<PathComponent>,
    pub array: ArrayConfig,
}

impl SparseChannel {
    pub fn new(array: ArrayConfig, paths: Vec<PathComponent>) -> Self {
        Self { paths, array }
    }

    pub fn k(&self) -> usize {
        self.paths.len()
    }

    /// Scales every path amplitude by `scale`.
    pub fn scaled(&self, scale: Complex64) -> Self {
        let paths = self
            .paths
            .iter()
            .map(|p| PathComponent::new(p.amplitude * scale, p.spatial_freq))
            .collect();
        Self::new(self.array, paths)
    }
}

/// Wraps an angle into the half-open interval `[-π, π)`; `+π` maps to `-π`.
pub fn wrap_phase(omega: f64) -> f64 {
    let mut r = omega - TWO_PI * ((omega + PI) / TWO_PI).floor();
    if r >= PI {
        r -= TWO_PI;
    }
    if r < -PI {
        r += TWO_PI;
    }
    r
}

/// Signed wrapped difference `a - b` in `[-π, π)`.
pub fn freq_distance(a: f64, b: f64) -> f64 {
    wrap_phase(a - b).abs()
}

pub fn spatial_freq_from_angle(theta: f64, spacing_over_wavelength: f64) -> f64 {
    wrap_phase(TWO_PI * spacing_over_wavelength * theta.sin())
}

/// `[e^{j1ω}, ..., e^{jNω}]ᵀ`
pub fn steering_vector(array: &ArrayConfig, omega: f64) -> Vec<Complex64> {
    steering(array.n_elements, omega)
}

pub(crate) fn steering(n: usize, omega: f64) -> Vec<Complex64> {
    (1..=n)
        .map(|i| Complex64::from_polar(1.0, i as f64 * omega))
        .collect()
}

/// `h = Σ_k α_k a(ω_k)`
pub fn synthesize_channel(channel: &SparseChannel) -> Vec<Complex64> {
    let n = channel.array.n_elements;
    let mut h = vec![Complex64::new(0.0, 0.0); n];
    for path in &channel.paths {
        for (i, hi) in h.iter_mut().enumerate() {
            *hi += path.amplitude * Complex64::from_polar(1.0, (i + 1) as f64 * path.spatial_freq);
        }
    }
    h
}

/// `a(ω)ᴴ h` together with its first two derivatives in `ω`.
fn beam_response_derivs(h: &[Complex64], omega: f64) -> (Complex64, Complex64, Complex64) {
    let mut s = Complex64::new(0.0, 0.0);
    let mut ds = Complex64::new(0.0, 0.0);
    let mut dds = Complex64::new(0.0, 0.0);
    for (i, &hi) in h.iter().enumerate() {
        let n = (i + 1) as f64;
        let t = Complex64::from_polar(1.0, -n * omega) * hi;
        s += t;
        ds += Complex64::new(0.0, -n) * t;
        dds -= t * (n * n);
    }
    (s, ds, dds)
}

/// Single-beam gain `|a(ω)ᴴ h|`.
pub fn beam_gain(h: &[Complex64], omega: f64) -> f64 {
    h.iter()
        .enumerate()
        .map(|(i, &hi)| Complex64::from_polar(1.0, -((i + 1) as f64) * omega) * hi)
        .sum::<Complex64>()
        .norm()
}

/// Gains `|a(ω_g)ᴴ h|` on the uniform grid `ω_g = 2πg/L`, `g = 0..L`.
pub(crate) fn beam_gain_grid(h: &[Complex64], len: usize) -> Vec<f64> {
    debug_assert!(len > h.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    buf[1..=h.len()].copy_from_slice(h);
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    buf.iter().map(|x| x.norm()).collect()
}

/// Newton ascent on `|a(ω)ᴴ h|²` from `omega`, never accepting a decrease.
pub(crate) fn polish_beam(h: &[Complex64], mut omega: f64, iters: usize) -> (f64, f64) {
    let (s, _, _) = beam_response_derivs(h, omega);
    let mut power = s.norm_sqr();
    for _ in 0..iters {
        let (s, ds, dds) = beam_response_derivs(h, omega);
        let d1 = 2.0 * (s.conj() * ds).re;
        let d2 = 2.0 * ds.norm_sqr() + 2.0 * (s.conj() * dds).re;
        if !(d2 < 0.0) {
            break;
        }
        let mut step = -d1 / d2;
        let mut improved = false;
        for _ in 0..8 {
            let cand = wrap_phase(omega + step);
            let p = beam_gain(h, cand).powi(2);
            if p >= power {
                omega = cand;
                power = p;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved || step.abs() < 1e-14 {
            break;
        }
    }
    (omega, power.sqrt())
}

/// Direction and value of the best single-beam gain `max_ω |a(ω)ᴴ h|`.
///
/// Dense grid of `32N` points followed by Newton polish of the strongest
/// grid peaks.
pub fn best_single_beam_gain(h: &[Complex64]) -> Result<(f64, f64)> {
    if h.is_empty() || norm(h) == 0.0 {
        return Err(Error::InvalidInput("zero channel has no best beam".into()));
    }
    let len = ORACLE_GRID_FACTOR * h.len().max(2);
    let grid = beam_gain_grid(h, len);
    let mut peaks: Vec<usize> = (0..len)
        .filter(|&g| {
            let prev = grid[(g + len - 1) % len];
            let next = grid[(g + 1) % len];
            grid[g] >= prev && grid[g] >= next
        })
        .collect();
    peaks.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]).then(a.cmp(&b)));
    peaks.truncate(ORACLE_PEAKS);

    let mut best = (0.0, f64::NEG_INFINITY);
    for g in peaks {
        let start = wrap_phase(TWO_PI * g as f64 / len as f64);
        let (omega, gain) = polish_beam(h, start, ORACLE_NEWTON_ITERS);
        if gain > best.1 {
            best = (omega, gain);
        }
    }
    Ok(best)
}

/// `20 log10(gain_opt / |a(ω̂)ᴴ h|)`, relative to the best single-beam gain.
///
/// Returns `+∞` when the steered gain vanishes.
pub fn beamforming_loss_db(h: &[Complex64], omega_hat: f64) -> Result<f64> {
    let (_, opt) = best_single_beam_gain(h)?;
    Ok(loss_against(opt, beam_gain(h, omega_hat)))
}

pub(crate) fn loss_against(reference: f64, achieved: f64) -> f64 {
    if achieved <= 0.0 {
        return f64::INFINITY;
    }
    (20.0 * (reference / achieved).log10()).max(0.0)
}

/// Loss relative to maximum-ratio transmission, `20 log10(‖h‖√N / |a(ω̂)ᴴ h|)`.
pub fn mrt_loss_db(h: &[Complex64], omega_hat: f64) -> Result<f64> {
    let energy = norm(h);
    if energy == 0.0 {
        return Err(Error::InvalidInput("zero channel".into()));
    }
    Ok(loss_against(energy * (h.len() as f64).sqrt(), beam_gain(h, omega_hat)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ula(n: usize) -> ArrayConfig {
        ArrayConfig::ula(n).unwrap()
    }

    /// Exhaustive grid maximum of `|a(ω)ᴴ h|`, no refinement.
    fn brute_force_gain(h: &[Complex64], points: usize) -> f64 {
        (0..points)
            .map(|g| {
                let w = -PI + TWO_PI * g as f64 / points as f64;
                let step = Complex64::from_polar(1.0, -w);
                let mut phasor = step;
                let mut acc = Complex64::new(0.0, 0.0);
                for &hi in h {
                    acc += phasor * hi;
                    phasor *= step;
                }
                acc.norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn array_config_validation() {
        assert!(ArrayConfig::new(1, 0.5).is_err());
        assert!(ArrayConfig::new(4, 0.0).is_err());
        assert!(ArrayConfig::new(4, 1.5).is_err());
        assert!(ArrayConfig::new(4, 1.0).is_ok());
    }

    #[test]
    fn steering_examples() {
        let a = steering_vector(&ula(4), 0.0);
        assert!(a.iter().all(|x| (x - c(1.0, 0.0)).norm() < 1e-15));

        let a = steering_vector(&ula(2), PI);
        assert!((a[0] - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((a[1] - c(1.0, 0.0)).norm() < 1e-14);

        let a = steering_vector(&ula(16), 1.234);
        assert!((norm(&a) - 4.0).abs() < 1e-14);
        assert!(a.iter().all(|x| (x.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn angle_to_spatial_frequency() {
        assert_eq!(spatial_freq_from_angle(0.0, 0.5), 0.0);
        assert_eq!(spatial_freq_from_angle(PI / 2.0, 0.5), -PI);
        assert!((spatial_freq_from_angle(PI / 6.0, 0.5) - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_phase(PI), -PI);
        assert_eq!(wrap_phase(-PI), -PI);
        assert!((wrap_phase(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        for k in -20..20 {
            let w = wrap_phase(0.37 * k as f64);
            assert!((-PI..PI).contains(&w));
        }
    }

    #[test]
    fn synthesis_examples() {
        let arr = ula(8);
        let single = SparseChannel::new(arr, vec![PathComponent::new(c(1.0, 0.0), 0.7)]);
        let h = synthesize_channel(&single);
        let a = steering_vector(&arr, 0.7);
        assert!(h.iter().zip(&a).all(|(x, y)| (x - y).norm() < 1e-15));

        let empty = SparseChannel::new(arr, vec![]);
        assert!(synthesize_channel(&empty).iter().all(|x| x.norm() == 0.0));

        let p1 = PathComponent::new(c(0.5, -1.0), -1.1);
        let p2 = PathComponent::new(c(-0.2, 0.3), 2.9);
        let both = synthesize_channel(&SparseChannel::new(arr, vec![p1, p2]));
        let h1 = synthesize_channel(&SparseChannel::new(arr, vec![p1]));
        let h2 = synthesize_channel(&SparseChannel::new(arr, vec![p2]));
        for i in 0..8 {
            assert!((both[i] - h1[i] - h2[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn best_beam_single_path() {
        let arr = ula(32);
        let w0 = 0.4321;
        let h = steering_vector(&arr, w0);
        let (w, g) = best_single_beam_gain(&h).unwrap();
        assert!(freq_distance(w, w0) < 1e-6);
        assert!((g - 32.0).abs() < 1e-6);

        let h2: Vec<_> = h.iter().map(|x| x * 2.0).collect();
        let (_, g2) = best_single_beam_gain(&h2).unwrap();
        assert!((g2 - 64.0).abs() < 1e-6);
    }

    #[test]
    fn best_beam_two_paths_matches_brute_force() {
        let n = 64;
        let arr = ula(n);
        let w0 = -0.9;
        let ch = SparseChannel::new(
            arr,
            vec![
                PathComponent::new(c(1.0, 0.0), w0),
                PathComponent::new(c(1.0, 0.0), w0 + 8.0 * arr.bin_width()),
            ],
        );
        let h = synthesize_channel(&ch);
        let (_, g) = best_single_beam_gain(&h).unwrap();
        let brute = brute_force_gain(&h, 1_000_000);
        assert!(g >= n as f64 && g <= 2.0 * n as f64);
        assert!((g - brute).abs() <= 1e-6 * brute + 1e-6, "{g} vs {brute}");
        assert!(g >= brute - 1e-9);
    }

    #[test]
    fn oracle_dominates_its_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 24;
        let h: Vec<_> = (0..n).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let (_, g) = best_single_beam_gain(&h).unwrap();
        let len = ORACLE_GRID_FACTOR * n;
        for k in 0..len {
            let w = TWO_PI * k as f64 / len as f64;
            assert!(g >= beam_gain(&h, w) - 1e-9 * n as f64);
        }
    }

    #[test]
    fn oracle_rejects_zero_channel() {
        assert!(best_single_beam_gain(&[c(0.0, 0.0); 4]).is_err());
        assert!(beamforming_loss_db(&[c(0.0, 0.0); 4], 0.0).is_err());
    }

    #[test]
    fn loss_examples() {
        let n = 32;
        let arr = ula(n);
        let w0 = 0.25;
        let h = steering_vector(&arr, w0);
        assert!(beamforming_loss_db(&h, w0).unwrap() < 1e-9);

        // One bin off: the Dirichlet kernel by direct summation.
        let delta = arr.bin_width();
        let dirichlet: Complex64 = (1..=n)
            .map(|i| Complex64::from_polar(1.0, i as f64 * delta))
            .sum();
        let expected = 20.0 * (n as f64 / dirichlet.norm()).log10();
        let got = beamforming_loss_db(&h, w0 + delta).unwrap();
        // Exactly one bin off lands on a null of the array factor.
        if dirichlet.norm() < 1e-9 {
            assert!(got > 200.0 || got.is_infinite());
        } else {
            assert!((got - expected).abs() < 1e-6);
        }

        let half = 0.5 * delta;
        let dirichlet: Complex64 = (1..=n).map(|i| Complex64::from_polar(1.0, i as f64 * half)).sum();
        let expected = 20.0 * (n as f64 / dirichlet.norm()).log10();
        assert!((beamforming_loss_db(&h, w0 + half).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn loss_at_oracle_direction_is_zero_for_random_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(4..64);
            let k = rng.random_range(1..5);
            let paths = (0..k)
                .map(|_| {
                    PathComponent::new(
                        Complex64::from_polar(rng.random_range(0.2..1.0), rng.random_range(-PI..PI)),
                        rng.random_range(-PI..PI),
                    )
                })
                .collect();
            let h = synthesize_channel(&SparseChannel::new(ula(n), paths));
            let (w, _) = best_single_beam_gain(&h).unwrap();
            assert!(beamforming_loss_db(&h, w).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn oracle_agrees_with_brute_force_on_random_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(8..33);
            let k = rng.random_range(1..=4);
            let paths = (0..k)
                .map(|_| {
                    PathComponent::new(
                        Complex64::from_polar(rng.random_range(0.2..1.0), rng.random_range(-PI..PI)),
                        rng.random_range(-PI..PI),
                    )
                })
                .collect();
            let h = synthesize_channel(&SparseChannel::new(ula(n), paths));
            let (_, g) = best_single_beam_gain(&h).unwrap();
            let brute = brute_force_gain(&h, 1_000_000);
            assert!((g - brute).abs() / brute < 1e-4, "{g} vs {brute}");
        }
    }

    #[test]
    fn mrt_loss_single_path_is_zero() {
        let h = steering_vector(&ula(16), -2.0);
        assert!(mrt_loss_db(&h, -2.0).unwrap() < 1e-9);
    }

    proptest! {
        #[test]
        fn synthesis_is_homogeneous(re in -2.0f64..2.0, im in -2.0f64..2.0, w1 in -PI..PI, w2 in -PI..PI) {
            let arr = ula(12);
            let ch = SparseChannel::new(arr, vec![
                PathComponent::new(c(0.3, 0.1), w1),
                PathComponent::new(c(-0.7, 0.4), w2),
            ]);
            let s = c(re, im);
            let lhs = synthesize_channel(&ch.scaled(s));
            let rhs: Vec<_> = synthesize_channel(&ch).into_iter().map(|x| x * s).collect();
            for (a, b) in lhs.iter().zip(&rhs) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }

        #[test]
        fn loss_is_non_negative(w0 in -PI..PI, w in -PI..PI) {
            let h = steering_vector(&ula(10), w0);
            prop_assert!(beamforming_loss_db(&h, w).unwrap() >= 0.0);
        }

        #[test]
        fn steering_entries_unit_modulus(n in 2usize..200, w in -PI..PI) {
            let a = steering(n, w);
            prop_assert!(a.iter().all(|x| (x.norm() - 1.0).abs() < 1e-12));
        }
    }
}
