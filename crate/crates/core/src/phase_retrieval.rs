//! Wirtinger Flow phase retrieval.
//!
//! Recovers `z ∈ C^{M_CS}` up to a global phase from `y_b = |r_b z|²`, where
//! `r_b` is row `b` of `A_PR` (no conjugation). The loss is
//! `f(z) = (1/2M) Σ_b (|r_b z|² - y_b)²`; the iteration is a spectral
//! initialization followed by gradient steps of size `μ_t / ‖z₀‖²` with
//! `μ_t = min(1 - e^{-t/t₀}, μ_max)`. A step that would increase `f` is halved
//! up to ten times, so accepted steps never increase the objective.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot_h, mat_h_vec_into, mat_vec_into, norm, norm_sqr, CMatrix};
use crate::sensing::RssMeasurements;

const MAX_HALVINGS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WfOptions {
    pub max_iters: usize,
    pub step_scale_max: f64,
    pub step_warmup: f64,
    /// Stop once `‖∇f‖ / ‖z‖³` drops below this.
    pub grad_tol: f64,
    pub init_power_iters: usize,
}

impl Default for WfOptions {
    fn default() -> Self {
        Self {
            max_iters: 2500,
            step_scale_max: 0.2,
            step_warmup: 330.0,
            grad_tol: 1e-8,
            init_power_iters: 100,
        }
    }
}

impl WfOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0
            || self.init_power_iters == 0
            || !(self.step_scale_max > 0.0)
            || !(self.step_warmup > 0.0)
            || !(self.grad_tol > 0.0)
        {
            return Err(Error::Config(format!("Wirtinger Flow options must be positive: {self:?}")));
        }
        Ok(())
    }

    fn step_scale(&self, t: usize) -> f64 {
        (1.0 - (-(t as f64) / self.step_warmup).exp()).min(self.step_scale_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfResult {
    pub estimate: Vec<Complex64>,
    pub iterations_used: usize,
    pub final_objective: f64,
    pub converged: bool,
    /// Objective after every accepted iteration, starting with `f(z₀)`.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

/// Spectral initialization output.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInit {
    pub z0: Vec<Complex64>,
    /// All measurements were zero; `z0` is the zero vector.
    pub degenerate: bool,
}

fn check_dims(a_pr: &CMatrix, y: &RssMeasurements) -> Result<()> {
    if a_pr.nrows() != y.len() {
        return Err(Error::dims(format!("{} measurements", a_pr.nrows()), y.len()));
    }
    if a_pr.ncols() == 0 {
        return Err(Error::InvalidInput("empty phase-retrieval matrix".into()));
    }
    Ok(())
}

/// Leading eigenvector of `(1/M) Σ_b y_b r_bᴴ r_b` by power iteration from the
/// normalized all-ones vector, scaled to `λ² = M_CS Σ y_b / Σ ‖r_b‖²`.
pub fn spectral_initialize(a_pr: &CMatrix, y: &RssMeasurements, opts: &WfOptions) -> Result<SpectralInit> {
    check_dims(a_pr, y)?;
    let (m, k) = a_pr.shape();
    let total: f64 = y.values.iter().sum();
    if !(total > 0.0) {
        return Ok(SpectralInit {
            z0: vec![Complex64::new(0.0, 0.0); k],
            degenerate: true,
        });
    }

    // Y v = (1/M) Aᴴ (y ∘ A v)
    let mut v = vec![Complex64::new(1.0 / (k as f64).sqrt(), 0.0); k];
    let mut av = vec![Complex64::new(0.0, 0.0); m];
    let mut next = vec![Complex64::new(0.0, 0.0); k];
    for _ in 0..opts.init_power_iters {
        mat_vec_into(a_pr, &v, &mut av);
        for (x, &yb) in av.iter_mut().zip(&y.values) {
            *x *= yb / m as f64;
        }
        mat_h_vec_into(a_pr, &av, &mut next);
        let nrm = norm(&next);
        if nrm == 0.0 {
            break;
        }
        for (vi, ni) in v.iter_mut().zip(&next) {
            *vi = ni / nrm;
        }
    }

    let row_energy: f64 = a_pr.iter().map(|x| x.norm_sqr()).sum();
    let lambda = (k as f64 * total / row_energy).sqrt();
    Ok(SpectralInit {
        z0: v.into_iter().map(|x| x * lambda).collect(),
        degenerate: false,
    })
}

/// Workspace for repeated objective/gradient evaluations.
struct Evaluator<'a> {
    a: &'a CMatrix,
    y: &'a [f64],
    az: Vec<Complex64>,
    weighted: Vec<Complex64>,
}

impl<'a> Evaluator<'a> {
    fn new(a: &'a CMatrix, y: &'a [f64]) -> Self {
        Self {
            a,
            y,
            az: vec![Complex64::new(0.0, 0.0); a.nrows()],
            weighted: vec![Complex64::new(0.0, 0.0); a.nrows()],
        }
    }

    /// Objective at `z`; leaves `A z` in `self.az`.
    fn objective(&mut self, z: &[Complex64]) -> f64 {
        mat_vec_into(self.a, z, &mut self.az);
        let m = self.y.len() as f64;
        self.az
            .iter()
            .zip(self.y)
            .map(|(u, &yb)| (u.norm_sqr() - yb).powi(2))
            .sum::<f64>()
            / (2.0 * m)
    }

    /// Gradient from the `A z` cached by the last `objective` call.
    fn gradient_cached(&mut self, out: &mut [Complex64]) {
        let m = self.y.len() as f64;
        for ((w, u), &yb) in self.weighted.iter_mut().zip(&self.az).zip(self.y) {
            *w = u * ((u.norm_sqr() - yb) / m);
        }
        mat_h_vec_into(self.a, &self.weighted, out);
    }
}

/// `f(z) = (1/2M) Σ_b (|r_b z|² - y_b)²`
pub fn wf_objective(a_pr: &CMatrix, y: &RssMeasurements, z: &[Complex64]) -> Result<f64> {
    check_dims(a_pr, y)?;
    if z.len() != a_pr.ncols() {
        return Err(Error::dims(a_pr.ncols(), z.len()));
    }
    Ok(Evaluator::new(a_pr, &y.values).objective(z))
}

/// Wirtinger gradient `∂f/∂z̄ = (1/M) Σ_b (|r_b z|² - y_b) (r_b z) r_bᴴ`.
///
/// With `z = x + j v`, `∂f/∂x + j ∂f/∂v` equals twice this value.
pub fn wf_gradient(a_pr: &CMatrix, y: &RssMeasurements, z: &[Complex64]) -> Result<Vec<Complex64>> {
    check_dims(a_pr, y)?;
    if z.len() != a_pr.ncols() {
        return Err(Error::dims(a_pr.ncols(), z.len()));
    }
    let mut eval = Evaluator::new(a_pr, &y.values);
    eval.objective(z);
    let mut g = vec![Complex64::new(0.0, 0.0); z.len()];
    eval.gradient_cached(&mut g);
    Ok(g)
}

/// Spectral initialization followed by Wirtinger Flow iterations.
pub fn wirtinger_flow(a_pr: &CMatrix, y: &RssMeasurements, opts: &WfOptions) -> Result<WfResult> {
    opts.validate()?;
    let init = spectral_initialize(a_pr, y, opts)?;
    if init.degenerate {
        return Ok(WfResult {
            estimate: init.z0,
            iterations_used: 0,
            final_objective: wf_objective(a_pr, y, &vec![Complex64::new(0.0, 0.0); a_pr.ncols()])?,
            converged: false,
            objective_trace: Vec::new(),
        });
    }
    wirtinger_flow_from(a_pr, y, init.z0, opts)
}

/// Wirtinger Flow from a caller-supplied starting point.
pub fn wirtinger_flow_from(
    a_pr: &CMatrix,
    y: &RssMeasurements,
    z0: Vec<Complex64>,
    opts: &WfOptions,
) -> Result<WfResult> {
    opts.validate()?;
    check_dims(a_pr, y)?;
    if z0.len() != a_pr.ncols() {
        return Err(Error::dims(a_pr.ncols(), z0.len()));
    }
    let k = z0.len();
    let z0_energy = norm_sqr(&z0);
    let mut eval = Evaluator::new(a_pr, &y.values);
    let mut f = eval.objective(&z0);
    if !(z0_energy > 0.0) {
        return Ok(WfResult {
            estimate: z0,
            iterations_used: 0,
            final_objective: f,
            converged: false,
            objective_trace: vec![f],
        });
    }

    let mut z = z0;
    let mut grad = vec![Complex64::new(0.0, 0.0); k];
    let mut cand = vec![Complex64::new(0.0, 0.0); k];
    let mut trace = Vec::with_capacity(opts.max_iters.min(4096) + 1);
    trace.push(f);
    eval.gradient_cached(&mut grad);

    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=opts.max_iters {
        let scale = norm_sqr(&z).sqrt().powi(3);
        if norm(&grad) <= opts.grad_tol * scale {
            converged = true;
            break;
        }
        let mut step = opts.step_scale(t) / z0_energy;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            for ((c, zi), gi) in cand.iter_mut().zip(&z).zip(&grad) {
                *c = zi - gi * step;
            }
            let fc = eval.objective(&cand);
            if fc <= f {
                f = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations = t;
        if !accepted {
            // Stalled: no tried step decreases f. Counted as converged only
            // if the gradient is already small.
            converged = norm(&grad) <= opts.grad_tol.sqrt() * scale;
            break;
        }
        std::mem::swap(&mut z, &mut cand);
        trace.push(f);
        eval.gradient_cached(&mut grad);
    }

    Ok(WfResult {
        estimate: z,
        iterations_used: iterations,
        final_objective: f,
        converged,
        objective_trace: trace,
    })
}

/// `min_φ ‖ẑ - e^{jφ} z‖ = sqrt(‖ẑ‖² + ‖z‖² - 2|⟨ẑ, z⟩|)`
pub fn phase_aligned_distance(z_hat: &[Complex64], z_ref: &[Complex64]) -> f64 {
    assert_eq!(z_hat.len(), z_ref.len(), "phase_aligned_distance: length mismatch");
    let d2 = norm_sqr(z_hat) + norm_sqr(z_ref) - 2.0 * dot_h(z_hat, z_ref).norm();
    d2.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::sample_gaussian_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_vec(k: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..k)
            .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect()
    }

    /// Gaussian `A_PR` with unit-variance entries and noiseless RSS of a random target.
    fn instance(m: usize, k: usize, seed: u64) -> (CMatrix, Vec<Complex64>, RssMeasurements) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = sample_gaussian_matrix(m, k, &mut rng) * c((k as f64).sqrt(), 0.0);
        let z = random_vec(k, &mut rng);
        let y = rss_of(&a, &z);
        (a, z, y)
    }

    fn rss_of(a: &CMatrix, z: &[Complex64]) -> RssMeasurements {
        let mut az = vec![c(0.0, 0.0); a.nrows()];
        mat_vec_into(a, z, &mut az);
        RssMeasurements::new(az.iter().map(|u| u.norm_sqr()).collect()).unwrap()
    }

    fn rel_err(z_hat: &[Complex64], z: &[Complex64]) -> f64 {
        phase_aligned_distance(z_hat, z) / norm(z)
    }

    #[test]
    fn spectral_init_zero_measurements() {
        let (a, _, _) = instance(32, 4, 0);
        let y = RssMeasurements::new(vec![0.0; 32]).unwrap();
        let init = spectral_initialize(&a, &y, &WfOptions::default()).unwrap();
        assert!(init.degenerate);
        assert!(init.z0.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn spectral_init_scalar_case() {
        let (a, _, y) = instance(20, 1, 1);
        let init = spectral_initialize(&a, &y, &WfOptions::default()).unwrap();
        let expect = y.values.iter().sum::<f64>() / a.iter().map(|x| x.norm_sqr()).sum::<f64>();
        assert!((init.z0[0].norm_sqr() - expect).abs() < 1e-12 * expect);
        assert!(init.z0[0].im.abs() < 1e-15 && init.z0[0].re > 0.0);
    }

    #[test]
    fn spectral_init_correlates_with_truth() {
        let (a, z, y) = instance(256, 8, 2);
        let init = spectral_initialize(&a, &y, &WfOptions::default()).unwrap();
        let corr = dot_h(&init.z0, &z).norm() / (norm(&init.z0) * norm(&z));
        assert!(corr >= 0.8, "{corr}");
    }

    #[test]
    fn gradient_vanishes_at_solution_and_origin() {
        let (a, z, y) = instance(40, 4, 3);
        let g = wf_gradient(&a, &y, &z).unwrap();
        let scale = norm(&z).powi(3);
        assert!(norm(&g) < 1e-12 * scale);
        let g0 = wf_gradient(&a, &y, &[c(0.0, 0.0); 4]).unwrap();
        assert!(norm(&g0) == 0.0);
    }

    /// `∂f/∂x + j ∂f/∂v` by central differences equals `2 ∂f/∂z̄`.
    fn finite_difference_check(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(1..=6);
        let (a, _, y) = instance(6 * k, k, seed + 1000);
        let z = random_vec(k, &mut rng);
        let g = wf_gradient(&a, &y, &z).unwrap();
        let h = 1e-6;
        let mut fd = vec![c(0.0, 0.0); k];
        for i in 0..k {
            for (dir, unit) in [(0, c(1.0, 0.0)), (1, c(0.0, 1.0))] {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += unit * h;
                zm[i] -= unit * h;
                let d = (wf_objective(&a, &y, &zp).unwrap() - wf_objective(&a, &y, &zm).unwrap()) / (2.0 * h);
                if dir == 0 {
                    fd[i].re = d;
                } else {
                    fd[i].im = d;
                }
            }
        }
        let g2: Vec<_> = g.iter().map(|x| x * 2.0).collect();
        let diff: Vec<_> = g2.iter().zip(&fd).map(|(p, q)| p - q).collect();
        assert!(norm(&diff) <= 1e-5 * norm(&g2), "seed {seed}: {} vs {}", norm(&diff), norm(&g2));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            finite_difference_check(seed);
        }
    }

    #[test]
    fn recovers_noiseless_targets() {
        let mut successes = 0;
        for seed in 0..100 {
            let (a, z, y) = instance(128, 8, 500 + seed);
            let res = wirtinger_flow(&a, &y, &WfOptions::default()).unwrap();
            assert!(res.iterations_used <= 2500);
            if rel_err(&res.estimate, &z) <= 1e-3 {
                successes += 1;
                let fit = rss_of(&a, &res.estimate);
                let resid: f64 = fit.values.iter().zip(&y.values).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                let scale: f64 = y.values.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(resid <= 1e-3 * scale);
            }
        }
        assert!(successes >= 95, "{successes}/100");
    }

    #[test]
    fn objective_never_increases() {
        for seed in 0..10 {
            let (a, _, y) = instance(40, 8, 700 + seed);
            let res = wirtinger_flow(&a, &y, &WfOptions::default()).unwrap();
            assert!(res.objective_trace.windows(2).all(|w| w[1] <= w[0]), "seed {seed}");
            assert_eq!(*res.objective_trace.last().unwrap(), res.final_objective);
        }
    }

    #[test]
    fn global_phase_of_target_is_invisible() {
        let (a, z, y) = instance(64, 6, 9);
        let rot: Vec<_> = z.iter().map(|x| x * Complex64::from_polar(1.0, 0.9)).collect();
        let y_rot = rss_of(&a, &rot);
        let r1 = wirtinger_flow(&a, &y, &WfOptions::default()).unwrap();
        let r2 = wirtinger_flow(&a, &y_rot, &WfOptions::default()).unwrap();
        assert!((r1.final_objective - r2.final_objective).abs() <= 1e-9 * (1.0 + r1.final_objective));
        assert!(phase_aligned_distance(&r1.estimate, &r2.estimate) <= 1e-6 * norm(&r1.estimate));
    }

    #[test]
    fn rotated_initialization_gives_rotated_estimate() {
        let opts = WfOptions::default();
        for seed in 0..5 {
            let (a, _, y) = instance(60, 6, 40 + seed);
            let init = spectral_initialize(&a, &y, &opts).unwrap();
            let rot: Vec<_> = init.z0.iter().map(|x| x * Complex64::from_polar(1.0, -2.1)).collect();
            let r1 = wirtinger_flow_from(&a, &y, init.z0, &opts).unwrap();
            let r2 = wirtinger_flow_from(&a, &y, rot, &opts).unwrap();
            assert!(phase_aligned_distance(&r1.estimate, &r2.estimate) <= 1e-6 * norm(&r1.estimate));
        }
    }

    #[test]
    fn scaling_measurements_scales_estimate() {
        for seed in 0..5 {
            let (a, _, y) = instance(60, 5, 80 + seed);
            let r1 = wirtinger_flow(&a, &y, &WfOptions::default()).unwrap();
            let r2 = wirtinger_flow(&a, &y.scaled(9.0), &WfOptions::default()).unwrap();
            let ratio = norm(&r2.estimate) / norm(&r1.estimate);
            assert!((ratio - 3.0).abs() <= 3e-6, "{ratio}");
        }
    }

    #[test]
    fn degenerate_input_is_flagged() {
        let (a, _, _) = instance(16, 4, 0);
        let y = RssMeasurements::new(vec![0.0; 16]).unwrap();
        let res = wirtinger_flow(&a, &y, &WfOptions::default()).unwrap();
        assert!(!res.converged);
        assert!(res.estimate.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn dimension_errors() {
        let (a, _, _) = instance(16, 4, 0);
        let y = RssMeasurements::new(vec![1.0; 15]).unwrap();
        assert!(wirtinger_flow(&a, &y, &WfOptions::default()).is_err());
        let bad = WfOptions {
            max_iters: 0,
            ..WfOptions::default()
        };
        let y = RssMeasurements::new(vec![1.0; 16]).unwrap();
        assert!(wirtinger_flow(&a, &y, &bad).is_err());
    }

    #[test]
    fn aligned_distance_examples() {
        let z = vec![c(1.0, 2.0), c(-0.5, 0.1), c(0.0, -1.0)];
        let rot: Vec<_> = z.iter().map(|x| x * Complex64::from_polar(1.0, 1.3)).collect();
        assert!(phase_aligned_distance(&rot, &z) < 1e-10);
        let zero = vec![c(0.0, 0.0); 3];
        assert!((phase_aligned_distance(&zero, &z) - norm(&z)).abs() < 1e-12);
        let e1 = [c(1.0, 0.0), c(0.0, 0.0)];
        let e2 = [c(0.0, 0.0), c(1.0, 0.0)];
        assert!((phase_aligned_distance(&e1, &e2) - 2f64.sqrt()).abs() < 1e-12);
    }
}
