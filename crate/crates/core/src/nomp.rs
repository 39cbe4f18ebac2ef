//! Newtonized orthogonal matching pursuit over a continuum of spatial
//! frequencies.
//!
//! Atoms are `f(ω) = A a(ω)` for a compressive matrix `A`. Each iteration
//! detects the strongest atom in the residual on an oversampled grid
//! (`G_r(ω) = |f(ω)ᴴ y_r|² / ‖f(ω)‖²`), polishes its frequency with Newton
//! steps on `G_r`, and then cyclically re-refines every path found so far
//! with a joint least-squares amplitude fit after each move.
//!
//! Amplitudes use the least-squares normalization `α = f ᴴ y / ‖f‖²` and
//! residuals subtract `α f(ω)`, so every subtraction is an orthogonal
//! projection and the residual energy never increases.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Duration;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::channel::{polish_beam, wrap_phase, freq_distance};
use crate::error::{Error, Result};
use crate::linalg::{checked_cholesky, dot_h, mat_h_vec, norm_sqr, CMatrix};
use crate::phase_retrieval::WfResult;

const TWO_PI: f64 = 2.0 * PI;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "k")]
pub enum StopMode {
    /// Extract exactly this many paths.
    KnownK(usize),
    /// Stop once `‖y_r‖² / ‖y‖² < tau_rel` (or `max_paths` is reached).
    ResidualThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NompOptions {
    pub grid_oversampling: usize,
    pub newton_steps_per_detection: usize,
    pub cyclic_rounds: usize,
    pub stop_mode: StopMode,
    pub tau_rel: f64,
    pub max_paths: usize,
}

impl Default for NompOptions {
    fn default() -> Self {
        Self {
            grid_oversampling: 4,
            newton_steps_per_detection: 3,
            cyclic_rounds: 3,
            stop_mode: StopMode::ResidualThreshold,
            tau_rel: 1e-3,
            max_paths: 8,
        }
    }
}

impl NompOptions {
    pub fn known_k(k: usize) -> Self {
        Self {
            stop_mode: StopMode::KnownK(k),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_oversampling < 2 {
            return Err(Error::Config("grid_oversampling must be >= 2".into()));
        }
        if self.cyclic_rounds < 1 {
            return Err(Error::Config("cyclic_rounds must be >= 1".into()));
        }
        if !(self.tau_rel > 0.0 && self.tau_rel < 1.0) {
            return Err(Error::Config(format!("tau_rel {} not in (0, 1)", self.tau_rel)));
        }
        if self.max_paths == 0 {
            return Err(Error::Config("max_paths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedPath {
    pub amplitude: Complex64,
    pub spatial_freq: f64,
    pub detection_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    /// Sorted by `|amplitude|`, strongest first.
    pub paths: Vec<EstimatedPath>,
    pub residual_energy_rel: f64,
    pub stage1: Option<WfResult>,
    pub elapsed: Duration,
    /// Relative residual energy after every detection and every cyclic pass.
    #[serde(skip)]
    pub residual_history: Vec<f64>,
}

impl EstimateResult {
    pub fn empty() -> Self {
        Self {
            paths: Vec::new(),
            residual_energy_rel: 1.0,
            stage1: None,
            elapsed: Duration::ZERO,
            residual_history: Vec::new(),
        }
    }

    /// `ĥ = Σ α̂_k a(ω̂_k)` on an `n`-element array.
    pub fn channel_estimate(&self, n: usize) -> Vec<Complex64> {
        let mut h = vec![ZERO; n];
        for p in &self.paths {
            for (i, hi) in h.iter_mut().enumerate() {
                *hi += p.amplitude * Complex64::from_polar(1.0, (i + 1) as f64 * p.spatial_freq);
            }
        }
        h
    }

    /// Direction the transmitter steers toward: the single-beam gain maximum
    /// of the reconstructed channel, searched locally around each estimated
    /// path. `None` when nothing was estimated.
    pub fn steering_direction(&self, n: usize) -> Option<f64> {
        if self.paths.is_empty() {
            return None;
        }
        let h_hat = self.channel_estimate(n);
        self.paths
            .iter()
            .map(|p| polish_beam(&h_hat, p.spatial_freq, 20))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(w, _)| w)
    }
}

/// Atom generator `f(ω) = A a(ω)` with an FFT-backed grid search.
#[derive(Clone)]
pub struct Dictionary {
    a: CMatrix,
    grid_len: usize,
    /// `‖f(ω_g)‖²` on the grid.
    grid_energy: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dictionary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dictionary")
            .field("rows", &self.a.nrows())
            .field("n", &self.a.ncols())
            .field("grid_len", &self.grid_len)
            .finish()
    }
}

/// `(-1)^n` for the 1-based element index `n`.
#[inline]
fn alternating(n: usize) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl Dictionary {
    /// Grid `ω_g = -π + 2πg/(γN)`, `g = 0..γN`.
    pub fn new(a: CMatrix, oversampling: usize) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidInput("empty dictionary matrix".into()));
        }
        if oversampling < 2 {
            return Err(Error::Config("grid_oversampling must be >= 2".into()));
        }
        let n = a.ncols();
        let grid_len = oversampling * n;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(grid_len);
        let ifft = planner.plan_fft_inverse(grid_len);

        // f_m(ω_g) = Σ_n A_mn (-1)^n e^{+j2πng/L}
        let mut grid_energy = vec![0.0; grid_len];
        let mut buf = vec![ZERO; grid_len];
        for row in a.row_iter() {
            buf.iter_mut().for_each(|x| *x = ZERO);
            for (i, &v) in row.iter().enumerate() {
                buf[i + 1] = v * alternating(i + 1);
            }
            ifft.process(&mut buf);
            for (e, x) in grid_energy.iter_mut().zip(&buf) {
                *e += x.norm_sqr();
            }
        }
        Ok(Self {
            a,
            grid_len,
            grid_energy,
            fft,
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.a
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn grid_freq(&self, g: usize) -> f64 {
        -PI + TWO_PI * g as f64 / self.grid_len as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.grid_len).map(|g| self.grid_freq(g)).collect()
    }

    /// `f(ω) = A a(ω)`
    pub fn response(&self, omega: f64) -> Vec<Complex64> {
        let rows = self.a.nrows();
        let mut f = vec![ZERO; rows];
        for (i, col) in self.a.as_slice().chunks_exact(rows).enumerate() {
            let p = Complex64::from_polar(1.0, (i + 1) as f64 * omega);
            for (fm, &am) in f.iter_mut().zip(col) {
                *fm += am * p;
            }
        }
        f
    }

    /// `(f, f', f'')` with `f'(ω) = A (j diag(1..N) a(ω))`.
    pub fn response_derivs(&self, omega: f64) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
        let rows = self.a.nrows();
        let mut f = vec![ZERO; rows];
        let mut df = vec![ZERO; rows];
        let mut ddf = vec![ZERO; rows];
        for (i, col) in self.a.as_slice().chunks_exact(rows).enumerate() {
            let n = (i + 1) as f64;
            let p = Complex64::from_polar(1.0, n * omega);
            let dp = Complex64::new(0.0, n) * p;
            let ddp = -(n * n) * p;
            for (((fm, dfm), ddfm), &am) in f.iter_mut().zip(df.iter_mut()).zip(ddf.iter_mut()).zip(col) {
                *fm += am * p;
                *dfm += am * dp;
                *ddfm += am * ddp;
            }
        }
        (f, df, ddf)
    }

    /// `f(ω_g)ᴴ y` for every grid point.
    pub fn correlate_grid(&self, y: &[Complex64]) -> Vec<Complex64> {
        // f(ω_g)ᴴ y = Σ_n (Aᴴy)_n (-1)^n e^{-j2πng/L}
        let b = mat_h_vec(&self.a, y);
        let mut buf = vec![ZERO; self.grid_len];
        for (i, &v) in b.iter().enumerate() {
            buf[i + 1] = v * alternating(i + 1);
        }
        self.fft.process(&mut buf);
        buf
    }

    /// `‖f(ω_g)‖²` on the grid.
    pub fn grid_energy(&self) -> &[f64] {
        &self.grid_energy
    }
}

/// `f(ω) = A a(ω)` for an arbitrary matrix.
pub fn dictionary_response(a: &CMatrix, omega: f64) -> Vec<Complex64> {
    let rows = a.nrows();
    let mut f = vec![ZERO; rows];
    for (i, col) in a.as_slice().chunks_exact(rows).enumerate() {
        let p = Complex64::from_polar(1.0, (i + 1) as f64 * omega);
        for (fm, &am) in f.iter_mut().zip(col) {
            *fm += am * p;
        }
    }
    f
}

/// `f'(ω) = A (j diag(1..N) a(ω))`
pub fn dictionary_derivative(a: &CMatrix, omega: f64) -> Vec<Complex64> {
    let rows = a.nrows();
    let mut f = vec![ZERO; rows];
    for (i, col) in a.as_slice().chunks_exact(rows).enumerate() {
        let n = (i + 1) as f64;
        let p = Complex64::new(0.0, n) * Complex64::from_polar(1.0, n * omega);
        for (fm, &am) in f.iter_mut().zip(col) {
            *fm += am * p;
        }
    }
    f
}

/// `G_r(ω) = |f(ω)ᴴ y_r|² / ‖f(ω)‖²` and the least-squares amplitude.
fn matched(f: &[Complex64], y_r: &[Complex64]) -> (f64, Complex64) {
    let energy = norm_sqr(f);
    if energy == 0.0 {
        return (0.0, ZERO);
    }
    let u = dot_h(f, y_r);
    (u.norm_sqr() / energy, u / energy)
}

/// `G_r`, `dG_r/dω` and `d²G_r/dω²` at `omega`.
pub fn g_derivatives(dict: &Dictionary, y_r: &[Complex64], omega: f64) -> (f64, f64, f64) {
    let (f, df, ddf) = dict.response_derivs(omega);
    let u = dot_h(&f, y_r);
    let du = dot_h(&df, y_r);
    let ddu = dot_h(&ddf, y_r);
    let nu = norm_sqr(&f);
    let dnu = 2.0 * dot_h(&f, &df).re;
    let ddnu = 2.0 * dot_h(&f, &ddf).re + 2.0 * norm_sqr(&df);
    let p = u.norm_sqr();
    let dp = 2.0 * (u.conj() * du).re;
    let ddp = 2.0 * du.norm_sqr() + 2.0 * (u.conj() * ddu).re;

    let g = p / nu;
    let dg = (dp * nu - p * dnu) / (nu * nu);
    let ddg = (ddp * nu - p * ddnu) / (nu * nu) - 2.0 * dnu * (dp * nu - p * dnu) / (nu * nu * nu);
    (g, dg, ddg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub omega: f64,
    pub alpha: Complex64,
    pub g_value: f64,
    pub grid_index: usize,
}

/// Grid argmax of `G_r`; ties go to the smallest frequency. `None` for a zero
/// residual.
pub fn detect_on_grid(dict: &Dictionary, y_r: &[Complex64]) -> Option<Detection> {
    if norm_sqr(y_r) == 0.0 {
        return None;
    }
    let corr = dict.correlate_grid(y_r);
    let mut best: Option<(usize, f64)> = None;
    for (g, (c, &e)) in corr.iter().zip(dict.grid_energy()).enumerate() {
        if e <= 0.0 {
            continue;
        }
        let value = c.norm_sqr() / e;
        if best.map_or(true, |(_, b)| value > b) {
            best = Some((g, value));
        }
    }
    let (g, _) = best?;
    let omega = dict.grid_freq(g);
    let (g_value, alpha) = matched(&dict.response(omega), y_r);
    Some(Detection {
        omega,
        alpha,
        g_value,
        grid_index: g,
    })
}

/// Argmax of `G_r` over an arbitrary frequency list, by direct evaluation.
/// Ties go to the smallest frequency.
pub fn detect_on_frequencies(dict: &Dictionary, y_r: &[Complex64], freqs: &[f64]) -> Option<Detection> {
    if norm_sqr(y_r) == 0.0 || freqs.is_empty() {
        return None;
    }
    let mut order: Vec<usize> = (0..freqs.len()).collect();
    order.sort_by(|&a, &b| freqs[a].total_cmp(&freqs[b]));
    let mut best: Option<Detection> = None;
    for g in order {
        let (g_value, alpha) = matched(&dict.response(freqs[g]), y_r);
        if best.map_or(true, |b| g_value > b.g_value) {
            best = Some(Detection {
                omega: freqs[g],
                alpha,
                g_value,
                grid_index: g,
            });
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStep {
    pub omega: f64,
    pub alpha: Complex64,
    pub accepted: bool,
    pub g_before: f64,
    pub g_after: f64,
}

/// One guarded Newton step on `G_r`: taken only where `G_r` is locally
/// concave and only if it increases `G_r`. The amplitude is re-fit at the
/// resulting frequency either way.
pub fn refine_newton(dict: &Dictionary, y_r: &[Complex64], omega: f64, _alpha: Complex64) -> NewtonStep {
    let (g, dg, ddg) = g_derivatives(dict, y_r, omega);
    if ddg < 0.0 {
        let cand = wrap_phase(omega - dg / ddg);
        let (g_new, alpha_new) = matched(&dict.response(cand), y_r);
        if g_new > g {
            return NewtonStep {
                omega: cand,
                alpha: alpha_new,
                accepted: true,
                g_before: g,
                g_after: g_new,
            };
        }
    }
    let (_, alpha) = matched(&dict.response(omega), y_r);
    NewtonStep {
        omega,
        alpha,
        accepted: false,
        g_before: g,
        g_after: g,
    }
}

/// Least-squares amplitudes for fixed atoms, via the normal equations.
fn fit_atoms(atoms: &[Vec<Complex64>], y: &[Complex64]) -> Result<Vec<Complex64>> {
    let k = atoms.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    if k > y.len() {
        return Err(Error::Collision { first: 0, second: k - 1 });
    }
    let gram = CMatrix::from_fn(k, k, |i, j| dot_h(&atoms[i], &atoms[j]));
    let rhs = nalgebra::DVector::from_iterator(k, atoms.iter().map(|f| dot_h(f, y)));
    let chol = checked_cholesky(&gram).map_err(|_| {
        // Report the most collinear pair.
        let mut worst = (0, 1.min(k - 1), -1.0);
        for i in 0..k {
            for j in (i + 1)..k {
                let c = gram[(i, j)].norm() / (gram[(i, i)].re * gram[(j, j)].re).sqrt();
                if c > worst.2 {
                    worst = (i, j, c);
                }
            }
        }
        Error::Collision {
            first: worst.0,
            second: worst.1,
        }
    })?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// `argmin_α ‖y - F α‖` with `F = [f(ω_1) ... f(ω_k)]`.
pub fn fit_amplitudes_ls(dict: &Dictionary, y: &[Complex64], omegas: &[f64]) -> Result<Vec<Complex64>> {
    let atoms: Vec<_> = omegas.iter().map(|&w| dict.response(w)).collect();
    fit_atoms(&atoms, y)
}

#[derive(Debug, Clone)]
struct Atom {
    omega: f64,
    alpha: Complex64,
    f: Vec<Complex64>,
    order: usize,
}

impl Atom {
    fn new(dict: &Dictionary, omega: f64, alpha: Complex64, order: usize) -> Self {
        Self {
            omega,
            alpha,
            f: dict.response(omega),
            order,
        }
    }

    fn to_path(&self) -> EstimatedPath {
        EstimatedPath {
            amplitude: self.alpha,
            spatial_freq: self.omega,
            detection_order: self.order,
        }
    }
}

fn residual(y: &[Complex64], atoms: &[Atom], skip: Option<usize>) -> Vec<Complex64> {
    let mut r = y.to_vec();
    for (i, atom) in atoms.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        for (ri, fi) in r.iter_mut().zip(&atom.f) {
            *ri -= atom.alpha * fi;
        }
    }
    r
}

fn residual_energy(y: &[Complex64], atoms: &[Atom]) -> f64 {
    norm_sqr(&residual(y, atoms, None))
}

/// Joint LS re-fit of all amplitudes.
fn refit(y: &[Complex64], atoms: &mut [Atom]) -> Result<()> {
    let fs: Vec<_> = atoms.iter().map(|a| a.f.clone()).collect();
    let alphas = fit_atoms(&fs, y)?;
    for (atom, alpha) in atoms.iter_mut().zip(alphas) {
        atom.alpha = alpha;
    }
    Ok(())
}

/// Merges atoms closer than `min_gap`: the stronger frequency is kept and
/// the amplitudes are summed. Returns whether anything merged.
fn merge_close(dict: &Dictionary, atoms: &mut Vec<Atom>, min_gap: f64) -> bool {
    let mut merged = false;
    'outer: loop {
        for i in 0..atoms.len() {
            for j in (i + 1)..atoms.len() {
                if freq_distance(atoms[i].omega, atoms[j].omega) < min_gap {
                    let (keep, drop) = if atoms[i].alpha.norm() >= atoms[j].alpha.norm() { (i, j) } else { (j, i) };
                    let alpha = atoms[i].alpha + atoms[j].alpha;
                    let order = atoms[i].order.min(atoms[j].order);
                    let omega = atoms[keep].omega;
                    atoms[keep] = Atom::new(dict, omega, alpha, order);
                    atoms.remove(drop);
                    merged = true;
                    continue 'outer;
                }
            }
        }
        return merged;
    }
}

fn merge_gap(dict: &Dictionary) -> f64 {
    TWO_PI / dict.n() as f64 / 8.0
}

/// Cyclic passes over `atoms`; returns residual energy after each pass.
fn cyclic_passes(dict: &Dictionary, y: &[Complex64], atoms: &mut Vec<Atom>, rounds: usize) -> Result<Vec<f64>> {
    let mut history = Vec::with_capacity(rounds);
    let mut energy = residual_energy(y, atoms);
    for _ in 0..rounds {
        let mut i = 0;
        while i < atoms.len() {
            let snapshot = atoms.clone();
            let y_r = residual(y, atoms, Some(i));
            let step = refine_newton(dict, &y_r, atoms[i].omega, atoms[i].alpha);
            if step.accepted {
                atoms[i] = Atom::new(dict, step.omega, step.alpha, atoms[i].order);
                merge_close(dict, atoms, merge_gap(dict));
                refit(y, atoms)?;
                let e = residual_energy(y, atoms);
                if e > energy {
                    // Round-off or a merge made things worse; keep the old state.
                    *atoms = snapshot;
                } else {
                    energy = e;
                }
            }
            i += 1;
        }
        history.push(energy);
    }
    Ok(history)
}

/// Cyclic Newton refinement of every path followed by joint amplitude fits.
/// Returns the refined paths and the residual energy after each pass.
pub fn refine_cyclic(
    dict: &Dictionary,
    y: &[Complex64],
    paths: &[EstimatedPath],
    rounds: usize,
) -> Result<(Vec<EstimatedPath>, Vec<f64>)> {
    let mut atoms: Vec<Atom> = paths
        .iter()
        .map(|p| Atom::new(dict, p.spatial_freq, p.amplitude, p.detection_order))
        .collect();
    atoms.sort_by_key(|a| a.order);
    let history = cyclic_passes(dict, y, &mut atoms, rounds)?;
    Ok((atoms.iter().map(Atom::to_path).collect(), history))
}

/// Full greedy extraction loop.
pub fn extract_paths(y: &[Complex64], dict: &Dictionary, opts: &NompOptions) -> Result<EstimateResult> {
    opts.validate()?;
    if y.len() != dict.rows() {
        return Err(Error::dims(dict.rows(), y.len()));
    }
    let start = std::time::Instant::now();
    let y_energy = norm_sqr(y);
    if !(y_energy > 0.0) {
        return Ok(EstimateResult {
            elapsed: start.elapsed(),
            ..EstimateResult::empty()
        });
    }

    let cap = match opts.stop_mode {
        StopMode::KnownK(k) => k.min(dict.rows()),
        StopMode::ResidualThreshold => opts.max_paths.min(dict.rows()),
    };
    let mut atoms: Vec<Atom> = Vec::new();
    let mut history = Vec::new();
    let mut energy = y_energy;
    let mut next_order = 0;

    for _ in 0..(2 * cap + 2) {
        let done = match opts.stop_mode {
            StopMode::KnownK(_) => atoms.len() >= cap,
            StopMode::ResidualThreshold => atoms.len() >= cap || energy / y_energy < opts.tau_rel,
        };
        if done {
            break;
        }
        let y_r = residual(y, &atoms, None);
        let Some(det) = detect_on_grid(dict, &y_r) else { break };
        if det.g_value <= 0.0 {
            break;
        }
        let (mut omega, mut alpha) = (det.omega, det.alpha);
        for _ in 0..opts.newton_steps_per_detection {
            let step = refine_newton(dict, &y_r, omega, alpha);
            omega = step.omega;
            alpha = step.alpha;
            if !step.accepted {
                break;
            }
        }

        let snapshot = atoms.clone();
        atoms.push(Atom::new(dict, omega, alpha, next_order));
        next_order += 1;
        merge_close(dict, &mut atoms, merge_gap(dict));
        match refit(y, &mut atoms) {
            Ok(()) => {}
            Err(Error::Collision { .. }) => {
                atoms = snapshot;
                break;
            }
            Err(e) => return Err(e),
        }
        let e = residual_energy(y, &atoms);
        if e > energy {
            atoms = snapshot;
            break;
        }
        energy = e;
        history.push(energy / y_energy);

        let passes = cyclic_passes(dict, y, &mut atoms, opts.cyclic_rounds)?;
        if let Some(&last) = passes.last() {
            energy = last;
        }
        history.extend(passes.iter().map(|e| e / y_energy));
    }

    let mut paths: Vec<EstimatedPath> = atoms.iter().map(Atom::to_path).collect();
    paths.sort_by(|a, b| {
        b.amplitude
            .norm()
            .total_cmp(&a.amplitude.norm())
            .then(a.detection_order.cmp(&b.detection_order))
    });
    Ok(EstimateResult {
        paths,
        residual_energy_rel: energy / y_energy,
        stage1: None,
        elapsed: start.elapsed(),
        residual_history: history,
    })
}
