//! Beacon matrices and measurement synthesis.
//!
//! The physical beacon matrix only takes values in `{1, j, -1, -j}`. It is
//! produced from a virtual factorization `A_PR · A_CS`:
//!
//! 1. draw `A` i.i.d. uniform over the alphabet;
//! 2. draw `A_CS` i.i.d. `CN(0, 1/N)`;
//! 3. `A_PR = A · A_CS⁺` with `A_CS⁺ = A_CSᴴ (A_CS A_CSᴴ)⁻¹`;
//! 4. `A_final = quantize(A_PR · A_CS)`.
//!
//! The gap between `A_final` and `A_PR · A_CS` is left uncorrected; the
//! estimators see it as measurement noise. For `M_CS ≪ N` the relative
//! Frobenius mismatch sits around 0.85-0.95 (`A_PR · A_CS` has entries of
//! magnitude roughly `sqrt(M_CS/N)` while the quantized entries are unit
//! modulus), but the quantized matrix keeps a strong component along the
//! virtual product, which is what the two estimation stages rely on.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{checked_cholesky, mat_vec_into};
use crate::rng::{stream, STREAM_GAUSSIAN, STREAM_QUANTIZED};

pub use crate::linalg::CMatrix;

/// One 2-bit phase-shifter setting. The discriminant is the on-disk code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Symbol {
    One = 0,
    J = 1,
    MinusOne = 2,
    MinusJ = 3,
}

impl Symbol {
    pub const ALL: [Symbol; 4] = [Symbol::One, Symbol::J, Symbol::MinusOne, Symbol::MinusJ];

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn value(self) -> Complex64 {
        match self {
            Symbol::One => Complex64::new(1.0, 0.0),
            Symbol::J => Complex64::new(0.0, 1.0),
            Symbol::MinusOne => Complex64::new(-1.0, 0.0),
            Symbol::MinusJ => Complex64::new(0.0, -1.0),
        }
    }

    /// `self · z`, exact (a swap and/or sign flip).
    #[inline]
    pub fn rotate(self, z: Complex64) -> Complex64 {
        match self {
            Symbol::One => z,
            Symbol::J => Complex64::new(-z.im, z.re),
            Symbol::MinusOne => -z,
            Symbol::MinusJ => Complex64::new(z.im, -z.re),
        }
    }

    /// Nearest alphabet point by phase. Phases are measured in `[0, 2π)` and
    /// ties go to the smaller angle; zero maps to `1`.
    pub fn quantize(z: Complex64) -> Self {
        let mut phase = z.im.atan2(z.re);
        if phase < 0.0 {
            phase += 2.0 * std::f64::consts::PI;
        }
        let k = ((phase / FRAC_PI_2) - 0.5).ceil() as i64;
        Self::ALL[k.rem_euclid(4) as usize]
    }
}

/// Row-major matrix over the `{1, j, -1, -j}` alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedMatrix {
    rows: usize,
    cols: usize,
    symbols: Vec<Symbol>,
}

impl QuantizedMatrix {
    pub fn from_symbols(rows: usize, cols: usize, symbols: Vec<Symbol>) -> Result<Self> {
        if symbols.len() != rows * cols {
            return Err(Error::dims(rows * cols, symbols.len()));
        }
        Ok(Self { rows, cols, symbols })
    }

    pub fn from_codes(rows: usize, cols: usize, codes: &[u8]) -> Result<Self> {
        let symbols = codes
            .iter()
            .map(|&c| Symbol::from_code(c).ok_or_else(|| Error::InvalidInput(format!("bad symbol code {c}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_symbols(rows, cols, symbols)
    }

    /// Entry-wise quantization of a complex matrix.
    pub fn quantize(m: &CMatrix) -> Self {
        let (rows, cols) = m.shape();
        let symbols = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| Symbol::quantize(m[(i, j)]))
            .collect();
        Self { rows, cols, symbols }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> Symbol {
        self.symbols[i * self.cols + j]
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn codes(&self) -> Vec<u8> {
        self.symbols.iter().map(|s| s.code()).collect()
    }

    pub fn to_complex(&self) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).value())
    }

    pub fn row(&self, i: usize) -> &[Symbol] {
        &self.symbols[i * self.cols..(i + 1) * self.cols]
    }
}

/// A linear beacon matrix acting on channel vectors.
pub trait BeaconMatrix {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `W h` with rows as beacon weights, no conjugation.
    fn apply(&self, h: &[Complex64]) -> Vec<Complex64>;
}

impl BeaconMatrix for CMatrix {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, h: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.nrows()];
        mat_vec_into(self, h, &mut out);
        out
    }
}

impl BeaconMatrix for QuantizedMatrix {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn apply(&self, h: &[Complex64]) -> Vec<Complex64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(h).map(|(s, &x)| s.rotate(x)).sum())
            .collect()
    }
}

pub fn sample_quantized_matrix<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> QuantizedMatrix {
    let symbols = (0..m * n).map(|_| Symbol::ALL[rng.random_range(0..4)]).collect();
    QuantizedMatrix { rows: m, cols: n, symbols }
}

/// `m_cs x n` matrix with i.i.d. `CN(0, 1/n)` entries (per-component variance
/// `1/(2n)`), drawn in row-major order.
pub fn sample_gaussian_matrix<R: Rng + ?Sized>(m_cs: usize, n: usize, rng: &mut R) -> CMatrix {
    let sigma = (1.0 / (2.0 * n as f64)).sqrt();
    let entries: Vec<Complex64> = (0..m_cs * n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(sigma * re, sigma * im)
        })
        .collect();
    CMatrix::from_row_slice(m_cs, n, &entries)
}

/// Right pseudoinverse `Aᴴ (A Aᴴ)⁻¹` of a full-row-rank matrix, solved
/// through a Cholesky factorization of the Gram matrix.
pub fn row_pseudoinverse(a_cs: &CMatrix) -> Result<CMatrix> {
    let (rows, cols) = a_cs.shape();
    if rows == 0 || rows > cols {
        return Err(Error::InvalidInput(format!(
            "row pseudoinverse needs 0 < rows <= cols, got {rows}x{cols}"
        )));
    }
    let gram = a_cs * a_cs.adjoint();
    let chol = checked_cholesky(&gram)?;
    // (A Aᴴ)⁻¹ A, then adjoint.
    Ok(chol.solve(a_cs).adjoint())
}

/// Quantized physical beacons plus the virtual `(A_PR, A_CS)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "EnsembleFile", try_from = "EnsembleFile")]
pub struct SensingEnsemble {
    pub a_final: QuantizedMatrix,
    pub a_cs: CMatrix,
    pub a_pr: CMatrix,
    pub mismatch_fro_rel: f64,
    pub seed: u64,
}

impl SensingEnsemble {
    pub fn m(&self) -> usize {
        self.a_final.nrows()
    }

    pub fn m_cs(&self) -> usize {
        self.a_cs.nrows()
    }

    pub fn n(&self) -> usize {
        self.a_cs.ncols()
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}

pub(crate) fn validate_dimensions(m: usize, m_cs: usize, n: usize) -> Result<()> {
    if m == 0 || m_cs == 0 || n == 0 {
        return Err(Error::Config(format!("dimensions must be positive (m={m}, m_cs={m_cs}, n={n})")));
    }
    if 2 * m_cs > m {
        return Err(Error::Config(format!(
            "need m >= 2*m_cs to identify m_cs complex values, got m={m}, m_cs={m_cs}"
        )));
    }
    if m_cs > n {
        return Err(Error::Config(format!("m_cs={m_cs} exceeds n={n}")));
    }
    Ok(())
}

pub fn build_ensemble(m: usize, m_cs: usize, n: usize, seed: u64) -> Result<SensingEnsemble> {
    validate_dimensions(m, m_cs, n)?;
    let a = sample_quantized_matrix(m, n, &mut stream(seed, STREAM_QUANTIZED));
    let a_cs = sample_gaussian_matrix(m_cs, n, &mut stream(seed, STREAM_GAUSSIAN));
    let pinv = row_pseudoinverse(&a_cs)?;
    let a_pr = quantized_times(&a, &pinv);
    let product = &a_pr * &a_cs;
    let a_final = QuantizedMatrix::quantize(&product);

    let mut diff = 0.0;
    for i in 0..m {
        for j in 0..n {
            diff += (product[(i, j)] - a_final.get(i, j).value()).norm_sqr();
        }
    }
    // Every alphabet entry has unit modulus.
    let mismatch_fro_rel = (diff / (m * n) as f64).sqrt();

    Ok(SensingEnsemble {
        a_final,
        a_cs,
        a_pr,
        mismatch_fro_rel,
        seed,
    })
}

/// `Q · B` for an alphabet matrix `Q`, using exact rotations.
fn quantized_times(q: &QuantizedMatrix, b: &CMatrix) -> CMatrix {
    let (rows, inner) = (q.nrows(), q.ncols());
    let cols = b.ncols();
    debug_assert_eq!(inner, b.nrows());
    let mut out = CMatrix::zeros(rows, cols);
    for j in 0..cols {
        let bcol = b.column(j);
        for i in 0..rows {
            out[(i, j)] = q.row(i).iter().zip(bcol.iter()).map(|(s, &x)| s.rotate(x)).sum();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherentMeasurements {
    pub values: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssMeasurements {
    pub values: Vec<f64>,
    pub noise_variance: f64,
}

impl RssMeasurements {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidInput("RSS values must be non-negative".into()));
        }
        Ok(Self {
            values,
            noise_variance: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            noise_variance: self.noise_variance * c,
        }
    }
}

fn complex_noise<R: Rng + ?Sized>(std: f64, rng: &mut R) -> Complex64 {
    let s = std / std::f64::consts::SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// `y_b = w_bᵀ h + n_b` with `n_b ~ CN(0, noise_std²)`.
pub fn measure_coherent<A, R>(a: &A, h: &[Complex64], noise_std: f64, rng: &mut R) -> Result<CoherentMeasurements>
where
    A: BeaconMatrix + ?Sized,
    R: Rng + ?Sized,
{
    if a.ncols() != h.len() {
        return Err(Error::dims(a.ncols(), h.len()));
    }
    let mut values = a.apply(h);
    if noise_std > 0.0 {
        for v in &mut values {
            *v += complex_noise(noise_std, rng);
        }
    }
    Ok(CoherentMeasurements { values })
}

/// `y_b = |w_bᵀ h + n_b|²`; noise is added before detection.
pub fn measure_rss<A, R>(a: &A, h: &[Complex64], noise_std: f64, rng: &mut R) -> Result<RssMeasurements>
where
    A: BeaconMatrix + ?Sized,
    R: Rng + ?Sized,
{
    let coherent = measure_coherent(a, h, noise_std, rng)?;
    Ok(RssMeasurements {
        values: coherent.values.iter().map(|v| v.norm_sqr()).collect(),
        noise_variance: noise_std * noise_std,
    })
}

/// On-disk layout: matrices row-major, complex entries as `[re, im]`,
/// alphabet entries as codes `0..3` meaning `{1, j, -1, -j}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub m: usize,
    pub m_cs: usize,
    pub n: usize,
    pub seed: u64,
    pub mismatch_fro_rel: f64,
    pub a_final: Vec<u8>,
    pub a_cs: Vec<[f64; 2]>,
    pub a_pr: Vec<[f64; 2]>,
}

fn to_pairs(m: &CMatrix) -> Vec<[f64; 2]> {
    let (rows, cols) = m.shape();
    (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .map(|(i, j)| [m[(i, j)].re, m[(i, j)].im])
        .collect()
}

fn from_pairs(rows: usize, cols: usize, pairs: &[[f64; 2]]) -> Result<CMatrix> {
    if pairs.len() != rows * cols {
        return Err(Error::dims(rows * cols, pairs.len()));
    }
    let entries: Vec<Complex64> = pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect();
    Ok(CMatrix::from_row_slice(rows, cols, &entries))
}

impl From<SensingEnsemble> for EnsembleFile {
    fn from(e: SensingEnsemble) -> Self {
        EnsembleFile {
            m: e.m(),
            m_cs: e.m_cs(),
            n: e.n(),
            seed: e.seed,
            mismatch_fro_rel: e.mismatch_fro_rel,
            a_final: e.a_final.codes(),
            a_cs: to_pairs(&e.a_cs),
            a_pr: to_pairs(&e.a_pr),
        }
    }
}

impl TryFrom<EnsembleFile> for SensingEnsemble {
    type Error = Error;

    fn try_from(f: EnsembleFile) -> Result<Self> {
        Ok(SensingEnsemble {
            a_final: QuantizedMatrix::from_codes(f.m, f.n, &f.a_final)?,
            a_cs: from_pairs(f.m_cs, f.n, &f.a_cs)?,
            a_pr: from_pairs(f.m, f.m_cs, &f.a_pr)?,
            mismatch_fro_rel: f.mismatch_fro_rel,
            seed: f.seed,
        })
    }
}
