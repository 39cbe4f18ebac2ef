use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nomp::NompOptions;
use crate::phase_retrieval::WfOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeModel {
    /// `|α| = 1`, phase uniform on `[-π, π)`.
    #[default]
    UnitModulusRandomPhase,
    /// `α ~ CN(0, 1)`.
    ComplexGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// RSS measurements, phase retrieval then NOMP.
    #[default]
    Noncoherent,
    /// Phase-coherent measurements straight into NOMP.
    Coherent,
}

/// Beacon matrix used by the coherent baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoherentMatrix {
    /// i.i.d. uniform over `{1, j, -1, -j}`, same hardware as the noncoherent scheme.
    #[default]
    Quantized,
    /// i.i.d. `CN(0, 1/N)`, no hardware constraint.
    Gaussian,
}

/// One simulated link. Field names double as the config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub n_elements: usize,
    pub k_paths: usize,
    pub m: usize,
    pub m_cs: usize,
    /// Minimum pairwise path separation in radians; `None` means `4·2π/N`.
    pub min_separation: Option<f64>,
    pub amplitude_model: AmplitudeModel,
    pub noise_std: f64,
    pub wf: WfOptions,
    pub nomp: NompOptions,
    pub seed: u64,
    pub mode: EstimatorMode,
    pub coherent_matrix: CoherentMatrix,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            n_elements: 256,
            k_paths: 1,
            m: 48,
            m_cs: 12,
            min_separation: None,
            amplitude_model: AmplitudeModel::default(),
            noise_std: 0.0,
            wf: WfOptions::default(),
            nomp: NompOptions::default(),
            seed: 0,
            mode: EstimatorMode::default(),
            coherent_matrix: CoherentMatrix::default(),
        }
    }
}

impl TrialConfig {
    pub fn min_separation(&self) -> f64 {
        self.min_separation
            .unwrap_or(4.0 * 2.0 * std::f64::consts::PI / self.n_elements as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_elements < 2 {
            return Err(Error::Config(format!("n_elements must be >= 2, got {}", self.n_elements)));
        }
        if self.k_paths == 0 {
            return Err(Error::Config("k_paths must be positive".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be positive".into()));
        }
        if self.mode == EstimatorMode::Noncoherent {
            crate::sensing::validate_dimensions(self.m, self.m_cs, self.n_elements)?;
        }
        let sep = self.min_separation();
        if !(sep >= 0.0) || self.k_paths as f64 * sep >= 2.0 * std::f64::consts::PI {
            return Err(Error::Config(format!(
                "cannot place {} paths with separation {sep}",
                self.k_paths
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        self.wf.validate()?;
        self.nomp.validate()?;
        Ok(())
    }

    /// Non-fatal configuration concerns.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.mode == EstimatorMode::Noncoherent && 4 * self.k_paths > self.m_cs {
            out.push(format!(
                "m_cs={} is below the recommended 4*k_paths={}",
                self.m_cs,
                4 * self.k_paths
            ));
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrialConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("reading {}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}
