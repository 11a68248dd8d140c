//! Experiment configuration: one documented TOML format.
//!
//! Every run is reproducible from the config file plus the master seed;
//! the pair is condensed into a hash that output files carry in their
//! header comment, so a file can always be traced back to the exact
//! inputs that produced it.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; all task streams derive from it.
    pub master_seed: u64,
    pub system: SystemConfig,
    pub field: FieldConfig,
    pub drift: DriftConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub limit: LimitConfig,
    #[serde(default)]
    pub greenkubo: GreenKuboConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum SystemConfig {
    /// Exact doubling-map shift on fair bit streams.
    Toy,
    /// Finite-horizon periodic Lorentz gas.
    Billiard {
        disks: Vec<DiskConfig>,
        horizon_cap: f64,
        #[serde(default = "default_true")]
        symmetry_required: bool,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskConfig {
    pub center: [f64; 2],
    pub radius: f64,
}

/// The driving observable `F(x,w,a) = g(x) h(w) psi(a)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    /// Constant state factor per coordinate (`g`).
    pub amplitude: Vec<f64>,
    /// Base observable `h`, by registry name.
    pub h: HConfig,
    /// Level profile `psi`.
    pub psi: PsiConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum HConfig {
    /// Toy shift: +1/-1 from the leading bit (the step function).
    StepSign,
    /// Toy shift: depth-k table over the leading bits.
    Cylinder { depth: u32, table: Vec<f64> },
    /// Billiard: sine of the boundary angle (mean zero by uniformity).
    AngleSine,
    /// Billiard: sine of the outgoing angle (mean zero by symmetry).
    ThetaSine,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiConfig {
    pub support_min: i64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum DriftConfig {
    Zero,
    /// `Fbar(x) = -rate * x`.
    LinearDecay { rate: f64 },
    /// Planar rotation at the given rate (dimension 2 only).
    Rotation { rate: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    pub x0: Vec<f64>,
    pub t_end: f64,
    /// Scale sweep, largest first.
    pub epsilons: Vec<f64>,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    pub n_paths: usize,
    /// How many full trajectories to write out per experiment.
    #[serde(default = "default_sample_paths")]
    pub sample_paths: usize,
}

fn default_substeps() -> usize {
    4
}

fn default_sample_paths() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    pub dt: f64,
    /// Local-time bandwidth `delta = factor * sqrt(Sigma dt)`.
    pub bandwidth_factor: f64,
    pub n_paths: usize,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig { dt: 1e-4, bandwidth_factor: 2.0, n_paths: 10_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenKuboConfig {
    pub l_max: usize,
    pub n_samples: usize,
    /// Level truncation for the extension integral.
    pub level_cap: i64,
    /// Lag cutoff for the step-cocycle variance.
    pub k_max: usize,
    /// States at which the variance field is tabulated.
    pub x_grid: Vec<Vec<f64>>,
}

impl Default for GreenKuboConfig {
    fn default() -> Self {
        GreenKuboConfig {
            l_max: 50,
            n_samples: 100_000,
            level_cap: 8,
            k_max: 20,
            x_grid: vec![vec![0.0]],
        }
    }
}

impl ExperimentConfig {
    /// The shipped default: toy system, odd-pair level profile on the
    /// step sign with unit amplitude, drift `-x`, scale sweep
    /// `1e-2, 1e-3, 1e-4`.
    pub fn default_toy() -> Self {
        ExperimentConfig {
            master_seed: 20260810,
            system: SystemConfig::Toy,
            field: FieldConfig {
                amplitude: vec![1.0],
                h: HConfig::StepSign,
                psi: PsiConfig { support_min: -1, weights: vec![-1.0, 0.0, 1.0] },
            },
            drift: DriftConfig::LinearDecay { rate: 1.0 },
            run: RunConfig {
                dim: 1,
                x0: vec![1.0],
                t_end: 1.0,
                epsilons: vec![1e-2, 1e-3, 1e-4],
                substeps: 4,
                n_paths: 10_000,
                sample_paths: 4,
            },
            limit: LimitConfig::default(),
            greenkubo: GreenKuboConfig {
                l_max: 20,
                n_samples: 100_000,
                level_cap: 4,
                k_max: 20,
                x_grid: vec![vec![0.0]],
            },
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = self.run.dim;
        let err = |m: String| Err(ConfigError::Invalid(m));
        if d == 0 {
            return err("run.dim must be >= 1".into());
        }
        if self.run.x0.len() != d {
            return err(format!("run.x0 must have dim = {d} entries"));
        }
        if self.field.amplitude.len() != d {
            return err(format!("field.amplitude must have dim = {d} entries"));
        }
        if self.run.epsilons.is_empty() || self.run.epsilons.iter().any(|e| *e <= 0.0) {
            return err("run.epsilons must be nonempty and positive".into());
        }
        if self.run.t_end <= 0.0 {
            return err("run.t_end must be positive".into());
        }
        if self.run.substeps == 0 {
            return err("run.substeps must be >= 1".into());
        }
        if let DriftConfig::Rotation { .. } = self.drift {
            if d != 2 {
                return err("rotation drift needs dim = 2".into());
            }
        }
        match (&self.system, &self.field.h) {
            (SystemConfig::Toy, HConfig::StepSign | HConfig::Cylinder { .. }) => {}
            (SystemConfig::Billiard { .. }, HConfig::AngleSine | HConfig::ThetaSine) => {}
            _ => {
                return err("field.h is not available on the configured system".into());
            }
        }
        if let HConfig::Cylinder { depth, table } = &self.field.h {
            if table.len() != 1usize << depth {
                return err("cylinder h: table length must be 2^depth".into());
            }
        }
        if self.field.psi.weights.iter().all(|w| *w == 0.0) {
            return err("field.psi must contain a nonzero weight".into());
        }
        if self.limit.dt <= 0.0 || self.limit.bandwidth_factor <= 0.0 {
            return err("limit.dt and limit.bandwidth_factor must be positive".into());
        }
        for x in &self.greenkubo.x_grid {
            if x.len() != d {
                return err("greenkubo.x_grid entries must have run.dim coordinates".into());
            }
        }
        Ok(())
    }

    /// Hash of the effective configuration (including the seed); output
    /// files carry it so reruns are byte-comparable.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        let digest = h.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        ExperimentConfig::default_toy().validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::default_toy();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn hash_tracks_seed() {
        let a = ExperimentConfig::default_toy();
        let mut b = a.clone();
        b.master_seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let mut cfg = ExperimentConfig::default_toy();
        cfg.run.x0 = vec![1.0, 2.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_billiard_h_on_toy() {
        let mut cfg = ExperimentConfig::default_toy();
        cfg.field.h = HConfig::AngleSine;
        assert!(cfg.validate().is_err());
    }
}
