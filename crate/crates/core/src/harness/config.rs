use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{gen_gaussian_mixture, gen_orthogonal, load_idx_pair, Dataset};
use crate::error::{Error, Result};
use crate::metrics::RecordSchedule;
use crate::network::{Activation, BatchSize, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    GaussianMixture,
    Orthogonal,
    IdxPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Leaky,
}

/// Flat experiment description; this is also the on-disk JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataKind,
    pub n: usize,
    pub d: usize,
    #[serde(default = "default_mu_variance")]
    pub mu_variance: f64,
    #[serde(default = "one")]
    pub sigma_p: f64,
    /// Dataset seed; falls back to `seed` when absent.
    #[serde(default)]
    pub data_seed: Option<u64>,
    #[serde(default)]
    pub idx_images: Option<PathBuf>,
    #[serde(default)]
    pub idx_labels: Option<PathBuf>,
    #[serde(default)]
    pub class_a: u8,
    #[serde(default = "class_one")]
    pub class_b: u8,

    pub m: usize,
    pub sigma0: f64,
    pub activation: ActivationKind,
    #[serde(default = "default_gamma")]
    pub gamma: f64,

    pub eta: f64,
    pub steps: usize,
    /// Mini-batch size; absent means full batch.
    #[serde(default)]
    pub batch: Option<usize>,
    #[serde(default)]
    pub seed: u64,

    #[serde(default = "default_dense")]
    pub dense_until: usize,
    #[serde(default = "default_per_decade")]
    pub per_decade: usize,

    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub write_weights: bool,
    /// Periodic least-squares cross-check of the tracker and KKT residuals.
    #[serde(default)]
    pub oracle_checks: bool,
}

fn default_mu_variance() -> f64 {
    1e-4
}
fn one() -> f64 {
    1.0
}
fn class_one() -> u8 {
    1
}
fn default_gamma() -> f64 {
    0.5
}
fn default_dense() -> usize {
    100
}
fn default_per_decade() -> usize {
    30
}
fn yes() -> bool {
    true
}

impl ExperimentConfig {
    /// Gaussian-mixture setup: n=10, d=784, m=100, η=0.1, σ₀=1e-4, full batch.
    pub fn synthetic(activation: ActivationKind, gamma: f64, steps: usize, seed: u64) -> Self {
        ExperimentConfig {
            data: DataKind::GaussianMixture,
            n: 10,
            d: 784,
            mu_variance: default_mu_variance(),
            sigma_p: 1.0,
            data_seed: None,
            idx_images: None,
            idx_labels: None,
            class_a: 0,
            class_b: 1,
            m: 100,
            sigma0: 1e-4,
            activation,
            gamma,
            eta: 0.1,
            steps,
            batch: None,
            seed,
            dense_until: default_dense(),
            per_decade: default_per_decade(),
            out_dir: None,
            write_weights: true,
            oracle_checks: false,
        }
    }

    /// Orthogonal-input ReLU setup: n=20, d=40, m=1000, σ₀=1e-4.
    pub fn orthogonal_relu(steps: usize, seed: u64) -> Self {
        ExperimentConfig {
            data: DataKind::Orthogonal,
            n: 20,
            d: 40,
            m: 1000,
            ..Self::synthetic(ActivationKind::Relu, default_gamma(), steps, seed)
        }
    }

    pub fn activation(&self) -> Result<Activation> {
        match self.activation {
            ActivationKind::Relu => Ok(Activation::Relu),
            ActivationKind::Leaky => Activation::leaky(self.gamma),
        }
    }

    pub fn schedule(&self) -> RecordSchedule {
        RecordSchedule {
            dense_until: self.dense_until,
            per_decade: self.per_decade,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            eta: self.eta,
            sigma0: self.sigma0,
            steps: self.steps,
            batch: self.batch.map_or(BatchSize::Full, BatchSize::Size),
            seed: self.seed,
            record: self.schedule(),
        }
    }

    pub fn dataset_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 || self.d == 0 || self.m == 0 {
            return bad(format!("n, d, m must be positive (n={}, d={}, m={})", self.n, self.d, self.m));
        }
        if !(self.sigma0 >= 0.0 && self.sigma0.is_finite()) {
            return bad(format!("sigma0 must be finite and nonnegative, got {}", self.sigma0));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if self.batch == Some(0) {
            return bad("batch must be at least 1".into());
        }
        if self.activation == ActivationKind::Leaky && !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("leaky slope gamma must lie in (0, 1), got {}", self.gamma));
        }
        match self.data {
            DataKind::GaussianMixture => {
                if !(self.mu_variance > 0.0 && self.sigma_p > 0.0) {
                    return bad("mu_variance and sigma_p must be positive".into());
                }
            }
            DataKind::Orthogonal => {
                if self.n > self.d || self.n % 2 == 1 {
                    return bad(format!("orthogonal data needs even n <= d (n={}, d={})", self.n, self.d));
                }
            }
            DataKind::IdxPair => {
                if self.idx_images.is_none() || self.idx_labels.is_none() {
                    return bad("idx_pair data needs idx_images and idx_labels".into());
                }
                if self.class_a == self.class_b {
                    return bad("class_a and class_b must differ".into());
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the canonical (sorted-key, compact) JSON form.
    pub fn content_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn build_dataset(&self) -> Result<Dataset> {
        let seed = self.dataset_seed();
        match self.data {
            DataKind::GaussianMixture => gen_gaussian_mixture(self.n, self.d, self.mu_variance, self.sigma_p, seed),
            DataKind::Orthogonal => gen_orthogonal(self.n, self.d, seed),
            DataKind::IdxPair => {
                let images = self.idx_images.as_deref().ok_or_else(|| Error::Config("idx_images missing".into()))?;
                let labels = self.idx_labels.as_deref().ok_or_else(|| Error::Config("idx_labels missing".into()))?;
                let ds = load_idx_pair(images, labels, self.class_a, self.class_b, self.n)?;
                if ds.d() != self.d {
                    return Err(Error::DimensionMismatch {
                        expected: self.d,
                        got: ds.d(),
                    });
                }
                Ok(ds)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_field_order() {
        let cfg = ExperimentConfig::synthetic(ActivationKind::Leaky, 0.5, 100, 7);
        let forward = serde_json::to_string(&cfg).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&forward).unwrap();
        let obj = value.as_object_mut().unwrap();
        let mut pairs: Vec<(String, serde_json::Value)> =
            obj.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        pairs.reverse();
        let reversed = format!(
            "{{{}}}",
            pairs
                .iter()
                .map(|(k, v)| format!("{}:{}", serde_json::to_string(k).unwrap(), v))
                .collect::<Vec<_>>()
                .join(",")
        );
        assert_ne!(forward, reversed);
        let back: ExperimentConfig = serde_json::from_str(&reversed).unwrap();
        assert_eq!(back.content_hash(), cfg.content_hash());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = ExperimentConfig::synthetic(ActivationKind::Leaky, 0.5, 100, 7);
        let b = ExperimentConfig { seed: 8, ..a.clone() };
        assert_ne!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"data":"orthogonal","n":4,"d":8,"m":5,"sigma0":0.001,"activation":"relu","eta":0.1,"steps":3}"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.batch, None);
        assert_eq!(cfg.dense_until, 100);
        assert!(!cfg.oracle_checks);
    }

    #[test]
    fn unknown_fields_and_bad_ranges_rejected() {
        let err = serde_json::from_str::<ExperimentConfig>(
            r#"{"data":"orthogonal","n":4,"d":8,"m":5,"sigma0":0.001,"activation":"relu","eta":0.1,"steps":3,"etta":1}"#,
        );
        assert!(err.is_err());
        let mut cfg = ExperimentConfig::synthetic(ActivationKind::Leaky, 1.0, 10, 0);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.gamma = 0.5;
        cfg.eta = 0.0;
        assert!(cfg.validate().is_err());
        let odd = ExperimentConfig {
            n: 5,
            ..ExperimentConfig::orthogonal_relu(10, 0)
        };
        assert!(odd.validate().is_err());
    }
}
