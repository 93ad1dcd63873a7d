//! Experiment configuration files: one JSON document drives data generation,
//! basis computation, training and evaluation. Hyperparameter keys follow
//! the usual naming (truncated_modes, lmodes, l_layers, width, epochs, lr,
//! step_lr) so runs can be cross-referenced at a glance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::container::sha256_hex;
use crate::datagen::{DataCase, GenSpec, GrfSpec, LayoutSpec, PdeRun};
use crate::error::{Error, Result};
use crate::metrics::HistogramSpec;
use crate::norm::Activation;
use crate::train::{BasisFamily, Reconstruction, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RoNorm,
    PcaNet,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StepLr {
    pub gamma: f64,
    pub every: usize,
}

/// Data-generation section: time discretization, PDE coefficient and the
/// random-field parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenSection {
    pub n_train: usize,
    pub n_test: usize,
    pub dt: f64,
    pub n_t: usize,
    pub coefficient: f64,
    pub grf: GrfParams,
    #[serde(default)]
    pub layout: Option<LayoutSpec>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GrfParams {
    pub alpha: f64,
    pub tau: f64,
    pub n_modes: usize,
}

/// Training section. Keys mirror the hyperparameter table naming.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSection {
    pub truncated_modes: usize,
    pub lmodes: usize,
    pub l_layers: usize,
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub step_lr: StepLr,
    #[serde(default = "default_reconstruction")]
    pub reconstruction: Reconstruction,
    #[serde(default = "default_basis_family")]
    pub basis_family: BasisFamily,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_d_proj")]
    pub d_proj: usize,
}

fn default_reconstruction() -> Reconstruction {
    Reconstruction::Online
}

fn default_basis_family() -> BasisFamily {
    BasisFamily::Pod
}

fn default_activation() -> Activation {
    Activation::Gelu
}

fn default_d_proj() -> usize {
    128
}

/// PCA baseline section: hidden layer widths and its own training budget.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PcaNetSection {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default)]
    pub step_lr: Option<StepLr>,
}

fn default_hidden() -> Vec<usize> {
    vec![256, 256, 256, 256]
}

/// One experiment: method, case, file locations and all hyperparameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub case: DataCase,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Path to the mesh text file, relative to the config file location.
    pub mesh: String,
    /// Dataset directory (holding train/ and test/), relative to the config.
    #[serde(default)]
    pub data_dir: Option<String>,
    /// Checkpoint path for `eval`, relative to the config.
    #[serde(default)]
    pub checkpoint: Option<String>,
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub gen: Option<GenSection>,
    #[serde(default)]
    pub train: Option<TrainSection>,
    #[serde(default)]
    pub pca_net: Option<PcaNetSection>,
    #[serde(default)]
    pub histogram: Option<HistogramSpec>,
}

fn default_method() -> Method {
    Method::RoNorm
}

fn default_repeats() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            serde_json::from_str(json).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(ExperimentConfig, PathBuf)> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path)?;
        let cfg = ExperimentConfig::from_json(&json)?;
        let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::Config(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.mesh.is_empty() {
            return Err(Error::Config("mesh path is empty".into()));
        }
        if let Some(g) = &self.gen {
            if g.n_train == 0 || g.n_test == 0 || g.n_t == 0 {
                return Err(Error::Config("gen section needs positive counts".into()));
            }
            if !(g.dt > 0.0 && g.coefficient > 0.0) {
                return Err(Error::Config("gen section needs positive dt and coefficient".into()));
            }
        }
        if let Some(t) = &self.train {
            self.train_config_with_seed(self.seed)?.validate()?;
            if t.l_layers == 0 {
                return Err(Error::Config("l_layers must be positive".into()));
            }
        }
        Ok(())
    }

    /// Resolve a path in the config relative to the config file's directory.
    pub fn resolve(base: &Path, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    pub fn gen_spec(&self, seed: u64) -> Result<GenSpec> {
        let g = self
            .gen
            .as_ref()
            .ok_or_else(|| Error::Config("config has no gen section".into()))?;
        Ok(GenSpec {
            case: self.case,
            n_train: g.n_train,
            n_test: g.n_test,
            seed,
            run: PdeRun {
                dt: g.dt,
                n_t: g.n_t,
                coefficient: g.coefficient,
            },
            grf: GrfSpec {
                alpha: g.grf.alpha,
                tau: g.grf.tau,
                n_modes: g.grf.n_modes,
                seed,
            },
            layout: g.layout.unwrap_or_default(),
        })
    }

    pub fn train_config_with_seed(&self, seed: u64) -> Result<TrainConfig> {
        let t = self
            .train
            .as_ref()
            .ok_or_else(|| Error::Config("config has no train section".into()))?;
        Ok(TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            step_lr_every: t.step_lr.every,
            step_lr_gamma: t.step_lr.gamma,
            reconstruction: t.reconstruction,
            truncated_modes: t.truncated_modes,
            lmodes: t.lmodes,
            width: t.width,
            n_l: t.l_layers,
            basis_family: t.basis_family,
            seed,
            normalize: t.normalize,
            activation: t.activation,
            d_proj: t.d_proj,
        })
    }

    /// Hash of the canonical serialized config; embedded in every artifact
    /// so a rerun with the same config and seed is detectable. File locations
    /// (mesh, data_dir, checkpoint) are excluded: they say where inputs live,
    /// not what the experiment is. Mesh and dataset content are covered by
    /// the checksums in the dataset headers.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.mesh = String::new();
        canonical.data_dir = None;
        canonical.checkpoint = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        sha256_hex(json.as_bytes())
    }
}

/// Config for `compare`: an ordered list of member experiment configs,
/// inline or by path.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareConfig {
    pub schema_version: u32,
    pub runs: Vec<CompareEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CompareEntry {
    Path(String),
    Inline(Box<ExperimentConfig>),
}

impl CompareConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<(CompareConfig, PathBuf)> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path)?;
        let cfg: CompareConfig =
            serde_json::from_str(&json).map_err(|e| Error::Config(format!("bad compare config: {e}")))?;
        if cfg.schema_version != 1 {
            return Err(Error::Config(format!(
                "unsupported schema_version {}",
                cfg.schema_version
            )));
        }
        if cfg.runs.len() < 2 {
            return Err(Error::Config("compare needs at least two runs".into()));
        }
        let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Ok((cfg, base))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "case": "heat_ic",
        "method": "ro_norm",
        "mesh": "meshes/square.mesh",
        "seed": 7,
        "gen": {
            "n_train": 4, "n_test": 2, "dt": 0.05, "n_t": 10,
            "coefficient": 0.1,
            "grf": {"alpha": 3.0, "tau": 3.0, "n_modes": 8}
        },
        "train": {
            "truncated_modes": 4, "lmodes": 8, "l_layers": 4, "width": 16,
            "epochs": 10, "batch_size": 2, "lr": 0.01,
            "step_lr": {"gamma": 0.5, "every": 100}
        }
    }"#;

    #[test]
    fn parse_minimal_config() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.case, DataCase::HeatIc);
        assert_eq!(cfg.method, Method::RoNorm);
        assert_eq!(cfg.repeats, 1);
        let tc = cfg.train_config_with_seed(99).unwrap();
        assert_eq!(tc.seed, 99);
        assert_eq!(tc.n_l, 4);
        assert_eq!(tc.step_lr_gamma, 0.5);
        assert_eq!(tc.d_proj, 128);
        let gs = cfg.gen_spec(7).unwrap();
        assert_eq!(gs.n_train, 4);
        assert_eq!(gs.grf.alpha, 3.0);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::from_json(MINIMAL).unwrap();
        let b = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = 8;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_json("{}").is_err());
        assert!(ExperimentConfig::from_json("not json").is_err());
        let bad_version = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(ExperimentConfig::from_json(&bad_version).is_err());
        let bad_lr = MINIMAL.replace("\"lr\": 0.01", "\"lr\": -1.0");
        assert!(ExperimentConfig::from_json(&bad_lr).is_err());
    }
}
