//! Run configuration: one TOML file covering every pipeline stage.
//!
//! Unknown keys are rejected. The config hash is the SHA-256 of the
//! canonical JSON form with output location and job count blanked, so it
//! identifies everything that can change a result and nothing else.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::RuntimeParams;
use crate::collect::{CollectParams, StrategyMix};
use crate::decide::TrainParams;
use crate::error::{Error, Result};
use crate::eval::{EvalOptions, RevisitParams};
use crate::io;
use crate::scene::{EpisodeGenParams, SceneGenParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitParams {
    pub train_scenes: usize,
    pub eval_scenes: usize,
    pub train_episodes_per_scene: usize,
    pub eval_episodes_per_scene: usize,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            train_scenes: 200,
            eval_scenes: 50,
            train_episodes_per_scene: 5,
            eval_episodes_per_scene: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectSection {
    pub mix: String,
    pub better_margin: f64,
    pub prefill: bool,
    pub prefill_spacing: f64,
}

impl Default for CollectSection {
    fn default() -> Self {
        let d = CollectParams::default();
        CollectSection {
            mix: "optimal=0.5,random=0.25,hybrid:0.5=0.25".into(),
            better_margin: d.better_margin,
            prefill: d.prefill,
            prefill_spacing: d.prefill_spacing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub decision_budget: Option<usize>,
    pub reset_memory_per_goal: bool,
    /// Decision budgets reported by the exploration curve and `compare`.
    pub budgets: Vec<usize>,
    /// Per-goal decision budget of the memory ablation.
    pub ablation_budget: Option<usize>,
    pub revisit: RevisitParams,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            decision_budget: None,
            reset_memory_per_goal: false,
            budgets: vec![0, 1, 2, 3, 4, 5, 6, 8, 10, 15, 20],
            ablation_budget: Some(3),
            revisit: RevisitParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stage derives named substreams from it.
    pub seed: u64,
    pub output_root: PathBuf,
    pub jobs: Option<usize>,
    pub scene: SceneGenParams,
    pub split: SplitParams,
    pub episodes: EpisodeGenParams,
    pub runtime: RuntimeParams,
    pub collect: CollectSection,
    pub train: TrainParams,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            output_root: PathBuf::from("runs"),
            jobs: None,
            scene: SceneGenParams::default(),
            split: SplitParams::default(),
            episodes: EpisodeGenParams::default(),
            runtime: RuntimeParams::default(),
            collect: CollectSection::default(),
            train: TrainParams {
                epochs: 60,
                learning_rate: 1e-2,
                ..TrainParams::default()
            },
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: path.into(),
            message: e.message().to_string(),
        })?;
        cfg.validate().map_err(|e| Error::Config {
            path: path.into(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&io::read_text(path)?, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.mix()?;
        if self.train.batch_size == 0 || !(self.train.learning_rate > 0.0) {
            return Err(Error::InvalidParams("train needs batch_size > 0 and learning_rate > 0".into()));
        }
        if self.episodes.max_steps == 0 {
            return Err(Error::InvalidParams("max_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn mix(&self) -> Result<StrategyMix> {
        self.collect.mix.parse()
    }

    pub fn collect_params(&self) -> CollectParams {
        CollectParams {
            runtime: self.runtime.clone(),
            better_margin: self.collect.better_margin,
            prefill: self.collect.prefill,
            prefill_spacing: self.collect.prefill_spacing,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            runtime: self.runtime.clone(),
            decision_budget: self.eval.decision_budget,
            reset_memory_per_goal: self.eval.reset_memory_per_goal,
        }
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring output location and
    /// job count.
    pub fn config_hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_root = PathBuf::new();
        canon.jobs = None;
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let p = Path::new("x.toml");
        assert!(RunConfig::from_toml_str("seed = 3\n", p).is_ok());
        let err = RunConfig::from_toml_str("seed = 3\nbogus = 1\n", p).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        assert!(RunConfig::from_toml_str("[train]\nepochz = 1\n", p).is_err());
    }

    #[test]
    fn hash_ignores_paths_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output_root = "elsewhere".into();
        b.jobs = Some(3);
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed += 1;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn nested_sections_parse() {
        let text = "seed = 9\n[runtime.noise]\nsigma_center = 0.0\n[collect]\nmix = \"random=1\"\n";
        let cfg = RunConfig::from_toml_str(text, Path::new("x.toml")).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.runtime.noise.sigma_center, 0.0);
        assert_eq!(cfg.runtime.noise.sigma_vocab, 0.05);
        assert!(RunConfig::from_toml_str("[collect]\nmix = \"random=0.5\"\n", Path::new("x.toml")).is_err());
    }
}
