//! Run configuration: one TOML document selecting geometry, fibers,
//! scenarios, split, model, training, uncertainty settings and paths.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{GenerationOptions, Scenario, ScenarioKind};
use crate::error::{Error, Result};
use crate::fbg::{FiberConstants, FiberSpec};
use crate::kinematics::CdmConfig;
use crate::nn::{TrainOptions, DEFAULT_DROPOUT, HIDDEN};
use crate::uncertainty::DEFAULT_OMEGA;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ood: Vec<ScenarioKind>,
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ood: vec![ScenarioKind::CenterLeft, ScenarioKind::TipLeft],
            train_fraction: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    /// Weight initialization seed.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: HIDDEN.to_vec(),
            dropout: DEFAULT_DROPOUT,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub k: usize,
    pub omega: f64,
    pub seed: u64,
    /// Thresholds of the false-positive count, mm.
    pub error_threshold: f64,
    pub std_threshold: f64,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            k: 100,
            omega: DEFAULT_OMEGA,
            seed: 2,
            error_threshold: 1.5,
            std_threshold: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            model_dir: "models".into(),
            report_dir: "reports".into(),
        }
    }
}

impl Paths {
    /// Resolves relative directories against `base`.
    pub fn relative_to(&self, base: &Path) -> Self {
        let join = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        Self {
            data_dir: join(&self.data_dir),
            model_dir: join(&self.model_dir),
            report_dir: join(&self.report_dir),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub geometry: CdmConfig,
    pub fiber: FiberConstants,
    pub generation: GenerationOptions,
    pub scenarios: Vec<Scenario>,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub training: TrainOptions,
    pub uncertainty: UncertaintyConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            geometry: CdmConfig::default(),
            fiber: FiberConstants::default(),
            generation: GenerationOptions::default(),
            scenarios: default_scenarios(),
            split: SplitConfig::default(),
            model: ModelConfig::default(),
            training: TrainOptions::default(),
            uncertainty: UncertaintyConfig::default(),
            paths: Paths::default(),
        }
    }
}

/// The benchmark set: every training scenario at two velocities, and the
/// held-out placements once each.
pub fn default_scenarios() -> Vec<Scenario> {
    let mut out = Vec::new();
    let mut seed = 100;
    let mut push = |kind, velocity, bends| {
        seed += 1;
        out.push(Scenario {
            kind,
            velocity,
            sample_rate: 50.0,
            bends,
            seed,
        });
    };
    for kind in ScenarioKind::ALL {
        if matches!(kind, ScenarioKind::CenterLeft | ScenarioKind::TipLeft) {
            push(kind, 0.3, 2);
        } else {
            push(kind, 0.4, 3);
            push(kind, 0.25, 3);
        }
    }
    out
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.geometry.validate()?;
        self.fiber.validate()?;
        self.generation.solver.validate()?;
        if self.scenarios.is_empty() {
            return Err(Error::Config("no scenarios configured".into()));
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        if !(0.0..=1.0).contains(&self.split.train_fraction) {
            return Err(Error::Config("split.train_fraction outside [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return Err(Error::Config("model.dropout outside [0, 1)".into()));
        }
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            return Err(Error::Config("model.hidden needs positive widths".into()));
        }
        self.training.validate()?;
        let u = &self.uncertainty;
        if u.k == 0 || !(u.omega > 0.0) || !(u.error_threshold > 0.0) || !(u.std_threshold > 0.0) {
            return Err(Error::Config("uncertainty settings must be positive".into()));
        }
        Ok(())
    }

    pub fn fibers(&self) -> [FiberSpec; 2] {
        FiberSpec::pair(&self.fiber, self.geometry.fiber_offset)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::file(path, e))
    }
}
