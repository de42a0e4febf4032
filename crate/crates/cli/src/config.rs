//! Run configuration: a TOML tree whose keys the command-line flags override.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tempo_guard_core::attacksim::{AttackKind, AttackSpec, SceneSpec};
use tempo_guard_core::detector::DetectorConfig;
use tempo_guard_core::synthesis::SynthesisConfig;
use tempo_guard_core::ClusterParams;

use crate::error::{usage, CliError, Result};

/// Overrides the default first seed of a suite.
pub const SEED_ENV: &str = "TEMPO_GUARD_SEED";

/// Which clustering preset the detector and the flow solver use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Follows the suite kind; dense for single sequences.
    #[default]
    Auto,
    Dense,
    Sparse,
    /// Keep `detector.cluster_params` and `synthesis.sfe.cluster_params` as written.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub kind: AttackKind,
    /// Paired (clean, spoofed) cases; seeds run from `seed` upwards.
    pub scenarios: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::Dense,
            scenarios: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub min_pts: Vec<usize>,
    pub eps: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            min_pts: vec![5, 9, 13, 17, 21],
            eps: vec![0.15, 0.25, 0.35, 0.5, 0.75, 1.0],
        }
    }
}

impl SweepGrid {
    /// Grid points, `min_pts`-major, each axis in the order written.
    pub fn points(&self) -> Result<Vec<ClusterParams>> {
        if self.min_pts.is_empty() || self.eps.is_empty() {
            return usage("sweep grid is empty");
        }
        let mut out = Vec::with_capacity(self.min_pts.len() * self.eps.len());
        for &m in &self.min_pts {
            for &e in &self.eps {
                out.push(ClusterParams::new(e, m)?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblateConfig {
    pub betas: Vec<f64>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self { betas: vec![2.0, 0.0] }
    }
}

/// Scene for `gen`, with an optional attack on one of its frames.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub scene: SceneSpec,
    pub attack: Option<AttackSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Frame file for `detect`.
    pub frames: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    /// First scenario seed of a suite.
    pub seed: u64,
    pub preset: Preset,
    pub suite: SuiteConfig,
    /// History length is `synthesis.capacity`, the thinning side `synthesis.frame_voxel`.
    pub synthesis: SynthesisConfig,
    pub detector: DetectorConfig,
    pub sweep: SweepGrid,
    pub ablate: AblateConfig,
    pub gen: GenConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            frames: None,
            out: None,
            jobs: 1,
            seed: 0,
            preset: Preset::Auto,
            suite: SuiteConfig::default(),
            synthesis: SynthesisConfig::default(),
            detector: DetectorConfig::default(),
            sweep: SweepGrid::default(),
            ablate: AblateConfig::default(),
            gen: GenConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, with the seed taken from the environment when set.
    pub fn from_env() -> Result<Self> {
        let mut c = Self::default();
        if let Some(seed) = env_seed()? {
            c.seed = seed;
        }
        Ok(c)
    }

    /// Parses a TOML document on top of [`from_env`](Self::from_env).
    pub fn from_toml(text: &str) -> Result<Self> {
        let base = Self::from_env()?;
        let mut value = toml::Value::try_from(&base).map_err(|e| CliError::Usage(e.to_string()))?;
        let patch: toml::Value = toml::from_str(text).map_err(|e| CliError::Usage(e.to_string()))?;
        merge(&mut value, patch);
        value.try_into().map_err(|e: toml::de::Error| CliError::Usage(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        Self::from_toml(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            source: Box::new(e),
        })
    }

    /// Cluster parameters for the detector and the flow solver, after the preset.
    pub fn resolved(&self) -> (SynthesisConfig, DetectorConfig) {
        let mut synthesis = self.synthesis;
        let mut detector = self.detector;
        let params = match self.preset {
            Preset::Auto => Some(match self.suite.kind {
                AttackKind::Dense => ClusterParams::DENSE,
                AttackKind::Sparse => ClusterParams::SPARSE,
            }),
            Preset::Dense => Some(ClusterParams::DENSE),
            Preset::Sparse => Some(ClusterParams::SPARSE),
            Preset::Custom => None,
        };
        if let Some(p) = params {
            synthesis.sfe.cluster_params = p;
            detector.cluster_params = p;
        }
        (synthesis, detector)
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return usage("--jobs must be at least 1");
        }
        let (s, d) = self.resolved();
        s.validate()?;
        d.validate()?;
        if let Some(f) = &self.frames {
            if !f.exists() {
                return usage(format!("frame file {} does not exist", f.display()));
            }
        }
        Ok(())
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Overlays `patch` on `base`, recursing into tables.
fn merge(base: &mut toml::Value, patch: toml::Value) {
    match (base, patch) {
        (toml::Value::Table(b), toml::Value::Table(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
