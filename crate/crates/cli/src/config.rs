//! Experiment configuration files.
//!
//! Relative paths inside a config resolve against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ccb_core::arms::{
    enumerate_all_arms, mis_arms, pomis_from_config, ArmMode, ArmTable, InterventionSet,
};
use ccb_core::engine::{Estimation, Problem, RewardSampling, RunConfig};
use ccb_core::policies::{PolicyKind, DEFAULT_TOLERANCE};
use ccb_core::{Scm, ScmTemplate, VarId, Window};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Ccb,
    ScmMab,
    #[default]
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizon {
    Uniform(usize),
    PerTrial(Vec<usize>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    #[default]
    Ts,
    Klucb,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default)]
    pub kind: PolicyName,
    /// KL-UCB bisection tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmsConfig {
    #[serde(default)]
    pub mode: ArmMode,
    /// Enumeration order; defaults to declaration order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pomis_file: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationKind {
    #[default]
    Oracle,
    Observational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default)]
    pub kind: EstimationKind,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            kind: EstimationKind::Oracle,
            samples: default_samples(),
            smoothing: default_smoothing(),
        }
    }
}

fn default_samples() -> usize {
    100_000
}

fn default_smoothing() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingKind {
    #[default]
    Table,
    Scm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Subcommand that produced a manifest; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    pub scm: PathBuf,
    pub trials: usize,
    pub horizon: Horizon,
    #[serde(default = "one")]
    pub replicates: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub window: Window,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub traces: bool,
    #[serde(default)]
    pub sampling: SamplingKind,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub arms: ArmsConfig,
    #[serde(default)]
    pub estimation: EstimationConfig,
}

fn one() -> u32 {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PomisFile {
    sets: Vec<Vec<String>>,
}

/// A config with its file references resolved and loaded.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    /// Output directory, resolved like the other paths.
    pub out: PathBuf,
    pub scm_path: PathBuf,
    pub pomis_path: Option<PathBuf>,
    pub template: ScmTemplate,
    pub pomis: Option<Vec<InterventionSet>>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: ExperimentConfig =
            toml::from_str(&src).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((config, base))
    }

    pub fn horizons(&self) -> Result<Vec<usize>> {
        let horizons = match &self.horizon {
            Horizon::Uniform(n) => vec![*n; self.trials],
            Horizon::PerTrial(v) => {
                if v.len() != self.trials {
                    bail!("{} horizons given for {} trials", v.len(), self.trials);
                }
                v.clone()
            }
        };
        if horizons.contains(&0) {
            bail!("horizons must be positive");
        }
        Ok(horizons)
    }

    pub fn check(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.replicates == 0 {
            bail!("replicates must be at least 1");
        }
        if self.jobs == Some(0) {
            bail!("jobs must be at least 1");
        }
        self.horizons()?;
        Ok(())
    }

    pub fn policy_kind(&self) -> Result<PolicyKind> {
        Ok(match self.policy.kind {
            PolicyName::Ts => PolicyKind::Thompson,
            PolicyName::Klucb => {
                let tolerance = self.policy.tolerance.unwrap_or(DEFAULT_TOLERANCE);
                if !(tolerance > 0.0) {
                    bail!("KL-UCB tolerance must be positive");
                }
                PolicyKind::KlUcb { tolerance }
            }
        })
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            horizons: self.horizons()?,
            policy: self.policy_kind()?,
            window: self.window,
            estimation: match self.estimation.kind {
                EstimationKind::Oracle => Estimation::OracleSem,
                EstimationKind::Observational => Estimation::Observational {
                    samples: self.estimation.samples,
                    smoothing: self.estimation.smoothing,
                },
            },
            sampling: match self.sampling {
                SamplingKind::Table => RewardSampling::Table,
                SamplingKind::Scm => RewardSampling::Scm,
            },
            seed: self.seed,
        })
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Experiment {
    /// Loads the template and POMIS file referenced by `config`. Parse errors
    /// are config errors; structural problems surface when the model compiles.
    pub fn resolve(config: ExperimentConfig, base: &Path) -> Result<Self> {
        config.check()?;
        let scm_path = resolve(base, &config.scm);
        let template = ScmTemplate::load(&scm_path)?;
        let pomis_path = config.arms.pomis_file.as_ref().map(|p| resolve(base, p));
        let pomis = match &pomis_path {
            None => None,
            Some(p) => {
                let src = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let file: PomisFile =
                    toml::from_str(&src).with_context(|| format!("parsing {}", p.display()))?;
                let sets = file
                    .sets
                    .iter()
                    .map(|s| {
                        let names: Vec<&str> = s.iter().map(String::as_str).collect();
                        InterventionSet::named(&template, &names)
                    })
                    .collect::<ccb_core::Result<Vec<_>>>()
                    .with_context(|| format!("POMIS file {}", p.display()))?;
                Some(sets)
            }
        };
        if config.arms.mode == ArmMode::Pomis && pomis.is_none() {
            bail!("arms.mode = \"pomis\" needs arms.pomis_file");
        }
        Ok(Self {
            out: resolve(base, &config.out),
            config,
            scm_path,
            pomis_path,
            template,
            pomis,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (config, base) = ExperimentConfig::load(path)?;
        Self::resolve(config, &base)
    }

    pub fn order(&self) -> Result<Vec<VarId>> {
        match &self.config.arms.order {
            Some(names) => Ok(names
                .iter()
                .map(|n| self.template.var_id(n))
                .collect::<ccb_core::Result<_>>()?),
            None => Ok(self.template.manipulable()),
        }
    }

    pub fn arm_table(&self) -> Result<ArmTable> {
        let order = self.order()?;
        let table = match self.config.arms.mode {
            ArmMode::All => enumerate_all_arms(&self.template, &order)?,
            ArmMode::Mis => mis_arms(&self.template, &order)?,
            ArmMode::Pomis => pomis_from_config(
                &self.template,
                self.pomis.as_deref().unwrap_or_default(),
                &order,
            )?,
        };
        Ok(match (&self.pomis, self.config.arms.mode) {
            (Some(sets), ArmMode::All | ArmMode::Mis) => {
                // Validate the configured sets even when they only flag arms.
                pomis_from_config(&self.template, sets, &order)?;
                table.with_pomis_flags(sets)
            }
            _ => table,
        })
    }

    pub fn problem(&self) -> Result<Problem> {
        Ok(Problem {
            scm: Scm::compile(self.template.clone())?,
            arms: self.arm_table()?,
        })
    }

    /// Copies the model files into `out` and writes a manifest that refers to
    /// the copies, so the directory alone reproduces the command.
    pub fn write_manifest(&self, out: &Path, command: &str) -> Result<()> {
        let mut manifest = self.config.clone();
        manifest.command = Some(command.to_string());
        manifest.out = PathBuf::from(".");
        manifest.jobs = None;
        fs::copy(&self.scm_path, out.join("scm.toml"))
            .with_context(|| format!("copying {}", self.scm_path.display()))?;
        manifest.scm = PathBuf::from("scm.toml");
        if let Some(p) = &self.pomis_path {
            fs::copy(p, out.join("pomis.toml")).with_context(|| format!("copying {}", p.display()))?;
            manifest.arms.pomis_file = Some(PathBuf::from("pomis.toml"));
        }
        let text = toml::to_string(&manifest).context("serializing manifest")?;
        fs::write(out.join("manifest.toml"), text).context("writing manifest")?;
        Ok(())
    }
}
