//! Scenario documents: what to run, with which model, settings and seed.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use bellsim_core::analysis::{ContractVariant, SweepSettings};
use bellsim_core::models::controls::{BrokenMarginal, SettingLeak};
use bellsim_core::models::{
    asymmetric_variant2, coincidence_embedding, deterministic_sign, finite_guessing,
    one_sided_detection, partition_guessing, role_mixture_symmetric, CoincidenceParams,
    FiniteGuessParams, PartitionParams, DEFAULT_SPREAD, DEFAULT_WINDOW,
};
use bellsim_core::{Direction, Flavor, Model, SelectionRule, SettingsQuad};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCENARIO_SCHEMA: &str = "bellsim/scenario/v1";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed scenario {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("unsupported schema {found:?} (expected {SCENARIO_SCHEMA:?})")]
    Schema { found: String },
    #[error("{0}")]
    Invalid(String),
}

/// A model and its parameters, selected by `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", deny_unknown_fields)]
pub enum ModelSpec {
    #[serde(rename = "sign")]
    Sign,
    #[serde(rename = "guess-finite")]
    GuessFinite {
        #[serde(default)]
        setting_set_a: Option<Vec<Direction>>,
        #[serde(default)]
        setting_set_b: Option<Vec<Direction>>,
    },
    #[serde(rename = "guess-partition")]
    GuessPartition {
        #[serde(default = "default_cells")]
        k: usize,
    },
    #[serde(rename = "one-sided")]
    OneSided,
    #[serde(rename = "role-mixture")]
    RoleMixture,
    #[serde(rename = "variant2-asym")]
    Variant2Asym,
    #[serde(rename = "coincidence")]
    Coincidence {
        inner: Box<ModelSpec>,
        #[serde(default = "default_window")]
        c: f64,
        #[serde(default = "default_spread")]
        spread: f64,
    },
    #[serde(rename = "control-broken-marginal")]
    ControlBrokenMarginal,
    /// Reads the other station's most recent setting. Shared mutable state
    /// makes its output depend on trial order.
    #[serde(rename = "control-setting-leak")]
    ControlSettingLeak,
}

fn default_cells() -> usize {
    8
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

fn default_spread() -> f64 {
    DEFAULT_SPREAD
}

impl ModelSpec {
    pub fn build(&self) -> bellsim_core::Result<Arc<dyn Model>> {
        Ok(match self {
            ModelSpec::Sign => Arc::new(deterministic_sign()),
            ModelSpec::GuessFinite {
                setting_set_a,
                setting_set_b,
            } => {
                let defaults = FiniteGuessParams::planar_quad();
                Arc::new(finite_guessing(FiniteGuessParams {
                    setting_set_a: setting_set_a.clone().unwrap_or(defaults.setting_set_a),
                    setting_set_b: setting_set_b.clone().unwrap_or(defaults.setting_set_b),
                })?)
            }
            ModelSpec::GuessPartition { k } => {
                Arc::new(partition_guessing(PartitionParams::registered(*k)?)?)
            }
            ModelSpec::OneSided => Arc::new(one_sided_detection()),
            ModelSpec::RoleMixture => Arc::new(role_mixture_symmetric()),
            ModelSpec::Variant2Asym => Arc::new(asymmetric_variant2()),
            ModelSpec::Coincidence { inner, c, spread } => {
                Arc::new(coincidence_embedding(CoincidenceParams {
                    inner: inner.build()?,
                    c: *c,
                    spread: *spread,
                })?)
            }
            ModelSpec::ControlBrokenMarginal => Arc::new(BrokenMarginal),
            ModelSpec::ControlSettingLeak => Arc::new(SettingLeak::new()),
        })
    }
}

/// Measurement settings, either as explicit unit vectors or as angles in
/// degrees in the x-z plane measured from +z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SettingsSpec {
    Pair {
        a: Direction,
        b: Direction,
    },
    PlanarPair {
        a_deg: f64,
        b_deg: f64,
    },
    Quad(SettingsQuad),
    PlanarQuad {
        #[serde(default)]
        degrees: Option<[f64; 4]>,
    },
    Audit {
        a: Direction,
        b1: Direction,
        b2: Direction,
    },
}

impl SettingsSpec {
    pub fn pair(&self) -> Result<(Direction, Direction), ConfigError> {
        match *self {
            SettingsSpec::Pair { a, b } => Ok((a, b)),
            SettingsSpec::PlanarPair { a_deg, b_deg } => {
                Ok((Direction::planar_deg(a_deg), Direction::planar_deg(b_deg)))
            }
            _ => Err(ConfigError::Invalid(
                "this command needs settings of kind pair or planar_pair".into(),
            )),
        }
    }

    pub fn quad(&self) -> Result<SettingsQuad, ConfigError> {
        match *self {
            SettingsSpec::Quad(q) => Ok(q),
            SettingsSpec::PlanarQuad { degrees: None } => Ok(SettingsQuad::standard_planar()),
            SettingsSpec::PlanarQuad {
                degrees: Some([a, ap, b, bp]),
            } => Ok(SettingsQuad::planar_deg(a, ap, b, bp)),
            _ => Err(ConfigError::Invalid(
                "this command needs settings of kind quad or planar_quad".into(),
            )),
        }
    }

    pub fn audit(&self) -> Result<(Direction, Direction, Direction), ConfigError> {
        match *self {
            SettingsSpec::Audit { a, b1, b2 } => Ok((a, b1, b2)),
            _ => Err(ConfigError::Invalid(
                "audit-locality needs settings of kind audit".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_contract_tol")]
    pub contract: f64,
}

fn default_contract_tol() -> f64 {
    0.01
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            contract: default_contract_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractSpec {
    #[serde(default = "default_variant")]
    pub variant: ContractVariant,
}

fn default_variant() -> ContractVariant {
    ContractVariant::Full
}

impl Default for ContractSpec {
    fn default() -> Self {
        Self {
            variant: default_variant(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub ks: Vec<usize>,
    pub settings: SweepSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<SettingsSpec>,
    pub trials: u64,
    /// Required once flag overrides are applied.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Defaults to the rule matching the model's flavor, with the default
    /// window for time-tagged models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionRule>,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub contract: ContractSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

/// Scalar fields a command line may override.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { source, .. } => ConfigError::Parse {
                path: path.to_owned(),
                source,
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: PathBuf::from("<inline>"),
            source,
        })?;
        if config.schema != SCENARIO_SCHEMA {
            return Err(ConfigError::Schema {
                found: config.schema,
            });
        }
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
        if let Some(n) = o.trials {
            self.trials = n;
        }
        if let Some(out) = &o.out {
            self.outputs.report = Some(out.clone());
        }
        if let Some(csv) = &o.csv {
            self.outputs.csv = Some(csv.clone());
        }
    }

    /// Checks the invariants every command relies on and returns the seed.
    pub fn validate(&self) -> Result<u64, ConfigError> {
        let seed = self.seed.ok_or_else(|| {
            ConfigError::Invalid("no seed given (set \"seed\" or pass --seed)".into())
        })?;
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        let tol = self.tolerances.contract;
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "contract tolerance must be positive, got {tol}"
            )));
        }
        Ok(seed)
    }

    pub fn selection_for(&self, model: &dyn Model) -> SelectionRule {
        self.selection.unwrap_or(match model.flavor() {
            Flavor::Binary => SelectionRule::Binary,
            Flavor::Time => SelectionRule::Window { c: DEFAULT_WINDOW },
        })
    }

    /// Hex SHA-256 of the compact JSON encoding, with output paths cleared so
    /// that the hash identifies the experiment rather than where it was
    /// written.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.outputs = Outputs::default();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
