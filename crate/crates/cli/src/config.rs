//! Experiment configuration: schema, loading, validation and digests.
//!
//! The primary encoding is TOML; JSON files (`.json`) encode the same schema.
//! See `docs/config.md` for the grammar.

use std::path::{Path, PathBuf};

use poc_core::measures::MeasureKind;
use poc_core::solver::DEFAULT_SCENARIO_CAP;
use poc_core::predictors::AR_HISTORY_LEN;
use poc_experiments::hev::HevConfig;
use poc_experiments::toy::ToyConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Default tolerance of the monotonicity audits written by `run`.
pub const DEFAULT_AUDIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Toy,
    Hev,
    Custom,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Toy => "toy",
            Self::Hev => "hev",
            Self::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Master seed; only sampled (`custom` with `samples > 0`) runs draw from it.
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_audit_tolerance")]
    pub audit_tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy: Option<ToyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hev: Option<HevConfig>,
    /// Driving cycle CSV (`t,v` at 1 s) for `hev`; the bundled cycle when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomConfig>,
}

fn default_audit_tolerance() -> f64 {
    DEFAULT_AUDIT_TOLERANCE
}

/// Finite tabular environment driving a scalar linear-quadratic plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomConfig {
    pub environment: TabularEnvironment,
    pub system: LinearSystem,
    pub predictors: Vec<CustomPredictorEntry>,
    #[serde(default = "all_measures")]
    pub measures: Vec<String>,
    /// `0`: exact expectations over the truth; otherwise a sampled dataset of this size.
    #[serde(default)]
    pub samples: usize,
}

fn all_measures() -> Vec<String> {
    MeasureKind::ALL.iter().map(|k| k.name().to_string()).collect()
}

/// Tables indexed `[z][r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularEnvironment {
    pub z0_probs: Vec<f64>,
    pub r_probs: Vec<f64>,
    pub horizon: usize,
    pub transition: Vec<Vec<usize>>,
    pub observation: Vec<Vec<Vec<f64>>>,
    pub disturbance: Vec<Vec<Vec<f64>>>,
}

/// `x' = clamp(a x + b . w + c u)` to the state grid, with
/// `q (x - target)^2 + r u^2` per stage and `q_f (x - target)^2` at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearSystem {
    pub a: f64,
    pub b: Vec<f64>,
    pub c: f64,
    pub x0: f64,
    pub target: f64,
    pub state_weight: f64,
    pub control_weight: f64,
    pub terminal_weight: f64,
    pub controls: Axis,
    pub state_grid: Axis,
    pub refine_controls: bool,
    pub scenario_cap: usize,
}

impl Default for LinearSystem {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: vec![1.0],
            c: 1.0,
            x0: 0.0,
            target: 0.0,
            state_weight: 1.0,
            control_weight: 0.0,
            terminal_weight: 1.0,
            controls: Axis {
                min: -3.0,
                max: 3.0,
                points: 61,
            },
            state_grid: Axis {
                min: -10.0,
                max: 10.0,
                points: 201,
            },
            refine_controls: false,
            scenario_cap: DEFAULT_SCENARIO_CAP,
        }
    }
}

/// `points` equally spaced values on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| if i + 1 == self.points { self.max } else { self.min + i as f64 * step })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomPredictorEntry {
    pub id: String,
    #[serde(flatten)]
    pub kind: CustomPredictorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CustomPredictorKind {
    /// The observable truth.
    Truth,
    /// The unconditional law of `w`, ignoring the observation.
    Unconditional,
    /// `(1 - epsilon) truth + epsilon uniform(support of the unconditional law)`.
    EpsilonMix { epsilon: f64 },
    /// One `EpsilonMix` predictor per value, named `<id>@<epsilon>`.
    EpsilonSweep { epsilons: Vec<f64> },
    /// A fixed belief, whatever the observation.
    Fixed { scenarios: Vec<FixedScenario> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedScenario {
    pub sequence: Vec<Vec<f64>>,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    pub fn of(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Toml,
        }
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, ConfigFormat::of(path))
}

pub fn parse_config(text: &str, format: ConfigFormat) -> Result<ExperimentConfig, CliError> {
    let value: serde_json::Value = match format {
        ConfigFormat::Toml => toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?,
        ConfigFormat::Json => serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?,
    };
    // Entries first, so that a bad one is reported by index and id.
    check_entries::<poc_experiments::hev::PredictorEntry>(&value, "hev")?;
    check_entries::<CustomPredictorEntry>(&value, "custom")?;
    let config: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            CliError::Config(e.inner().to_string())
        } else {
            CliError::Config(format!("field `{path}`: {}", e.inner()))
        }
    })?;
    config.validate()?;
    Ok(config)
}

fn entry_label(block: &str, i: usize, entry: &serde_json::Value) -> String {
    let id = entry.get("id").and_then(|v| v.as_str()).unwrap_or("?");
    format!("predictor entry `{block}.predictors[{i}]` (id `{id}`)")
}

fn check_entries<T: DeserializeOwned>(value: &serde_json::Value, block: &str) -> Result<(), CliError> {
    let Some(entries) = value.get(block).and_then(|b| b.get("predictors")).and_then(|p| p.as_array()) else {
        return Ok(());
    };
    for (i, entry) in entries.iter().enumerate() {
        serde_json::from_value::<T>(entry.clone())
            .map_err(|e| CliError::Config(format!("{}: {e}", entry_label(block, i, entry))))?;
    }
    Ok(())
}

impl ExperimentConfig {
    /// Semantic checks beyond the schema; messages name the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.audit_tolerance >= 0.0 && self.audit_tolerance.is_finite()) {
            return bad(format!("field `audit_tolerance`: must be finite and >= 0, got {}", self.audit_tolerance));
        }
        for (name, present, owner) in [
            ("toy", self.toy.is_some(), ExperimentKind::Toy),
            ("hev", self.hev.is_some(), ExperimentKind::Hev),
            ("cycle", self.cycle.is_some(), ExperimentKind::Hev),
            ("custom", self.custom.is_some(), ExperimentKind::Custom),
        ] {
            if present && owner != self.kind {
                return bad(format!("field `{name}`: not allowed for kind `{}`", self.kind.name()));
            }
        }
        match self.kind {
            ExperimentKind::Toy => self
                .toy_config()
                .validate()
                .map_err(|e| CliError::Config(format!("block `toy`: {e}"))),
            ExperimentKind::Hev => {
                let hev = self.hev_config();
                for (i, p) in hev.predictors.iter().enumerate() {
                    p.predictor(Some([0.0; AR_HISTORY_LEN])).map_err(|e| {
                        CliError::Config(format!("predictor entry `hev.predictors[{i}]` (id `{}`): {e}", p.id))
                    })?;
                }
                hev.validate().map_err(|e| CliError::Config(format!("block `hev`: {e}")))
            }
            ExperimentKind::Custom => match &self.custom {
                Some(c) => c.validate(),
                None => bad("field `custom`: required for kind `custom`".into()),
            },
        }
    }

    /// The toy block, defaulted when absent.
    pub fn toy_config(&self) -> ToyConfig {
        self.toy.clone().unwrap_or_default()
    }

    /// The hev block, defaulted when absent.
    pub fn hev_config(&self) -> HevConfig {
        self.hev.clone().unwrap_or_default()
    }

    /// SHA-256 of the canonical JSON encoding, ignoring the output directory.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

impl CustomConfig {
    pub fn measure_kinds(&self) -> Result<Vec<MeasureKind>, CliError> {
        let mut kinds = Vec::with_capacity(self.measures.len());
        for (i, m) in self.measures.iter().enumerate() {
            let k: MeasureKind = m
                .parse()
                .map_err(|e| CliError::Config(format!("field `custom.measures[{i}]`: {e}")))?;
            if kinds.contains(&k) {
                return Err(CliError::Config(format!("field `custom.measures[{i}]`: duplicate `{m}`")));
            }
            kinds.push(k);
        }
        Ok(kinds)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("field `custom.{field}`: {msg}")));
        self.measure_kinds()?;
        if self.measures.is_empty() {
            return bad("measures", "at least one measure is required".into());
        }
        let env = &self.environment;
        if env.horizon == 0 {
            return bad("environment.horizon", "must be at least 1".into());
        }
        let dim = env.disturbance.first().and_then(|row| row.first()).map_or(0, Vec::len);
        if dim == 0 {
            return bad("environment.disturbance", "entries must be nonempty vectors".into());
        }
        if env.disturbance.iter().flatten().any(|w| w.len() != dim) {
            return bad("environment.disturbance", format!("all entries must have dimension {dim}"));
        }
        let s = &self.system;
        if s.b.len() != dim {
            return bad("system.b", format!("has {} entries for disturbance dimension {dim}", s.b.len()));
        }
        for (field, axis, min_points) in [("system.controls", &s.controls, 1), ("system.state_grid", &s.state_grid, 2)] {
            if axis.points < min_points || !(axis.min <= axis.max) || !axis.min.is_finite() || !axis.max.is_finite() {
                return bad(field, format!("needs min <= max and at least {min_points} points"));
            }
        }
        if !(s.state_grid.min < s.state_grid.max) {
            return bad("system.state_grid", "min must be below max".into());
        }
        if !(s.state_grid.min..=s.state_grid.max).contains(&s.x0) {
            return bad("system.x0", "must lie on the state grid".into());
        }
        if s.scenario_cap == 0 {
            return bad("system.scenario_cap", "must be positive".into());
        }
        if self.predictors.is_empty() {
            return bad("predictors", "list is empty".into());
        }
        let mut ids = Vec::new();
        for (i, p) in self.predictors.iter().enumerate() {
            let label = || format!("predictor entry `custom.predictors[{i}]` (id `{}`)", p.id);
            let eps_ok = |e: f64| (0.0..1.0).contains(&e);
            match &p.kind {
                CustomPredictorKind::EpsilonMix { epsilon } if !eps_ok(*epsilon) => {
                    return Err(CliError::Config(format!("{}: epsilon must lie in [0, 1)", label())));
                }
                CustomPredictorKind::EpsilonSweep { epsilons } if epsilons.is_empty() || !epsilons.iter().all(|e| eps_ok(*e)) => {
                    return Err(CliError::Config(format!("{}: epsilons must be nonempty and in [0, 1)", label())));
                }
                CustomPredictorKind::Fixed { scenarios } if scenarios.is_empty() => {
                    return Err(CliError::Config(format!("{}: scenarios list is empty", label())));
                }
                _ => {}
            }
            ids.extend(expanded_ids(p));
        }
        let mut sorted = ids.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return bad("predictors", format!("duplicate predictor id `{}`", w[0]));
        }
        Ok(())
    }
}

/// Ids of the predictors an entry expands to.
pub fn expanded_ids(entry: &CustomPredictorEntry) -> Vec<String> {
    match &entry.kind {
        CustomPredictorKind::EpsilonSweep { epsilons } => {
            epsilons.iter().map(|e| format!("{}@{e:?}", entry.id)).collect()
        }
        _ => vec![entry.id.clone()],
    }
}

/// Resolves `path` against the directory of the config file.
pub fn relative_to(config_path: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(path)
    }
}
