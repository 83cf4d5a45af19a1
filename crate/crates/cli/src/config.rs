//! Experiment configuration: profile defaults, a TOML file and `--set`
//! overrides, merged in that order and then validated into typed sections.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use hsi_core::circuit::{OptimizerConfig, SelectionRule};
use hsi_core::dynamics::TimeGrid;
use hsi_core::{ModelFamily, ProductState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Ci,
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Profile::Paper),
            "ci" => Ok(Profile::Ci),
            _ => Err(format!("unknown profile `{s}` (expected paper or ci)")),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Ci => "ci",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Quench,
    NScaling,
    Disorder,
    Train,
    Bounds,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Quench => "quench",
            Command::NScaling => "nscaling",
            Command::Disorder => "disorder",
            Command::Train => "train",
            Command::Bounds => "bounds",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `u1`, `z2` or `u1-disordered`.
    pub family: String,
    pub sites: usize,
    pub gamma: f64,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub h: Option<f64>,
    pub delta1: Option<f64>,
    pub mu: Option<f64>,
    /// Disorder width `W`.
    pub disorder: Option<f64>,
}

impl ModelSection {
    pub fn family(&self) -> Result<ModelFamily, String> {
        let mut fam = match self.family.as_str() {
            "u1" => ModelFamily::u1(),
            "z2" => ModelFamily::z2(),
            "u1-disordered" => ModelFamily::u1_disordered(),
            other => {
                return Err(format!(
                    "model.family: unknown family `{other}` (expected u1, z2 or u1-disordered)"
                ))
            }
        };
        let misplaced = |key: &str| Err(format!("model.{key} does not apply to family `{}`", self.family));
        match &mut fam {
            ModelFamily::U1 { lambda1, lambda2, h } => {
                if self.delta1.is_some() {
                    return misplaced("delta1");
                }
                if self.mu.is_some() {
                    return misplaced("mu");
                }
                if self.disorder.is_some() {
                    return misplaced("disorder");
                }
                *lambda1 = self.lambda1.unwrap_or(*lambda1);
                *lambda2 = self.lambda2.unwrap_or(*lambda2);
                *h = self.h.unwrap_or(*h);
            }
            ModelFamily::Z2 { delta1, .. } => {
                for (k, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("h", self.h), ("mu", self.mu)] {
                    if v.is_some() {
                        return misplaced(k);
                    }
                }
                *delta1 = self.delta1.unwrap_or(*delta1);
            }
            ModelFamily::U1Disordered { mu, .. } => {
                for (k, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("h", self.h), ("delta1", self.delta1)] {
                    if v.is_some() {
                        return misplaced(k);
                    }
                }
                *mu = self.mu.unwrap_or(*mu);
            }
        }
        match self.disorder {
            Some(w) => fam.with_disorder(w).map_err(|e| format!("model.disorder: {e}")),
            None => Ok(fam),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    /// `F`, `AF` or `FlipOne`.
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub sizes: Vec<usize>,
    pub gammas: Vec<f64>,
    pub threshold: f64,
    /// Also fit late-time entropy against `L` in the quench recipe.
    pub entropy_scaling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub realizations: usize,
    pub seed: u64,
    pub checkpoint_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    pub layers: usize,
    /// `n-set` or `top-k`.
    pub rule: String,
    pub threshold: f64,
    pub k: Option<usize>,
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub patience: usize,
    pub tol: f64,
    pub restarts: usize,
    pub restart_seed: u64,
    pub saddle_kick: f64,
}

impl CircuitSection {
    pub fn rule(&self) -> Result<SelectionRule, String> {
        match self.rule.as_str() {
            "n-set" => Ok(SelectionRule::NSet {
                threshold: self.threshold,
            }),
            "top-k" => match self.k {
                Some(k) if k > 0 => Ok(SelectionRule::TopK { k }),
                _ => Err("circuit.k must be a positive integer for rule top-k".to_string()),
            },
            other => Err(format!("circuit.rule: unknown rule `{other}` (expected n-set or top-k)")),
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.learning_rate,
            max_iterations: self.max_iterations,
            patience: self.patience,
            tol: self.tol,
            restarts: self.restarts,
            restart_seed: self.restart_seed,
            saddle_kick: self.saddle_kick,
            ..OptimizerConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    /// Axis of the single-site observable: `X`, `Y` or `Z`.
    pub axis: String,
    /// Observable site; defaults to `L/2`.
    pub site: Option<usize>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub model: ModelSection,
    pub state: StateSection,
    pub grid: GridSection,
    pub sweep: SweepSection,
    pub ensemble: EnsembleSection,
    pub circuit: CircuitSection,
    pub bounds: BoundsSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn state(&self) -> Result<ProductState, String> {
        self.state.kind.parse().map_err(|e| format!("state.kind: {e}"))
    }

    pub fn grid(&self) -> Result<TimeGrid<f64>, String> {
        TimeGrid::linear(self.grid.start, self.grid.end, self.grid.points)
            .map_err(|e| format!("grid: {e}"))
    }

    #[cfg(test)]
    pub fn to_table(&self) -> Table {
        Table::try_from(self).expect("config serializes to a table")
    }

    /// Checks everything the recipes will parse later, so bad input fails
    /// before any computation.
    pub fn validate(&self) -> Result<(), String> {
        self.model.family()?;
        self.state()?;
        self.grid()?;
        self.circuit.rule()?;
        if !(self.sweep.threshold > 0.0 && self.sweep.threshold < 1.0) {
            return Err("sweep.threshold must lie in (0, 1)".to_string());
        }
        if self.sweep.sizes.is_empty() || self.sweep.gammas.is_empty() {
            return Err("sweep.sizes and sweep.gammas must be non-empty".to_string());
        }
        if self.ensemble.realizations == 0 {
            return Err("ensemble.realizations must be at least 1".to_string());
        }
        if self.circuit.layers == 0 {
            return Err("circuit.layers must be at least 1".to_string());
        }
        self.circuit.optimizer().validate().map_err(|e| format!("circuit: {e}"))?;
        if !matches!(self.bounds.axis.as_str(), "X" | "Y" | "Z") {
            return Err(format!("bounds.axis: expected X, Y or Z, got `{}`", self.bounds.axis));
        }
        Ok(())
    }
}

const COMMON: &str = r#"
[model]
family = "u1"
sites = 12
gamma = 0.9

[state]
kind = "F"

[grid]
start = 0.0
end = 50.0
points = 501

[sweep]
sizes = [8, 10, 12]
gammas = [0.9]
threshold = 0.8
entropy_scaling = false

[ensemble]
realizations = 50
seed = 20240917

[circuit]
layers = 5
rule = "n-set"
threshold = 0.8
learning_rate = 0.02
max_iterations = 2000
patience = 100
tol = 1e-6
restarts = 0
restart_seed = 0
saddle_kick = 0.01

[bounds]
axis = "Z"
threshold = 0.8

[output]
"#;

const PAPER: &str = r#"
[sweep]
sizes = [8, 10, 12, 14]

[ensemble]
realizations = 400

[circuit]
max_iterations = 8000
"#;

fn command_defaults(command: Command, profile: Profile) -> &'static str {
    match (command, profile) {
        (Command::Disorder, Profile::Paper) => "[model]\nfamily = \"u1-disordered\"\nsites = 14\n",
        (Command::Disorder, Profile::Ci) => "[model]\nfamily = \"u1-disordered\"\n",
        (Command::Train | Command::Bounds, _) => "[state]\nkind = \"FlipOne\"\n",
        _ => "",
    }
}

/// Recursively overlays `top` on `base`.
pub fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Applies `a.b.c=value`; the value is read as TOML, falling back to a bare
/// string.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("--set expects key=value, got `{assignment}`"))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(format!("--set has an empty key in `{assignment}`"));
    }
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut node = table;
    for part in parts {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| format!("--set {key}: `{part}` is not a section"))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

fn parse_toml(text: &str, origin: &str) -> Result<Table, String> {
    text.parse::<Table>().map_err(|e| format!("{origin}: {e}"))
}

/// Reads a TOML config, or the `config` block of a metadata JSON file.
pub fn read_config_file(path: &Path) -> Result<Table, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut block = json
            .get("config")
            .cloned()
            .ok_or_else(|| format!("{}: no `config` block", path.display()))?;
        drop_nulls(&mut block);
        return Table::try_from(block).map_err(|e| format!("{}: {e}", path.display()));
    }
    parse_toml(&text, &path.display().to_string())
}

/// TOML has no null; an absent key means the same thing.
fn drop_nulls(v: &mut serde_json::Value) {
    if let serde_json::Value::Object(map) = v {
        map.retain(|_, x| !x.is_null());
        map.values_mut().for_each(drop_nulls);
    }
}

/// Profile defaults, then the file, then the overrides; `profile` on the
/// command line wins over one named in the file.
pub fn resolve(
    command: Command,
    file: Option<Table>,
    overrides: &[String],
    profile: Option<Profile>,
) -> Result<ExperimentConfig, String> {
    let mut user = file.unwrap_or_default();
    for o in overrides {
        apply_override(&mut user, o)?;
    }
    let profile = match profile {
        Some(p) => p,
        None => match user.get("profile") {
            Some(Value::String(s)) => s.parse()?,
            Some(other) => return Err(format!("profile: expected a string, got `{other}`")),
            None => Profile::Ci,
        },
    };
    user.insert("profile".to_string(), Value::String(profile.to_string()));

    let mut table = parse_toml(COMMON, "built-in defaults")?;
    if profile == Profile::Paper {
        merge(&mut table, parse_toml(PAPER, "paper profile")?);
    }
    merge(&mut table, parse_toml(command_defaults(command, profile), "command defaults")?);
    merge(&mut table, user);
    let cfg: ExperimentConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| format!("config: {e}"))?;
    cfg.validate()?;
    Ok(cfg)
}
