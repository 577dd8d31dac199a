//! Experiment configuration: JSON files, built-in scenario names and
//! `key=value` overrides, resolved into fully specified scenarios.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mfc_core::controllers::ControllerKind;
use mfc_core::simkit::{builtin_scenario, Scenario};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const DEFAULT_OUTPUT_DIR: &str = "out";

/// Artifacts written per run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Emit {
    pub trace: bool,
    pub report: bool,
    pub plotdata: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Self {
            trace: true,
            report: true,
            plotdata: false,
        }
    }
}

fn all_controllers() -> Vec<ControllerKind> {
    ControllerKind::ALL.to_vec()
}

/// Expands every scenario over adhesion values and controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub mu: Vec<f64>,
    #[serde(default = "all_controllers")]
    pub controllers: Vec<ControllerKind>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    jobs: Option<usize>,
    #[serde(default)]
    emit: Emit,
    scenarios: Vec<Value>,
    #[serde(default)]
    grid: Option<Grid>,
}

/// One `--override` assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
    raw: String,
}

impl Override {
    /// Parses `a.b.c=value`; the value is read as JSON, falling back to a
    /// plain string.
    pub fn parse(s: &str) -> Result<Self> {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{s}` is not of the form key=value"))?;
        let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
        if path.iter().any(String::is_empty) {
            bail!("override `{s}` has an empty key segment");
        }
        let value = serde_json::from_str(value.trim())
            .unwrap_or_else(|_| Value::String(value.trim().to_string()));
        Ok(Self {
            path,
            value,
            raw: s.to_string(),
        })
    }

    fn apply(&self, target: &mut Value) -> Result<()> {
        let mut node = target;
        for (i, seg) in self.path.iter().enumerate() {
            let obj = node.as_object_mut().ok_or_else(|| {
                anyhow!(
                    "override `{}`: `{}` is not an object",
                    self.raw,
                    self.path[..i].join(".")
                )
            })?;
            if i + 1 == self.path.len() {
                obj.insert(seg.clone(), self.value.clone());
                return Ok(());
            }
            node = obj
                .entry(seg.clone())
                .or_insert_with(|| Value::Object(Default::default()));
        }
        Ok(())
    }
}

const TAGS: [&str; 3] = ["kind", "mode", "type"];

/// Deep merge of `patch` into `base`. Objects carrying a different enum tag
/// replace the base instead of merging into it.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            let retagged = TAGS
                .iter()
                .any(|t| matches!((b.get(*t), p.get(*t)), (Some(x), Some(y)) if x != y));
            if retagged {
                *b = p;
                return;
            }
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn named(name: &str) -> Result<Scenario> {
    builtin_scenario(name)
        .ok_or_else(|| anyhow!("unknown scenario `{name}` (see `mfc-lab list-scenarios`)"))
}

/// Resolves a scenario entry: a built-in name, or an object merged over the
/// defaults (or over the built-in named by its `base` key), then overrides.
pub fn resolve_scenario(entry: &Value, overrides: &[Override]) -> Result<Scenario> {
    let mut value = match entry {
        Value::String(name) => serde_json::to_value(named(name)?)?,
        Value::Object(obj) => {
            let mut obj = obj.clone();
            let base = match obj.remove("base") {
                Some(Value::String(name)) => named(&name)?,
                Some(other) => bail!("`base` must be a scenario name, got {other}"),
                None => Scenario::default(),
            };
            let mut v = serde_json::to_value(base)?;
            merge(&mut v, Value::Object(obj));
            v
        }
        other => bail!("scenario entries must be names or objects, got {other}"),
    };
    for o in overrides {
        o.apply(&mut value)?;
    }
    let label = value
        .get("name")
        .and_then(Value::as_str)
        .unwrap_or("<unnamed>")
        .to_string();
    let scn: Scenario =
        serde_json::from_value(value).with_context(|| format!("scenario `{label}`"))?;
    scn.validate()
        .with_context(|| format!("scenario `{label}`"))?;
    Ok(scn)
}

/// A fully resolved experiment. Serialized verbatim into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub emit: Emit,
    pub overrides: Vec<String>,
    pub grid: Option<Grid>,
    pub scenarios: Vec<Scenario>,
}

/// One run of an experiment and the scenario it was expanded from.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRun {
    pub group: String,
    pub scenario: Scenario,
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[Override]) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let raw: RawConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        if raw.scenarios.is_empty() {
            bail!("config {}: `scenarios` is empty", path.display());
        }
        let scenarios = raw
            .scenarios
            .iter()
            .map(|e| resolve_scenario(e, overrides))
            .collect::<Result<Vec<_>>>()
            .with_context(|| format!("in config {}", path.display()))?;
        let cfg = Self {
            output_dir: raw.output_dir.unwrap_or_else(|| DEFAULT_OUTPUT_DIR.into()),
            jobs: raw.jobs.unwrap_or(0),
            emit: raw.emit,
            overrides: overrides.iter().map(|o| o.raw.clone()).collect(),
            grid: raw.grid,
            scenarios,
        };
        cfg.check()?;
        Ok(cfg)
    }

    /// Single built-in scenario with overrides.
    pub fn from_name(name: &str, overrides: &[Override]) -> Result<Self> {
        let cfg = Self {
            output_dir: DEFAULT_OUTPUT_DIR.into(),
            jobs: 0,
            emit: Emit::default(),
            overrides: overrides.iter().map(|o| o.raw.clone()).collect(),
            grid: None,
            scenarios: vec![resolve_scenario(
                &Value::String(name.to_string()),
                overrides,
            )?],
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn with_grid(mut self, grid: Grid) -> Result<Self> {
        self.grid = Some(grid);
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        if let Some(g) = &self.grid {
            if g.mu.is_empty() || g.controllers.is_empty() {
                bail!("grid needs at least one mu and one controller");
            }
            if let Some(mu) =
                g.mu.iter()
                    .find(|m| !(m.is_finite() && **m > 0.0 && **m <= 1.0))
            {
                bail!("grid mu {mu} outside (0, 1]");
            }
        }
        let mut seen = HashSet::new();
        for run in self.runs() {
            if !seen.insert(run.scenario.name.clone()) {
                bail!("duplicate run name `{}`", run.scenario.name);
            }
        }
        Ok(())
    }

    /// Every run, in a stable order.
    pub fn runs(&self) -> Vec<PlannedRun> {
        let mut out = Vec::new();
        for base in &self.scenarios {
            match &self.grid {
                None => out.push(PlannedRun {
                    group: base.name.clone(),
                    scenario: base.clone(),
                }),
                Some(g) => {
                    for &mu in &g.mu {
                        for &c in &g.controllers {
                            let mut s = base.clone();
                            s.mu = mu;
                            s.controller = c;
                            s.name = format!("{}_{}_mu{}", base.name, c, mu);
                            out.push(PlannedRun {
                                group: base.name.clone(),
                                scenario: s,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn override_parsing() {
        let o = Override::parse("vehicle.m_kg=1500").unwrap();
        assert_eq!(o.path, ["vehicle", "m_kg"]);
        assert_eq!(o.value, json!(1500));
        assert_eq!(
            Override::parse("controller=pid").unwrap().value,
            json!("pid")
        );
        assert!(Override::parse("mu").is_err());
        assert!(Override::parse("a..b=1").is_err());
    }

    #[test]
    fn merge_respects_enum_tags() {
        let mut base = json!({"track": {"kind": "track_like", "transition_m": 50.0}, "mu": 1.0});
        merge(
            &mut base,
            json!({"track": {"kind": "circle", "radius_m": 30.0, "length_m": 100.0}}),
        );
        assert_eq!(
            base["track"],
            json!({"kind": "circle", "radius_m": 30.0, "length_m": 100.0})
        );
        merge(&mut base, json!({"track": {"radius_m": 40.0}}));
        assert_eq!(base["track"]["radius_m"], json!(40.0));
        assert_eq!(base["mu"], json!(1.0));
    }

    #[test]
    fn resolve_named_and_partial() {
        let o = [Override::parse("mu=0.3").unwrap()];
        let s = resolve_scenario(&json!("circle_mfc"), &o).unwrap();
        assert_eq!(s.mu, 0.3);
        let s = resolve_scenario(
            &json!({"base": "circle_pid", "name": "c", "fs_hz": 100.0}),
            &[],
        )
        .unwrap();
        assert_eq!(s.controller, ControllerKind::Pid);
        assert_eq!(s.fs_hz, 100.0);
        let err = resolve_scenario(&json!({"fs": 100.0}), &[]).unwrap_err();
        assert!(format!("{err:#}").contains("fs"));
    }

    #[test]
    fn grid_expansion_names() {
        let cfg = ExperimentConfig::from_name("tracklike_mfc", &[])
            .unwrap()
            .with_grid(Grid {
                mu: vec![1.0, 0.7],
                controllers: all_controllers(),
            })
            .unwrap();
        let runs = cfg.runs();
        assert_eq!(runs.len(), 6);
        assert_eq!(runs[0].scenario.name, "tracklike_mfc_mfc_mu1");
        assert!(runs.iter().all(|r| r.group == "tracklike_mfc"));
    }
}
