//! Scenario files.
//!
//! A scenario is a TOML document describing the monitored system, the
//! prediction tuples, the workload and the run parameters. Every section is
//! optional; omitted values fall back to the three-subsystem defaults.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::frf::{parse_rate, StagePolicy, SwsFrfParams};
use crate::monitor::MonitorConfig;
use crate::prognostics::PredictionTuple;
use crate::scheduler::SchedulerConfig;
use crate::simulator::{LifecycleConfig, SimulationConfig, WorkloadProfile};
use crate::SubsystemId;

/// Grid tolerance for "is a multiple of δ" checks.
const GRID_EPS: f64 = 1e-9;

/// A rate given as a number or as `"1/N"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum Rate {
    Number(f64),
    Text(String),
}

impl Rate {
    fn value(&self, field: &str) -> Result<f64> {
        match self {
            Rate::Number(v) => Ok(*v),
            Rate::Text(s) => parse_rate(s).ok_or_else(|| Error::config(field, format!("`{s}` is not a rate"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubsystemEntry {
    id: u32,
    alpha: Option<Rate>,
    beta: Option<Rate>,
    lambda1: Option<Rate>,
    lambda2: Option<Rate>,
    k0: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct MonitorSection {
    delta: f64,
    stage_policy: StagePolicy,
    rejuvenation: bool,
}

impl Default for MonitorSection {
    fn default() -> Self {
        Self {
            delta: 0.5,
            stage_policy: StagePolicy::default(),
            rejuvenation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    required: usize,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self { required: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_duration")]
    duration_hours: f64,
    #[serde(default = "default_start_hour")]
    start_hour: f64,
    #[serde(default)]
    monitor: MonitorSection,
    #[serde(default)]
    system: SystemSection,
    #[serde(default)]
    lifecycle: LifecycleConfig,
    #[serde(default)]
    subsystems: Vec<SubsystemEntry>,
    #[serde(default)]
    tuples: Vec<PredictionTuple>,
    #[serde(default)]
    workload: Option<WorkloadProfile>,
    /// Expected hourly load for the slot search; defaults to `workload.cpu_load`.
    #[serde(default)]
    load_forecast: Option<Vec<f64>>,
    #[serde(default)]
    scheduler: SchedulerConfig,
}

fn default_duration() -> f64 {
    168.0
}

fn default_start_hour() -> f64 {
    6.0
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub description: String,
    pub seed: u64,
    pub duration_hours: f64,
    pub simulation: SimulationConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::from_toml_str("").expect("defaults are valid")
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| format!("byte {}..{}", s.start, s.end)).unwrap_or_default();
            Error::Config {
                field: if field.is_empty() { "<document>".into() } else { field },
                message: e.message().to_string(),
            }
        })?;
        raw.build()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn monitor(&self) -> &MonitorConfig {
        &self.simulation.monitor
    }
}

impl RawScenario {
    fn build(self) -> Result<ScenarioConfig> {
        if !(self.duration_hours.is_finite() && self.duration_hours >= 0.0) {
            return Err(Error::config("duration_hours", "must be a finite number >= 0"));
        }
        if !(0.0..24.0).contains(&self.start_hour) {
            return Err(Error::config("start_hour", format!("{} is not an hour in [0, 24)", self.start_hour)));
        }
        let delta = self.monitor.delta;
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::config("monitor.delta", "must be > 0"));
        }
        self.lifecycle.validate()?;
        self.scheduler.validate()?;

        let subsystems = if self.subsystems.is_empty() {
            (1..=3).map(|i| (SubsystemId(i), SwsFrfParams::table(i).expect("table entry"))).collect()
        } else {
            let mut seen = BTreeSet::new();
            let mut out = std::collections::BTreeMap::new();
            for (i, entry) in self.subsystems.iter().enumerate() {
                let field = format!("subsystems[{i}]");
                if entry.id == 0 {
                    return Err(Error::config(format!("{field}.id"), "ids start at 1"));
                }
                if !seen.insert(entry.id) {
                    return Err(Error::config(format!("{field}.id"), format!("duplicate id {}", entry.id)));
                }
                let params = resolve_params(entry, &field)?;
                params.validate(&field)?;
                out.insert(SubsystemId(entry.id), params);
            }
            out
        };
        let n = subsystems.len();
        if !(1..=n).contains(&self.system.required) {
            return Err(Error::config(
                "system.required",
                format!("{} is not in 1..={n}", self.system.required),
            ));
        }

        let tuples = if self.tuples.is_empty() { PredictionTuple::defaults() } else { self.tuples };
        validate_tuples(&tuples, delta, &self.lifecycle)?;

        let workload = self.workload.unwrap_or_else(WorkloadProfile::heavy_stress);
        workload.validate()?;
        let load_profile = self.load_forecast.unwrap_or_else(|| workload.cpu_load.clone());
        if load_profile.len() != 24 {
            return Err(Error::config("load_forecast", "expected 24 hourly values"));
        }
        if let Some((h, v)) = load_profile.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::config(format!("load_forecast[{h}]"), format!("load {v} outside [0, 1]")));
        }

        let monitor = MonitorConfig {
            delta,
            subsystems,
            required: self.system.required,
            tuples,
            stage_policy: self.monitor.stage_policy,
            scheduler: self.scheduler,
            start_hour: self.start_hour,
            load_profile,
            rejuvenation: self.monitor.rejuvenation,
        };
        let simulation = SimulationConfig {
            monitor,
            lifecycle: self.lifecycle,
            workload,
        };
        simulation.validate()?;
        Ok(ScenarioConfig {
            name: self.name.unwrap_or_else(|| "unnamed".into()),
            description: self.description.unwrap_or_default(),
            seed: self.seed,
            duration_hours: self.duration_hours,
            simulation,
        })
    }
}

fn resolve_params(entry: &SubsystemEntry, field: &str) -> Result<SwsFrfParams> {
    let base = SwsFrfParams::table(entry.id);
    let rate = |name: &str, given: &Option<Rate>, fallback: Option<f64>| -> Result<f64> {
        let f = format!("{field}.{name}");
        match (given, fallback) {
            (Some(r), _) => r.value(&f),
            (None, Some(v)) => Ok(v),
            (None, None) => Err(Error::config(f, format!("required: id {} has no default", entry.id))),
        }
    };
    Ok(SwsFrfParams {
        alpha: rate("alpha", &entry.alpha, base.map(|b| b.alpha))?,
        beta: rate("beta", &entry.beta, base.map(|b| b.beta))?,
        lambda1: rate("lambda1", &entry.lambda1, base.map(|b| b.lambda1))?,
        lambda2: rate("lambda2", &entry.lambda2, base.map(|b| b.lambda2))?,
        k0: match (entry.k0, base) {
            (Some(k), _) => k,
            (None, Some(b)) => b.k0,
            (None, None) => {
                return Err(Error::config(format!("{field}.k0"), format!("required: id {} has no default", entry.id)))
            }
        },
    })
}

fn validate_tuples(tuples: &[PredictionTuple], delta: f64, lifecycle: &LifecycleConfig) -> Result<()> {
    let restore = lifecycle.mtti_hours() + lifecycle.mttr_hours();
    let mut last: Option<f64> = None;
    for (i, t) in tuples.iter().enumerate() {
        let field = |name: &str| format!("tuples[{i}].{name}");
        if !(t.delta_q.is_finite() && t.delta_q > 0.0) {
            return Err(Error::config(field("delta_q"), "must be > 0"));
        }
        let steps = t.delta_q / delta;
        if (steps - steps.round()).abs() > GRID_EPS * steps.max(1.0) {
            return Err(Error::config(
                field("delta_q"),
                format!("{} h is not a multiple of the monitor period {delta} h", t.delta_q),
            ));
        }
        if t.delta_q <= restore {
            return Err(Error::config(
                field("delta_q"),
                format!("{} h must exceed MTTI + MTTR = {restore:.4} h", t.delta_q),
            ));
        }
        if let Some(prev) = last {
            if t.delta_q <= prev {
                return Err(Error::config(field("delta_q"), "horizons must be strictly increasing"));
            }
        }
        last = Some(t.delta_q);
        if !(t.u_q > 0.0 && t.u_q < 1.0) {
            return Err(Error::config(field("u_q"), format!("{} is not in (0, 1)", t.u_q)));
        }
        if let Some(v) = t.v_q {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(field("v_q"), format!("{v} is not in (0, 1]")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prognostics::Priority;
    use crate::EOL_THRESHOLD;

    fn field_of(text: &str) -> String {
        match ScenarioConfig::from_toml_str(text).unwrap_err() {
            Error::Config { field, .. } => field,
            other => panic!("not a config error: {other}"),
        }
    }

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        let m = cfg.monitor();
        assert_eq!(m.delta, 0.5);
        assert_eq!(m.required, 2);
        assert_eq!(m.subsystems[&SubsystemId(1)], SwsFrfParams::table(1).unwrap());
        assert_eq!(m.tuples, PredictionTuple::defaults());
        assert_eq!(m.tuples[0].u_q, EOL_THRESHOLD);
        assert_eq!(m.start_hour, 6.0);
        assert_eq!(cfg.simulation.lifecycle.mtti_minutes, 3.0);
        assert_eq!(cfg.simulation.lifecycle.mttr_minutes, 40.0);
    }

    #[test]
    fn full_document() {
        let text = r#"
            name = "custom"
            seed = 9
            duration_hours = 48

            [monitor]
            delta = 0.25
            stage_policy = "fixed"

            [system]
            required = 1

            [[subsystems]]
            id = 1
            beta = "1/5000"

            [[subsystems]]
            id = 7
            alpha = 0.001
            beta = 0
            lambda1 = "1/2000"
            lambda2 = 0
            k0 = 2

            [[tuples]]
            delta_q = 12
            priority = "high"
            v_q = 0.5

            [[tuples]]
            delta_q = 36.25
            u_q = 0.5
            priority = "low"

            [scheduler]
            night_start_hour = 22
            night_end_hour = 4
        "#;
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        let m = cfg.monitor();
        assert_eq!(cfg.name, "custom");
        assert_eq!(cfg.seed, 9);
        assert_eq!(m.delta, 0.25);
        assert_eq!(m.stage_policy, StagePolicy::Fixed);
        assert_eq!(m.subsystems[&SubsystemId(1)].beta, 1.0 / 5000.0);
        assert_eq!(m.subsystems[&SubsystemId(1)].alpha, 1.0 / 8640.0);
        assert_eq!(m.subsystems[&SubsystemId(7)].k0, 2);
        assert_eq!(m.tuples[1].priority, Priority::Low);
        assert_eq!(m.tuples[0].v_q, Some(0.5));
        assert_eq!(m.scheduler.night_start_hour, 22.0);
    }

    #[test]
    fn violations_name_their_field() {
        let cases = [
            ("duration_hours = -1", "duration_hours"),
            ("start_hour = 24", "start_hour"),
            ("[monitor]\ndelta = 0", "monitor.delta"),
            ("[system]\nrequired = 4", "system.required"),
            ("[system]\nrequired = 0", "system.required"),
            ("[lifecycle]\nmtti_minutes = -3", "lifecycle.mtti_minutes"),
            ("[[subsystems]]\nid = 1\n[[subsystems]]\nid = 1", "subsystems[1].id"),
            ("[[subsystems]]\nid = 4", "subsystems[0].alpha"),
            ("[[subsystems]]\nid = 2\nalpha = \"1/x\"", "subsystems[0].alpha"),
            ("[[subsystems]]\nid = 2\nlambda1 = 0", "subsystems[0].lambda1"),
            ("[[subsystems]]\nid = 2\nk0 = 0", "subsystems[0].k0"),
            ("[[tuples]]\ndelta_q = 0.5\npriority = \"high\"", "tuples[0].delta_q"),
            ("[[tuples]]\ndelta_q = 24.3\npriority = \"high\"", "tuples[0].delta_q"),
            (
                "[[tuples]]\ndelta_q = 24\npriority = \"high\"\n[[tuples]]\ndelta_q = 24\npriority = \"low\"",
                "tuples[1].delta_q",
            ),
            ("[[tuples]]\ndelta_q = 24\nu_q = 1.0\npriority = \"high\"", "tuples[0].u_q"),
            ("[[tuples]]\ndelta_q = 24\nv_q = 0\npriority = \"high\"", "tuples[0].v_q"),
            ("[scheduler]\nnight_end_hour = 25", "scheduler.night_end_hour"),
            ("[workload]\nstimuli_per_hour = [1]\ncpu_load = [0.5]", "workload.stimuli_per_hour"),
            ("load_forecast = [2.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]", "load_forecast[0]"),
        ];
        for (text, field) in cases {
            assert_eq!(field_of(text), field, "{text}");
        }
    }

    #[test]
    fn tuple_must_outlast_repair() {
        let text = "[lifecycle]\nmttr_minutes = 3000\n[[tuples]]\ndelta_q = 24\npriority = \"high\"";
        let err = ScenarioConfig::from_toml_str(text).unwrap_err().to_string();
        assert!(err.contains("tuples[0].delta_q") && err.contains("MTTI + MTTR"), "{err}");
    }

    #[test]
    fn syntax_and_unknown_keys_are_config_errors() {
        assert!(ScenarioConfig::from_toml_str("seed = ").unwrap_err().is_config());
        assert!(ScenarioConfig::from_toml_str("sede = 3").unwrap_err().is_config());
        assert!(ScenarioConfig::from_toml_str("[monitor]\ndelat = 1").unwrap_err().is_config());
    }
}
