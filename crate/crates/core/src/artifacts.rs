//! Output files of a monitored run.
//!
//! - `curves.csv`: one frame of conditioned curves per monitor step,
//!   `step,t_hours,kind,sws1,...,system`
//! - `alarms.jsonl`: one object per raised, cleared or discarded alarm
//! - `events.jsonl`: diagnostics events plus failures, plan changes,
//!   commands and system losses, each tagged with `type`
//! - `summary.csv`: one row of run statistics
//!
//! Times are written with 4 decimals and probabilities with 6, so the files
//! are byte-identical across runs with the same scenario and seed.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use crate::conditioning::{DiagnosticsEvent, EventKind, ShutdownCause};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::monitor::{Monitor, MonitorSnapshot, StepReport};
use crate::prognostics::{
    probability_of_failure, remaining_useful_life, residual_reliability_check, Alarm, PredictionTuple, RulStatus,
};
use crate::relcurve::{curve_from_columns, CurveKind, ReliabilityCurve};
use crate::simulator::{run_with, AbReport, RunOptions, SimulationTrace};
use crate::SubsystemId;

pub const CURVES_FILE: &str = "curves.csv";
pub const ALARMS_FILE: &str = "alarms.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";

fn hours(t: f64) -> f64 {
    (t * 1e4).round() / 1e4
}

fn prob(p: f64) -> f64 {
    (p * 1e6).round() / 1e6
}

fn enum_str<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Builds `curves.csv` frame by frame.
#[derive(Debug, Clone)]
pub struct CurveCsv {
    ids: Vec<SubsystemId>,
    out: String,
}

impl CurveCsv {
    pub fn new(ids: impl IntoIterator<Item = SubsystemId>) -> Self {
        let ids: Vec<_> = ids.into_iter().collect();
        let mut out = String::from("step,t_hours,kind");
        for id in &ids {
            let _ = write!(out, ",{id}");
        }
        out.push_str(",system\n");
        Self { ids, out }
    }

    /// Appends every grid point of the snapshot's curves. Points up to the
    /// snapshot's current time are `observed`, later ones `predicted`.
    pub fn push_frame(&mut self, snapshot: &MonitorSnapshot, delta: f64) -> Result<()> {
        let t_now = snapshot.t_now(delta);
        let grid = *snapshot.system_curve.grid();
        for i in 0..grid.len() {
            let t = grid.time_at(i);
            let _ = write!(self.out, "{},{:.4},{}", snapshot.step, t, CurveKind::at(t, t_now).as_str());
            for id in &self.ids {
                let curve = snapshot
                    .subsystem_curves
                    .get(id)
                    .ok_or(Error::UnresolvedLeaf(*id))?;
                let _ = write!(self.out, ",{:.6}", curve.eval(t)?);
            }
            let _ = writeln!(self.out, ",{:.6}", snapshot.system_curve.sample(i));
        }
        Ok(())
    }

    pub fn finish(self) -> String {
        self.out
    }
}

/// Reads one column of the last frame of a `curves.csv`.
///
/// Returns the curve and the frame's current time.
pub fn curve_from_frames(text: &str, column: &str) -> Result<(ReliabilityCurve, f64)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::Parse("empty file".into()))?.split(',').collect();
    if header.len() < 4 || header[..3] != ["step", "t_hours", "kind"] {
        return Err(Error::Parse("expected a `step,t_hours,kind,...` header".into()));
    }
    let col = header
        .iter()
        .position(|h| *h == column)
        .ok_or_else(|| Error::Parse(format!("no column `{column}`")))?;
    let mut frame: Option<&str> = None;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut last_observed = 0.0;
    for (row, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::Parse(format!("row {}: expected {} cells", row + 2, header.len())));
        }
        if frame != Some(cells[0]) {
            frame = Some(cells[0]);
            times.clear();
            values.clear();
            last_observed = 0.0;
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("row {}: bad number `{s}`", row + 2)));
        let t = num(cells[1])?;
        if cells[2] == "observed" {
            last_observed = t;
        }
        times.push(t);
        values.push(num(cells[col])?);
    }
    Ok((curve_from_columns(&times, values)?, last_observed))
}

fn alarm_record(t: f64, status: &str, a: &Alarm) -> Value {
    json!({
        "t": hours(t),
        "status": status,
        "scope": a.scope.to_string(),
        "priority": a.priority.as_str(),
        "metric": enum_str(&a.metric),
        "value": prob(a.value),
        "delta_q": hours(a.delta_q),
        "raised_at": hours(a.raised_at),
        "origin": enum_str(&a.origin),
        "forwarded_to": a.forwarded_to.map(|id| id.to_string()),
    })
}

/// `alarms.jsonl` for a sequence of step reports.
pub fn alarms_jsonl(reports: &[StepReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let groups = [
            ("cleared", &r.alarms.cleared),
            ("raised", &r.alarms.raised),
            ("discarded", &r.alarms.discarded),
        ];
        for (status, alarms) in groups {
            for a in alarms {
                let _ = writeln!(out, "{}", alarm_record(r.t_now, status, a));
            }
        }
    }
    out
}

fn diagnostics_record(e: &DiagnosticsEvent) -> Value {
    let mut v = json!({
        "type": "diagnostics",
        "t": hours(e.t),
        "subsystem": e.subsystem.to_string(),
    });
    match e.kind {
        EventKind::PowerOn => v["kind"] = json!("power_on"),
        EventKind::StartupTimeout => v["kind"] = json!("startup_timeout"),
        EventKind::Shutdown { cause } => {
            v["kind"] = json!("shutdown");
            v["cause"] = enum_str(&cause);
        }
    }
    v
}

/// `events.jsonl` for a trace, ordered by window.
pub fn events_jsonl(trace: &SimulationTrace) -> String {
    let mut out = String::new();
    let mut failures = trace.failures.iter().peekable();
    let mut push_events = |out: &mut String, events: &[DiagnosticsEvent]| {
        for e in events {
            if e.kind == (EventKind::Shutdown { cause: ShutdownCause::Failure }) {
                if let Some(f) = failures.next_if(|f| f.t == e.t && f.subsystem == e.subsystem) {
                    let rec = json!({
                        "type": "failure",
                        "t": hours(f.t),
                        "subsystem": f.subsystem.to_string(),
                        "source": enum_str(&f.source),
                    });
                    let _ = writeln!(out, "{rec}");
                }
            }
            let _ = writeln!(out, "{}", diagnostics_record(e));
        }
    };
    let mut commands = trace.commands.iter().peekable();
    let mut seen = 0;
    for (k, w) in trace.windows.iter().enumerate() {
        push_events(&mut out, &trace.events[w.events.clone()]);
        seen = w.events.end;
        if let Some(r) = trace.reports.get(k) {
            if let Some(t) = r.system_loss_at {
                let _ = writeln!(out, "{}", json!({"type": "system_loss", "t": hours(t), "mode": r.mode}));
            }
            for p in &r.plan_events {
                let rec = json!({
                    "type": "plan",
                    "t": hours(p.t),
                    "action": enum_str(&p.action),
                    "target": p.plan.target.to_string(),
                    "priority": p.plan.priority.as_str(),
                    "requested_at": hours(p.plan.requested_at),
                    "due_by": hours(p.plan.due_by),
                });
                let _ = writeln!(out, "{rec}");
            }
        }
        let t_end = trace.reports.get(k).map(|r| r.t_now);
        while let Some(c) = commands.next_if(|c| Some(c.t) == t_end) {
            let rec = json!({
                "type": "command",
                "t": hours(c.t),
                "target": c.target.to_string(),
                "priority": c.priority.as_str(),
                "executed": c.executed,
                "working": c.working,
            });
            let _ = writeln!(out, "{rec}");
        }
    }
    push_events(&mut out, &trace.events[seen..]);
    out
}

pub fn summary_csv(trace: &SimulationTrace) -> String {
    let s = &trace.stats;
    let last = trace.reports.last();
    let (r_now, rul) = match last {
        Some(r) => (
            format!("{:.6}", r.system_now),
            match r.system_rul.status {
                RulStatus::Censored => format!(">={:.4}", r.system_rul.rul),
                _ => format!("{:.4}", r.system_rul.rul),
            },
        ),
        None => (String::new(), String::new()),
    };
    format!(
        "seed,duration_hours,steps,availability,unavailable_hours,system_losses,failures,rejuvenations,\
         rejected_commands,alarms_raised,final_system_reliability,final_system_rul_hours\n\
         {},{:.4},{},{:.6},{:.4},{},{},{},{},{},{},{}\n",
        s.seed,
        s.duration_hours,
        trace.reports.len(),
        s.availability,
        s.unavailable_hours,
        s.system_losses,
        s.failures,
        s.rejuvenations,
        s.rejected_commands,
        s.alarms_raised,
        r_now,
        rul,
    )
}

pub fn ab_csv(report: &AbReport) -> String {
    let mut out = String::from(
        "seed,availability_with,availability_without,losses_with,losses_without,failures_with,failures_without,rejuvenations\n",
    );
    for p in &report.pairs {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{},{},{},{},{}",
            p.seed,
            p.with_rbm.availability,
            p.without_rbm.availability,
            p.with_rbm.system_losses,
            p.without_rbm.system_losses,
            p.with_rbm.failures,
            p.without_rbm.failures,
            p.with_rbm.rejuvenations,
        );
    }
    let _ = writeln!(
        out,
        "mean,{:.6},{:.6},{:.4},{:.4},,,",
        report.mean_availability_with,
        report.mean_availability_without,
        report.mean_losses_with,
        report.mean_losses_without,
    );
    out
}

/// Rendered output files of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunArtifacts {
    pub curves: String,
    pub alarms: String,
    pub events: String,
    pub summary: String,
}

impl RunArtifacts {
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CURVES_FILE), &self.curves)?;
        std::fs::write(dir.join(ALARMS_FILE), &self.alarms)?;
        std::fs::write(dir.join(EVENTS_FILE), &self.events)?;
        std::fs::write(dir.join(SUMMARY_FILE), &self.summary)?;
        Ok(())
    }
}

/// Simulates a scenario with the monitor attached and renders every artifact.
pub fn run_scenario(scenario: &ScenarioConfig, options: RunOptions) -> Result<(SimulationTrace, RunArtifacts)> {
    let cfg = &scenario.simulation;
    let delta = cfg.monitor.delta;
    let mut curves = CurveCsv::new(cfg.monitor.subsystems.keys().copied());
    if options.monitor {
        let initial = Monitor::new(cfg.monitor.clone())?.initial_snapshot()?;
        curves.push_frame(&initial, delta)?;
    }
    let mut frame_error = None;
    let trace = run_with(cfg, options, &mut |snap, _| {
        if frame_error.is_none() {
            frame_error = curves.push_frame(snap, delta).err();
        }
    })?;
    if let Some(e) = frame_error {
        return Err(e);
    }
    let artifacts = RunArtifacts {
        curves: curves.finish(),
        alarms: alarms_jsonl(&trace.reports),
        events: events_jsonl(&trace),
        summary: summary_csv(&trace),
    };
    Ok((trace, artifacts))
}

/// A-priori curves of a scenario as a single `curves.csv` frame.
pub fn initial_curves(scenario: &ScenarioConfig) -> Result<String> {
    let monitor = Monitor::new(scenario.monitor().clone())?;
    let mut csv = CurveCsv::new(scenario.monitor().subsystems.keys().copied());
    csv.push_frame(&monitor.initial_snapshot()?, scenario.monitor().delta)?;
    Ok(csv.finish())
}

/// All three metrics of a curve at `t_now` for each tuple, as JSON.
pub fn evaluate(curve: &ReliabilityCurve, t_now: f64, tuples: &[PredictionTuple]) -> Result<Value> {
    let rul = remaining_useful_life(curve, t_now)?;
    let mut rows = Vec::new();
    for t in tuples {
        let (residual, triggered) = residual_reliability_check(curve, t_now, t)?;
        let pof = match probability_of_failure(curve, t_now, t.delta_q) {
            Ok(p) => Some(prob(p)),
            Err(Error::UndefinedConditional(_)) => None,
            Err(e) => return Err(e),
        };
        rows.push(json!({
            "delta_q": hours(t.delta_q),
            "priority": t.priority.as_str(),
            "residual_reliability": prob(residual),
            "residual_triggered": triggered,
            "probability_of_failure": pof,
            "probability_triggered": match (pof, t.v_q) {
                (Some(p), Some(v)) => Some(p >= v),
                _ => None,
            },
        }));
    }
    Ok(json!({
        "t_now": hours(t_now),
        "reliability_now": prob(curve.eval(t_now)?),
        "t_eol": rul.t_eol.map(hours),
        "rul_hours": hours(rul.rul),
        "rul_status": enum_str(&rul.status),
        "tuples": rows,
    }))
}
