//! Prognostic metrics and the alarm ledger.
//!
//! Three metrics are read off a conditioned curve at the current time `t̃`:
//! the residual reliability `R(t̃ + Δ)`, the probability of failure within
//! `Δ` given survival to `t̃`, and the remaining useful life up to the
//! `e^{-1}` crossing. Each prediction tuple `⟨Δq, Uq, Vq⟩` turns the first two
//! into an alarm of a fixed priority.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relcurve::ReliabilityCurve;
use crate::scheduler::select_target;
use crate::{SubsystemId, EOL_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    Low,
    Medium,
    High,
}

impl Priority {
    pub fn as_str(&self) -> &'static str {
        match self {
            Priority::Low => "low",
            Priority::Medium => "medium",
            Priority::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionTuple {
    pub delta_q: f64,
    #[serde(default = "default_u")]
    pub u_q: f64,
    #[serde(default)]
    pub v_q: Option<f64>,
    pub priority: Priority,
}

fn default_u() -> f64 {
    EOL_THRESHOLD
}

impl PredictionTuple {
    pub fn new(delta_q: f64, priority: Priority) -> Self {
        Self {
            delta_q,
            u_q: EOL_THRESHOLD,
            v_q: None,
            priority,
        }
    }

    /// One, two and three days ahead with high, medium and low priority.
    pub fn defaults() -> Vec<Self> {
        vec![
            Self::new(24.0, Priority::High),
            Self::new(48.0, Priority::Medium),
            Self::new(72.0, Priority::Low),
        ]
    }
}

/// Where an alarm applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Scope {
    System,
    Subsystem(SubsystemId),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::System => f.write_str("system"),
            Scope::Subsystem(id) => write!(f, "{id}"),
        }
    }
}

impl From<Scope> for String {
    fn from(s: Scope) -> String {
        s.to_string()
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "system" {
            return Ok(Scope::System);
        }
        s.strip_prefix("sws")
            .and_then(|n| n.parse().ok())
            .map(|n| Scope::Subsystem(SubsystemId(n)))
            .ok_or_else(|| Error::Parse(format!("unknown alarm scope `{s}`")))
    }
}

impl TryFrom<String> for Scope {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ResidualReliability,
    ProbabilityOfFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmOrigin {
    /// Raised from the scope's own curve.
    Direct,
    /// A system alarm handed to the subsystem with the lowest reliability.
    Forwarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    pub scope: Scope,
    pub priority: Priority,
    pub metric: Metric,
    pub value: f64,
    pub delta_q: f64,
    pub raised_at: f64,
    pub origin: AlarmOrigin,
    /// For system alarms: the subsystem the alarm was forwarded to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forwarded_to: Option<SubsystemId>,
}

impl Alarm {
    fn key(&self) -> (Scope, Priority) {
        (self.scope, self.priority)
    }
}

/// `R(t̃ + Δq)` and whether it is at or below `Uq`.
pub fn residual_reliability_check(
    curve: &ReliabilityCurve,
    t_now: f64,
    tuple: &PredictionTuple,
) -> Result<(f64, bool)> {
    let v = curve.eval(t_now + tuple.delta_q)?;
    Ok((v, v <= tuple.u_q))
}

/// `(R(t̃) − R(t̃ + Δ)) / R(t̃)`: failure within `Δ` given survival to `t̃`.
pub fn probability_of_failure(curve: &ReliabilityCurve, t_now: f64, delta: f64) -> Result<f64> {
    let now = curve.eval(t_now)?;
    if now <= 0.0 {
        return Err(Error::UndefinedConditional(t_now));
    }
    let later = curve.eval(t_now + delta)?;
    Ok(((now - later) / now).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RulStatus {
    Estimated,
    /// Already at or below the end-of-life threshold at `t̃`.
    Expired,
    /// No crossing within the horizon: `rul` is a lower bound.
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rul {
    pub t_eol: Option<f64>,
    pub rul: f64,
    pub status: RulStatus,
}

/// Time to the first grid point at or below `e^{-1}`.
///
/// If the curve is already below the threshold at `t̃`, the end of life is the
/// start of the current sub-threshold run and the result is non-positive.
pub fn remaining_useful_life(curve: &ReliabilityCurve, t_now: f64) -> Result<Rul> {
    let grid = curve.grid();
    let now = grid.index_at_or_before(t_now)?;
    let below = |i: usize| curve.sample(i) <= EOL_THRESHOLD;
    if below(now) {
        let mut start = now;
        while start > 0 && below(start - 1) {
            start -= 1;
        }
        let t_eol = grid.time_at(start);
        return Ok(Rul {
            t_eol: Some(t_eol),
            rul: t_eol - t_now,
            status: RulStatus::Expired,
        });
    }
    match (now..curve.len()).find(|&i| below(i)) {
        Some(i) => {
            let t_eol = grid.time_at(i);
            Ok(Rul {
                t_eol: Some(t_eol),
                rul: t_eol - t_now,
                status: RulStatus::Estimated,
            })
        }
        None => Ok(Rul {
            t_eol: None,
            rul: grid.end() - t_now,
            status: RulStatus::Censored,
        }),
    }
}

/// Active alarms, at most one per `(scope, priority)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlarmLedger {
    active: Vec<Alarm>,
}

impl AlarmLedger {
    pub fn active(&self) -> &[Alarm] {
        &self.active
    }

    pub fn get(&self, scope: Scope, priority: Priority) -> Option<&Alarm> {
        self.active.iter().find(|a| a.key() == (scope, priority))
    }

    fn insert(&mut self, alarm: Alarm) {
        let pos = self.active.partition_point(|a| a.key() < alarm.key());
        self.active.insert(pos, alarm);
    }

    /// Drops every alarm tied to `id`: its own, forwarded ones, and system
    /// alarms that were forwarded to it. Called when the subsystem restarts.
    pub fn clear_subsystem(&mut self, id: SubsystemId) -> Vec<Alarm> {
        let (gone, keep) = self.active.drain(..).partition(|a| {
            a.scope == Scope::Subsystem(id) || (a.scope == Scope::System && a.forwarded_to == Some(id))
        });
        self.active = keep;
        gone
    }
}

/// Curves and context for one alarm evaluation.
pub struct AlarmInputs<'a> {
    pub t_now: f64,
    /// `None` while the system is lost.
    pub system: Option<&'a ReliabilityCurve>,
    /// Curves of the subsystems currently in the diagram.
    pub subsystems: &'a BTreeMap<SubsystemId, ReliabilityCurve>,
    /// Forwarding of system alarms waits for the operating mode.
    pub operating: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AlarmStep {
    pub raised: Vec<Alarm>,
    pub cleared: Vec<Alarm>,
    /// Alarms suppressed because the same `(scope, priority)` was already active.
    pub discarded: Vec<Alarm>,
}

/// Evaluates every tuple for the system and each subsystem and updates the ledger.
///
/// Direct alarms clear once their metric no longer triggers. Forwarded alarms
/// clear together with the system alarm they came from. A new system alarm is
/// forwarded to the weakest available subsystem as soon as the mode is operating.
pub fn step_alarms(
    ledger: &AlarmLedger,
    inputs: &AlarmInputs<'_>,
    tuples: &[PredictionTuple],
) -> Result<(AlarmLedger, AlarmStep)> {
    let mut triggered: BTreeMap<(Scope, Priority), (Metric, f64, f64)> = BTreeMap::new();
    let mut evaluated = Vec::new();
    let scopes = inputs
        .system
        .map(|c| (Scope::System, c))
        .into_iter()
        .chain(inputs.subsystems.iter().map(|(&id, c)| (Scope::Subsystem(id), c)));
    for (scope, curve) in scopes {
        evaluated.push(scope);
        for tuple in tuples {
            if let Some((metric, value)) = check_tuple(curve, inputs.t_now, tuple)? {
                triggered
                    .entry((scope, tuple.priority))
                    .or_insert((metric, value, tuple.delta_q));
            }
        }
    }

    let mut next = ledger.clone();
    let mut step = AlarmStep::default();

    // Recovery of direct alarms on evaluated scopes.
    let (recovered, keep): (Vec<_>, Vec<_>) = next.active.drain(..).partition(|a| {
        a.origin == AlarmOrigin::Direct && evaluated.contains(&a.scope) && !triggered.contains_key(&a.key())
    });
    next.active = keep;
    // Forwarded alarms follow their system alarm.
    let mut cleared = recovered;
    let released: Vec<(Priority, SubsystemId)> = cleared
        .iter()
        .filter(|a| a.scope == Scope::System)
        .filter_map(|a| a.forwarded_to.map(|id| (a.priority, id)))
        .collect();
    let (followers, keep): (Vec<_>, Vec<_>) = next.active.drain(..).partition(|a| {
        a.origin == AlarmOrigin::Forwarded && released.contains(&(a.priority, scope_id(a)))
    });
    next.active = keep;
    cleared.extend(followers);
    step.cleared = cleared;

    for (&(scope, priority), &(metric, value, delta_q)) in &triggered {
        let alarm = Alarm {
            scope,
            priority,
            metric,
            value,
            delta_q,
            raised_at: inputs.t_now,
            origin: AlarmOrigin::Direct,
            forwarded_to: None,
        };
        if next.get(scope, priority).is_some() {
            tracing::debug!(%scope, priority = priority.as_str(), "same alarm already active");
            step.discarded.push(alarm);
        } else {
            next.insert(alarm.clone());
            step.raised.push(alarm);
        }
    }

    if inputs.operating {
        forward_system_alarms(&mut next, &mut step, inputs)?;
    }
    Ok((next, step))
}

fn scope_id(a: &Alarm) -> SubsystemId {
    match a.scope {
        Scope::Subsystem(id) => id,
        Scope::System => SubsystemId(0),
    }
}

fn check_tuple(
    curve: &ReliabilityCurve,
    t_now: f64,
    tuple: &PredictionTuple,
) -> Result<Option<(Metric, f64)>> {
    let (value, hit) = residual_reliability_check(curve, t_now, tuple)?;
    if hit {
        return Ok(Some((Metric::ResidualReliability, value)));
    }
    if let Some(v_q) = tuple.v_q {
        match probability_of_failure(curve, t_now, tuple.delta_q) {
            Ok(p) if p >= v_q => return Ok(Some((Metric::ProbabilityOfFailure, p))),
            Ok(_) => {}
            // A zero curve already triggers the residual check above.
            Err(Error::UndefinedConditional(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

fn forward_system_alarms(
    ledger: &mut AlarmLedger,
    step: &mut AlarmStep,
    inputs: &AlarmInputs<'_>,
) -> Result<()> {
    let pending: Vec<usize> = (0..ledger.active.len())
        .filter(|&i| ledger.active[i].scope == Scope::System && ledger.active[i].forwarded_to.is_none())
        .collect();
    for i in pending.into_iter().rev() {
        let Some(target) = select_target(&ledger.active[i], inputs.subsystems, inputs.t_now)? else {
            continue;
        };
        ledger.active[i].forwarded_to = Some(target);
        let sys = ledger.active[i].clone();
        let forwarded = Alarm {
            scope: Scope::Subsystem(target),
            origin: AlarmOrigin::Forwarded,
            forwarded_to: None,
            raised_at: inputs.t_now,
            ..sys
        };
        if ledger.get(forwarded.scope, forwarded.priority).is_some() {
            tracing::debug!(target = %target, "forwarded alarm duplicates an active one");
            step.discarded.push(forwarded);
        } else {
            ledger.insert(forwarded.clone());
            step.raised.push(forwarded);
        }
    }
    Ok(())
}
