//! Rejuvenation planning from alarms.
//!
//! Low-priority requests wait for the night window, medium ones pick the
//! quietest slot in the next twelve hours, high ones are due at once. Plans
//! run one at a time and only while every subsystem is up.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prognostics::{Alarm, Priority, Scope};
use crate::relcurve::ReliabilityCurve;
use crate::SubsystemId;

const TIME_EPS: f64 = 1e-9;

/// Subsystem to rejuvenate for an alarm.
///
/// A subsystem alarm maps to its subsystem. A system alarm maps to the
/// available subsystem with the lowest reliability at `t_now` (lowest id on
/// ties); `None` means no subsystem is available and selection is deferred.
pub fn select_target(
    alarm: &Alarm,
    available: &BTreeMap<SubsystemId, ReliabilityCurve>,
    t_now: f64,
) -> Result<Option<SubsystemId>> {
    if let Scope::Subsystem(id) = alarm.scope {
        return Ok(Some(id));
    }
    let mut best: Option<(SubsystemId, f64)> = None;
    for (&id, curve) in available {
        let r = curve.eval(t_now)?;
        if best.is_none_or(|(_, b)| r < b) {
            best = Some((id, r));
        }
    }
    Ok(best.map(|(id, _)| id))
}

/// Hour of day on the simulated wall clock.
pub fn wall_hour(t: f64, start_hour: f64) -> f64 {
    (start_hour + t).rem_euclid(24.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastSource {
    /// The configured hourly load profile.
    #[default]
    Profile,
    /// Trailing average of observed window loads per hour of day, falling back
    /// to the profile for hours not yet observed.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadForecast {
    profile: Vec<f64>,
    source: ForecastSource,
    observed_sum: Vec<f64>,
    observed_count: Vec<u32>,
}

impl LoadForecast {
    pub fn new(profile: Vec<f64>, source: ForecastSource) -> Result<Self> {
        if profile.len() != 24 {
            return Err(Error::config(
                "scheduler.forecast",
                format!("expected 24 hourly values, got {}", profile.len()),
            ));
        }
        if let Some(v) = profile.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::config("scheduler.forecast", format!("load {v} outside [0, 1]")));
        }
        Ok(Self {
            profile,
            source,
            observed_sum: vec![0.0; 24],
            observed_count: vec![0; 24],
        })
    }

    /// Records an observed load for the hour of day `hour`.
    pub fn observe(&mut self, hour: f64, load: f64) {
        let h = (hour.floor() as usize).min(23);
        self.observed_sum[h] += load;
        self.observed_count[h] += 1;
    }

    pub fn at_hour(&self, hour: f64) -> f64 {
        let h = (hour.floor() as usize).min(23);
        match self.source {
            ForecastSource::Observed if self.observed_count[h] > 0 => {
                self.observed_sum[h] / self.observed_count[h] as f64
            }
            _ => self.profile[h],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    #[serde(default)]
    pub night_start_hour: f64,
    #[serde(default = "default_night_end")]
    pub night_end_hour: f64,
    #[serde(default = "default_medium_window")]
    pub medium_window_hours: f64,
    #[serde(default)]
    pub forecast: ForecastSource,
}

fn default_night_end() -> f64 {
    6.0
}

fn default_medium_window() -> f64 {
    12.0
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            night_start_hour: 0.0,
            night_end_hour: default_night_end(),
            medium_window_hours: default_medium_window(),
            forecast: ForecastSource::Profile,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("night_start_hour", self.night_start_hour), ("night_end_hour", self.night_end_hour)] {
            if !(0.0..24.0).contains(&v) {
                return Err(Error::config(format!("scheduler.{name}"), format!("{v} is not an hour in [0, 24)")));
            }
        }
        if self.night_start_hour == self.night_end_hour {
            return Err(Error::config("scheduler.night_end_hour", "night window is empty"));
        }
        if self.medium_window_hours.is_nan() || self.medium_window_hours <= 0.0 {
            return Err(Error::config("scheduler.medium_window_hours", "must be > 0"));
        }
        Ok(())
    }

    fn in_night(&self, hour: f64) -> bool {
        let (s, e) = (self.night_start_hour, self.night_end_hour);
        if s < e {
            hour >= s - TIME_EPS && hour < e - TIME_EPS
        } else {
            hour >= s - TIME_EPS || hour < e - TIME_EPS
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Pending,
    Executing,
    Done,
    Superseded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejuvenationPlan {
    pub target: SubsystemId,
    pub requested_at: f64,
    pub due_by: f64,
    pub priority: Priority,
    pub status: PlanStatus,
    /// First tick at which the plan was due but blocked by the mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held_since: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejuvenationCommand {
    pub target: SubsystemId,
    pub t: f64,
    pub priority: Priority,
}

/// What happened to a plan; serialized into the event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanAction {
    Created,
    Rescheduled,
    Dispatched,
    Held,
    Requeued,
    Done,
    Superseded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEvent {
    pub t: f64,
    pub action: PlanAction,
    pub plan: RejuvenationPlan,
}

/// Due time for a request of the given priority.
///
/// `tick` is the monitoring period: candidate times are `t_now + m·tick`.
pub fn due_time(
    priority: Priority,
    t_now: f64,
    tick: f64,
    start_hour: f64,
    config: &SchedulerConfig,
    forecast: &LoadForecast,
) -> f64 {
    match priority {
        Priority::High => t_now,
        Priority::Low => {
            // At most one day ahead; the night window recurs daily.
            let steps = (24.0 / tick).ceil() as usize;
            (0..=steps)
                .map(|m| t_now + m as f64 * tick)
                .find(|&t| config.in_night(wall_hour(t, start_hour)))
                .unwrap_or(t_now)
        }
        Priority::Medium => {
            let steps = (config.medium_window_hours / tick + TIME_EPS).floor() as usize;
            let mut best = (t_now, f64::INFINITY);
            for m in 0..=steps {
                let t = t_now + m as f64 * tick;
                let load = forecast.at_hour(wall_hour(t, start_hour));
                if load < best.1 {
                    best = (t, load);
                }
            }
            best.0
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scheduler {
    plans: Vec<RejuvenationPlan>,
}

impl Scheduler {
    /// Pending and executing plans, in creation order.
    pub fn plans(&self) -> &[RejuvenationPlan] {
        &self.plans
    }

    pub fn executing(&self) -> Option<&RejuvenationPlan> {
        self.plans.iter().find(|p| p.status == PlanStatus::Executing)
    }

    /// Creates a plan for `target` or tightens the existing one.
    ///
    /// The merged plan keeps the earlier due time and the higher priority.
    /// Requests for a target that is already being rejuvenated are ignored.
    pub fn request(&mut self, target: SubsystemId, priority: Priority, t_now: f64, due_by: f64) -> Option<PlanEvent> {
        if let Some(plan) = self.plans.iter_mut().find(|p| p.target == target) {
            if plan.status != PlanStatus::Pending {
                return None;
            }
            let (due, prio) = (plan.due_by.min(due_by), plan.priority.max(priority));
            if due == plan.due_by && prio == plan.priority {
                return None;
            }
            plan.due_by = due;
            plan.priority = prio;
            return Some(PlanEvent {
                t: t_now,
                action: PlanAction::Rescheduled,
                plan: plan.clone(),
            });
        }
        let plan = RejuvenationPlan {
            target,
            requested_at: t_now,
            due_by,
            priority,
            status: PlanStatus::Pending,
            held_since: None,
        };
        self.plans.push(plan.clone());
        Some(PlanEvent {
            t: t_now,
            action: PlanAction::Created,
            plan,
        })
    }

    /// Issues at most one command: the due plan whose target has the lowest
    /// reliability at `t_now`, only in operating mode and with nothing running.
    pub fn dispatch(
        &mut self,
        operating: bool,
        t_now: f64,
        reliability_now: &BTreeMap<SubsystemId, f64>,
        log: &mut Vec<PlanEvent>,
    ) -> Option<RejuvenationCommand> {
        let due = |p: &RejuvenationPlan| p.status == PlanStatus::Pending && p.due_by <= t_now + TIME_EPS;
        if !operating || self.executing().is_some() {
            for plan in self.plans.iter_mut().filter(|p| due(p)) {
                if plan.held_since.is_none() {
                    plan.held_since = Some(t_now);
                    if plan.priority == Priority::High {
                        tracing::warn!(target = %plan.target, "high-priority rejuvenation held outside operating mode");
                    }
                    log.push(PlanEvent {
                        t: t_now,
                        action: PlanAction::Held,
                        plan: plan.clone(),
                    });
                }
            }
            return None;
        }
        let r = |p: &RejuvenationPlan| reliability_now.get(&p.target).copied().unwrap_or(1.0);
        let pick = self
            .plans
            .iter()
            .enumerate()
            .filter(|(_, p)| due(p))
            .min_by(|(_, a), (_, b)| r(a).total_cmp(&r(b)).then(a.target.cmp(&b.target)))
            .map(|(i, _)| i)?;
        let plan = &mut self.plans[pick];
        plan.status = PlanStatus::Executing;
        log.push(PlanEvent {
            t: t_now,
            action: PlanAction::Dispatched,
            plan: plan.clone(),
        });
        Some(RejuvenationCommand {
            target: plan.target,
            t: t_now,
            priority: plan.priority,
        })
    }

    fn finish(&mut self, target: SubsystemId, status: PlanStatus, action: PlanAction, t: f64) -> Option<PlanEvent> {
        let pos = self.plans.iter().position(|p| p.target == target)?;
        let mut plan = self.plans.remove(pos);
        plan.status = status;
        Some(PlanEvent { t, action, plan })
    }

    /// The target came back from a rejuvenation.
    pub fn complete(&mut self, target: SubsystemId, t: f64) -> Option<PlanEvent> {
        if self.plans.iter().any(|p| p.target == target && p.status == PlanStatus::Executing) {
            self.finish(target, PlanStatus::Done, PlanAction::Done, t)
        } else {
            None
        }
    }

    /// The target failed or was restarted by other means; its plan is moot.
    pub fn supersede(&mut self, target: SubsystemId, t: f64) -> Option<PlanEvent> {
        self.finish(target, PlanStatus::Superseded, PlanAction::Superseded, t)
    }

    /// An executing plan whose command was not carried out goes back to pending.
    pub fn requeue(&mut self, target: SubsystemId, t: f64) -> Option<PlanEvent> {
        let plan = self
            .plans
            .iter_mut()
            .find(|p| p.target == target && p.status == PlanStatus::Executing)?;
        plan.status = PlanStatus::Pending;
        Some(PlanEvent {
            t,
            action: PlanAction::Requeued,
            plan: plan.clone(),
        })
    }
}
