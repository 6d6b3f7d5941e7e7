//! The periodic monitor loop.
//!
//! Every `δ` hours the monitor consumes one window of diagnostics data and
//! events and runs, in order: failure-rate estimation, unconditioned curve
//! evaluation, conditioning, mode selection and system evaluation, alarm
//! evaluation, and rejuvenation scheduling. All state lives in a
//! [`MonitorSnapshot`], so a step is a pure function of the previous snapshot
//! and the window's inputs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::conditioning::{
    classify, condition_step, initialize, ConditionCase, DiagnosticsEvent, EventKind, ShutdownCause,
    SubsystemPhase,
};
use crate::error::{Error, Result};
use crate::frf::{build_net, update_health, DiagnosticsWindow, StagePolicy, SwsFrfParams, SwsHealthState};
use crate::prognostics::{
    remaining_useful_life, step_alarms, Alarm, AlarmInputs, AlarmLedger, AlarmStep, PredictionTuple, Rul, Scope,
};
use crate::rbd::{ModeModel, ModeOfOperation};
use crate::relcurve::{splice_replace, ReliabilityCurve, TimeGrid};
use crate::scheduler::{
    due_time, wall_hour, LoadForecast, PlanEvent, RejuvenationCommand, Scheduler, SchedulerConfig,
};
use crate::stpn::transient_reliability;
use crate::SubsystemId;

/// Extra prediction span kept past the longest tuple horizon.
const HORIZON_MARGIN: f64 = 24.0;
/// Fresh curves are never extended beyond this many hours.
const FRESH_HORIZON_CAP: f64 = 1.0e5;
/// Below this a conserve target is treated as zero and no longer chased.
const MIN_MATCH_TARGET: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub delta: f64,
    pub subsystems: BTreeMap<SubsystemId, SwsFrfParams>,
    pub required: usize,
    pub tuples: Vec<PredictionTuple>,
    pub stage_policy: StagePolicy,
    pub scheduler: SchedulerConfig,
    /// Hour of day at `t = 0`.
    pub start_hour: f64,
    /// Expected hourly CPU load, used by the medium-priority slot search.
    pub load_profile: Vec<f64>,
    /// When false, alarms are still raised but nothing is scheduled.
    pub rejuvenation: bool,
}

impl MonitorConfig {
    /// Three subsystems with the default parameters, 2-out-of-3, half-hour period.
    pub fn table_defaults() -> Self {
        Self {
            delta: 0.5,
            subsystems: (1..=3)
                .map(|i| (SubsystemId(i), SwsFrfParams::table(i).expect("table entry")))
                .collect(),
            required: 2,
            tuples: PredictionTuple::defaults(),
            stage_policy: StagePolicy::default(),
            scheduler: SchedulerConfig::default(),
            start_hour: 6.0,
            load_profile: vec![0.5; 24],
            rejuvenation: true,
        }
    }

    fn delta_max(&self) -> f64 {
        self.tuples.iter().map(|t| t.delta_q).fold(0.0, f64::max)
    }

    /// Rolling horizon for a step evaluated at `t_now`, rounded up to the grid.
    pub fn horizon_at(&self, t_now: f64) -> f64 {
        let raw = t_now + self.delta_max() + HORIZON_MARGIN;
        (raw / self.delta - 1e-9).ceil() * self.delta
    }
}

/// Full monitor state after `step` completed steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSnapshot {
    pub step: u64,
    pub subsystem_curves: BTreeMap<SubsystemId, ReliabilityCurve>,
    pub system_curve: ReliabilityCurve,
    pub mode: ModeOfOperation,
    pub phases: BTreeMap<SubsystemId, SubsystemPhase>,
    pub health: BTreeMap<SubsystemId, SwsHealthState>,
    pub ledger: AlarmLedger,
    pub scheduler: Scheduler,
    pub forecast: LoadForecast,
}

impl MonitorSnapshot {
    /// Current time `t̃ = step·δ`.
    pub fn t_now(&self, delta: f64) -> f64 {
        self.step as f64 * delta
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Per-subsystem outcome of one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsystemStep {
    pub case: ConditionCase,
    pub phase: SubsystemPhase,
    pub reliability_now: f64,
    pub current_k: u32,
    pub freeze_flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    /// Index `n` of the processed window.
    pub step: u64,
    /// Split time `n·δ`.
    pub split: f64,
    /// Evaluation time `t̃ = (n+1)·δ`.
    pub t_now: f64,
    pub mode: String,
    pub operating: bool,
    pub subsystems: BTreeMap<SubsystemId, SubsystemStep>,
    /// System reliability at `t̃` predicted by the previous step.
    pub system_predicted_before: f64,
    pub system_now: f64,
    pub system_rul: Rul,
    pub system_loss_at: Option<f64>,
    pub alarms: AlarmStep,
    pub plan_events: Vec<PlanEvent>,
    pub command: Option<RejuvenationCommand>,
}

impl StepReport {
    pub fn raised(&self) -> &[Alarm] {
        &self.alarms.raised
    }
}

#[derive(Debug, Clone)]
pub struct Monitor {
    config: MonitorConfig,
    modes: ModeModel,
}

impl Monitor {
    pub fn new(config: MonitorConfig) -> Result<Self> {
        if !(config.delta.is_finite() && config.delta > 0.0) {
            return Err(Error::config("monitor.delta", "must be > 0"));
        }
        if config.subsystems.is_empty() {
            return Err(Error::config("subsystems", "at least one subsystem is required"));
        }
        if config.tuples.is_empty() {
            return Err(Error::config("tuples", "at least one prediction tuple is required"));
        }
        let modes = ModeModel::new(config.subsystems.keys().copied().collect(), config.required)
            .map_err(|e| Error::config("system.required", e.to_string()))?;
        Ok(Self { config, modes })
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    pub fn modes(&self) -> &ModeModel {
        &self.modes
    }

    /// A-priori state: every subsystem fresh and idle, operating mode.
    pub fn initial_snapshot(&self) -> Result<MonitorSnapshot> {
        let horizon = self.config.horizon_at(0.0);
        let grid = TimeGrid::from_zero(self.config.delta, horizon)?;
        let health: BTreeMap<_, _> = self
            .config
            .subsystems
            .iter()
            .map(|(&id, p)| (id, SwsHealthState::fresh(p)))
            .collect();
        let nets = self
            .config
            .subsystems
            .iter()
            .map(|(&id, p)| Ok((id, build_net(&health[&id], p, &DiagnosticsWindow::idle(id, 0))?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let mode = self.modes.initial();
        let rbd = mode.rbd.clone().expect("operating mode has a diagram");
        let (subsystem_curves, system_curve) = initialize(&nets, &rbd, grid)?;
        Ok(MonitorSnapshot {
            step: 0,
            subsystem_curves,
            system_curve,
            mode,
            phases: self.config.subsystems.keys().map(|&id| (id, SubsystemPhase::Up)).collect(),
            health,
            ledger: AlarmLedger::default(),
            scheduler: Scheduler::default(),
            forecast: LoadForecast::new(self.config.load_profile.clone(), self.config.scheduler.forecast)?,
        })
    }

    /// Processes window `snapshot.step` and returns the next snapshot.
    ///
    /// `events` are the diagnostics events observed during the window, in
    /// time order. Missing windows are treated as idle. On error the input
    /// snapshot is untouched.
    pub fn step(
        &self,
        snapshot: &MonitorSnapshot,
        windows: &BTreeMap<SubsystemId, DiagnosticsWindow>,
        events: &[DiagnosticsEvent],
    ) -> Result<(MonitorSnapshot, StepReport)> {
        let cfg = &self.config;
        let delta = cfg.delta;
        let n = snapshot.step;
        let split = n as f64 * delta;
        let t_now = split + delta;
        let horizon = cfg.horizon_at(t_now);
        let mut next = snapshot.clone();
        next.step = n + 1;
        let mut plan_events = Vec::new();
        let mut cleared = Vec::new();
        let mut reports = BTreeMap::new();

        for (&id, params) in &cfg.subsystems {
            let window = windows.get(&id).cloned().unwrap_or_else(|| DiagnosticsWindow::idle(id, n));
            window.validate()?;
            let class = classify(events, id, snapshot.phases[&id])?;
            let ours = || events.iter().filter(move |e| e.subsystem == id);
            let failed = ours().any(|e| {
                matches!(
                    e.kind,
                    EventKind::Shutdown { cause: ShutdownCause::Failure } | EventKind::StartupTimeout
                )
            });
            let rejuvenation_started = ours().any(|e| {
                matches!(e.kind, EventKind::Shutdown { cause: ShutdownCause::Rejuvenation })
            });

            let mut health = snapshot.health[&id];
            if class.case == ConditionCase::Rejuvenated {
                health = SwsHealthState::fresh(params);
                cleared.extend(next.ledger.clear_subsystem(id));
                let done = next.scheduler.complete(id, split);
                plan_events.extend(done.or_else(|| next.scheduler.supersede(id, split)));
            }
            if failed {
                plan_events.extend(next.scheduler.supersede(id, split));
            }
            if !rejuvenation_started && class.phase_at_end.is_up() && class.case != ConditionCase::Rejuvenated {
                plan_events.extend(next.scheduler.requeue(id, split));
            }

            let prev = snapshot.subsystem_curves[&id].with_horizon(horizon)?;
            let curve = if class.phase_at_end.is_up() {
                health = update_health(&health, params, &window, delta, cfg.stage_policy);
                let net = build_net(&health, params, &window)?;
                let span = horizon - split;
                let target = prev.eval(split)?;
                let mut fresh_horizon = span.max(delta);
                let fresh = loop {
                    let grid = TimeGrid::from_zero(delta, fresh_horizon + span)?;
                    let fresh = transient_reliability(&net, grid);
                    // Conservation must find its match with a full tail behind it.
                    if class.case != ConditionCase::Conserve
                        || fresh.eval(fresh_horizon)? <= target
                        || target <= MIN_MATCH_TARGET
                        || fresh_horizon >= FRESH_HORIZON_CAP
                    {
                        break fresh;
                    }
                    fresh_horizon *= 2.0;
                };
                condition_step(&prev, &fresh, class.case, split, delta)?
            } else {
                condition_step(&prev, &prev, class.case, split, delta)?
            };
            next.health.insert(id, health);
            next.phases.insert(id, class.phase_at_end);
            reports.insert(
                id,
                SubsystemStep {
                    case: class.case,
                    phase: class.phase_at_end,
                    reliability_now: curve.eval(t_now)?,
                    current_k: health.current_k,
                    freeze_flagged: class.freeze_flagged,
                },
            );
            next.subsystem_curves.insert(id, curve);
        }

        let update = self.modes.select_mode(&snapshot.mode, events);
        let down: BTreeSet<_> = next.phases.iter().filter(|(_, p)| !p.is_up()).map(|(&id, _)| id).collect();
        if update.mode.down != down {
            return Err(Error::EventConsistency {
                subsystem: down.symmetric_difference(&update.mode.down).next().copied().unwrap_or(SubsystemId(0)),
                t: t_now,
                reason: "mode and subsystem phases disagree".into(),
            });
        }
        next.mode = update.mode;

        let prev_system = snapshot.system_curve.with_horizon(horizon)?;
        let in_diagram: BTreeMap<_, _> = next
            .subsystem_curves
            .iter()
            .filter(|(id, _)| !next.mode.down.contains(id))
            .map(|(&id, c)| (id, c.clone()))
            .collect();
        let replacement = match &next.mode.rbd {
            Some(rbd) => rbd.eval_curve(&in_diagram)?,
            None => ReliabilityCurve::constant(*prev_system.grid(), 0.0)?,
        };
        next.system_curve = splice_replace(&prev_system, &replacement, split)?;

        let (ledger, mut alarms) = step_alarms(
            &next.ledger,
            &AlarmInputs {
                t_now,
                system: next.mode.rbd.as_ref().map(|_| &next.system_curve),
                subsystems: &in_diagram,
                operating: next.mode.is_operating(),
            },
            &cfg.tuples,
        )?;
        next.ledger = ledger;
        alarms.cleared.splice(0..0, cleared);

        let load = mean_load(windows);
        next.forecast.observe(wall_hour(split, cfg.start_hour), load);

        let mut command = None;
        if cfg.rejuvenation {
            for alarm in &alarms.raised {
                let Scope::Subsystem(target) = alarm.scope else { continue };
                if !next.phases[&target].is_up() {
                    continue;
                }
                let due = due_time(alarm.priority, t_now, delta, cfg.start_hour, &cfg.scheduler, &next.forecast);
                plan_events.extend(next.scheduler.request(target, alarm.priority, t_now, due));
            }
            let r_now: BTreeMap<_, _> = reports.iter().map(|(&id, r)| (id, r.reliability_now)).collect();
            command = next
                .scheduler
                .dispatch(next.mode.is_operating(), t_now, &r_now, &mut plan_events);
        }

        let report = StepReport {
            step: n,
            split,
            t_now,
            mode: next.mode.id.label(),
            operating: next.mode.is_operating(),
            subsystems: reports,
            system_predicted_before: prev_system.eval(t_now)?,
            system_now: next.system_curve.eval(t_now)?,
            system_rul: remaining_useful_life(&next.system_curve, t_now)?,
            system_loss_at: update.system_loss_at,
            alarms,
            plan_events,
            command,
        };
        Ok((next, report))
    }
}

fn mean_load(windows: &BTreeMap<SubsystemId, DiagnosticsWindow>) -> f64 {
    if windows.is_empty() {
        return 0.0;
    }
    windows.values().map(|w| w.avg_cpu_load).sum::<f64>() / windows.len() as f64
}
