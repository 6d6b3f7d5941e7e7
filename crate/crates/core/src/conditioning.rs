//! Per-step conditioning of subsystem curves on diagnostics events.
//!
//! Each monitoring step looks at the events of one window and picks one of
//! three splices for every subsystem: restore (rejuvenated or repaired),
//! freeze (switched off without aging), or conserve (kept running). A
//! subsystem that ends the window down for any other reason is `Offline`:
//! its curve is held and it is excluded from the block diagram.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rbd::RbdNode;
use crate::relcurve::{splice_conserve, splice_freeze, splice_restore, ReliabilityCurve, TimeGrid};
use crate::stpn::{transient_reliability, FailureRaceNet};
use crate::SubsystemId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShutdownCause {
    Rejuvenation,
    Failure,
    /// Switch-off that stops aging. Meaningful for hardware only; accepted but flagged.
    Freeze,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    PowerOn,
    Shutdown { cause: ShutdownCause },
    /// The subsystem did not come up from init in time.
    StartupTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsEvent {
    pub t: f64,
    pub subsystem: SubsystemId,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl DiagnosticsEvent {
    pub fn new(t: f64, subsystem: SubsystemId, kind: EventKind) -> Self {
        Self { t, subsystem, kind }
    }
}

/// Why a subsystem is down, as seen from the event stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownCause {
    Rejuvenation,
    Failure,
    Freeze,
    StartupTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "phase", content = "cause", rename_all = "snake_case")]
pub enum SubsystemPhase {
    #[default]
    Up,
    Down(DownCause),
}

impl SubsystemPhase {
    pub fn is_up(&self) -> bool {
        matches!(self, SubsystemPhase::Up)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionCase {
    Rejuvenated,
    Frozen,
    Conserve,
    Offline,
}

impl ConditionCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionCase::Rejuvenated => "rejuvenated",
            ConditionCase::Frozen => "frozen",
            ConditionCase::Conserve => "conserve",
            ConditionCase::Offline => "offline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub case: ConditionCase,
    pub phase_at_end: SubsystemPhase,
    /// A freeze shutdown was seen; the software-only case study does not expect one.
    pub freeze_flagged: bool,
}

/// Classifies one subsystem's window from its phase at the window start.
///
/// Events for other subsystems are ignored. A power-on that ends a
/// rejuvenation, repair or failed start restores the subsystem; if it is
/// still up (or merely frozen) at the end of the window the case is
/// `Rejuvenated`, which wins over a later freeze.
pub fn classify(
    events: &[DiagnosticsEvent],
    subsystem: SubsystemId,
    phase_at_start: SubsystemPhase,
) -> Result<Classification> {
    let mut phase = phase_at_start;
    let mut restored = false;
    let mut freeze_flagged = false;
    let mut last_t = f64::NEG_INFINITY;
    for ev in events.iter().filter(|e| e.subsystem == subsystem) {
        let fail = |reason: &str| Error::EventConsistency {
            subsystem,
            t: ev.t,
            reason: reason.into(),
        };
        if ev.t < last_t {
            return Err(fail("events are not in time order"));
        }
        last_t = ev.t;
        phase = match (phase, ev.kind) {
            (SubsystemPhase::Up, EventKind::PowerOn) => return Err(fail("power-on while already on")),
            (SubsystemPhase::Down(cause), EventKind::PowerOn) => {
                if cause != DownCause::Freeze {
                    restored = true;
                }
                SubsystemPhase::Up
            }
            (SubsystemPhase::Down(_), EventKind::Shutdown { .. }) => {
                return Err(fail("shutdown while already down"))
            }
            (SubsystemPhase::Up, EventKind::Shutdown { cause }) => {
                SubsystemPhase::Down(match cause {
                    ShutdownCause::Rejuvenation => DownCause::Rejuvenation,
                    ShutdownCause::Failure => DownCause::Failure,
                    ShutdownCause::Freeze => {
                        freeze_flagged = true;
                        DownCause::Freeze
                    }
                })
            }
            (SubsystemPhase::Up, EventKind::StartupTimeout) => {
                return Err(fail("startup timeout while running"))
            }
            (SubsystemPhase::Down(_), EventKind::StartupTimeout) => {
                SubsystemPhase::Down(DownCause::StartupTimeout)
            }
        };
    }
    let case = match phase {
        SubsystemPhase::Up | SubsystemPhase::Down(DownCause::Freeze) if restored => {
            ConditionCase::Rejuvenated
        }
        SubsystemPhase::Down(DownCause::Freeze) => ConditionCase::Frozen,
        SubsystemPhase::Down(_) => ConditionCase::Offline,
        SubsystemPhase::Up => ConditionCase::Conserve,
    };
    Ok(Classification {
        case,
        phase_at_end: phase,
        freeze_flagged,
    })
}

/// Builds `R^{n+1}` from `R^n` and the fresh curve, splitting at `n_delta`.
///
/// `Offline` holds the curve like a freeze: nothing is learned while down.
pub fn condition_step(
    prev: &ReliabilityCurve,
    fresh: &ReliabilityCurve,
    case: ConditionCase,
    n_delta: f64,
    delta: f64,
) -> Result<ReliabilityCurve> {
    match case {
        ConditionCase::Rejuvenated => splice_restore(prev, fresh, n_delta),
        ConditionCase::Frozen | ConditionCase::Offline => splice_freeze(prev, n_delta),
        ConditionCase::Conserve => splice_conserve(prev, fresh, n_delta, delta),
    }
}

/// A-priori subsystem curves and the system curve of the operating diagram.
pub fn initialize(
    nets: &BTreeMap<SubsystemId, FailureRaceNet>,
    rbd_operating: &RbdNode,
    grid: TimeGrid,
) -> Result<(BTreeMap<SubsystemId, ReliabilityCurve>, ReliabilityCurve)> {
    let curves: BTreeMap<_, _> = nets
        .iter()
        .map(|(&id, net)| (id, transient_reliability(net, grid)))
        .collect();
    let system = rbd_operating.eval_curve(&curves)?;
    Ok((curves, system))
}
