//! Seeded discrete-event simulation of a k-out-of-n software system.
//!
//! The simulator owns the ground truth: subsystem lifecycles, the stimulus
//! stream, CPU load and failure injection. Every `δ` hours it hands one window
//! of diagnostics data and the events emitted during the window to the
//! [`Monitor`], and executes the rejuvenation command the monitor returns.
//!
//! Random streams are split by purpose (stimuli, loads, per-subsystem faults,
//! per-subsystem lifecycle delays) so that paired runs with and without
//! rejuvenation share the workload exactly.

mod faults;
mod lifecycle;
mod workload;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use faults::{inject_failures, FailureSource, FaultInjector};
pub use lifecycle::{DelayDistribution, InitReason, LifecycleConfig, SwsLifecycle, SwsState};
pub use workload::WorkloadProfile;

use crate::conditioning::{DiagnosticsEvent, EventKind, ShutdownCause};
use crate::error::{Error, Result};
use crate::frf::DiagnosticsWindow;
use crate::monitor::{Monitor, MonitorConfig, MonitorSnapshot, StepReport};
use crate::prognostics::Priority;
use crate::SubsystemId;

const STIMULUS_STREAM: u64 = 0;
const LOAD_STREAM: u64 = 1;
const FAULT_STREAM_BASE: u64 = 1_000;
const LIFECYCLE_STREAM_BASE: u64 = 2_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub monitor: MonitorConfig,
    pub lifecycle: LifecycleConfig,
    pub workload: WorkloadProfile,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.lifecycle.validate()?;
        self.workload.validate()?;
        Monitor::new(self.monitor.clone())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub duration_hours: f64,
    /// Run the monitor loop. Without it no alarms or commands are produced.
    pub monitor: bool,
    /// Execute rejuvenation commands. Ignored when the monitor is off.
    pub rejuvenation: bool,
}

impl RunOptions {
    pub fn new(seed: u64, duration_hours: f64) -> Self {
        Self {
            seed,
            duration_hours,
            monitor: true,
            rejuvenation: true,
        }
    }

    /// The failure-only arm: no monitor, repairs only.
    pub fn failure_only(seed: u64, duration_hours: f64) -> Self {
        Self {
            seed,
            duration_hours,
            monitor: false,
            rejuvenation: false,
        }
    }
}

/// Inputs handed to the monitor for one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    pub step: u64,
    pub windows: BTreeMap<SubsystemId, DiagnosticsWindow>,
    /// Indices into [`SimulationTrace::events`].
    pub events: Range<usize>,
    /// Subsystems not working at the end of the window.
    pub truth_down: BTreeSet<SubsystemId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommandRecord {
    pub t: f64,
    pub target: SubsystemId,
    pub priority: Priority,
    /// False when some subsystem was down and the command was rejected.
    pub executed: bool,
    /// Working subsystems when the command arrived.
    pub working: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FailureRecord {
    pub t: f64,
    pub subsystem: SubsystemId,
    pub source: FailureSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DowntimeRecord {
    pub subsystem: SubsystemId,
    pub reason: InitReason,
    pub start: f64,
    /// `None` when the run ended while the subsystem was down.
    pub end: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub seed: u64,
    pub duration_hours: f64,
    /// Fraction of time with at least the required number of working subsystems.
    pub availability: f64,
    pub unavailable_hours: f64,
    pub system_losses: u32,
    pub failures: u32,
    pub rejuvenations: u32,
    pub rejected_commands: u32,
    pub alarms_raised: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationTrace {
    pub events: Vec<DiagnosticsEvent>,
    pub windows: Vec<WindowRecord>,
    pub reports: Vec<StepReport>,
    pub commands: Vec<CommandRecord>,
    pub failures: Vec<FailureRecord>,
    pub downtimes: Vec<DowntimeRecord>,
    pub stats: RunStats,
    #[serde(skip)]
    pub final_snapshot: Option<MonitorSnapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ev {
    Stimulus,
    WindowEnd(u64),
    Lifecycle { sws: usize, epoch: u64 },
    App { sws: usize, epoch: u64, token: u64 },
    Os { sws: usize, epoch: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Queued {
    t: f64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then(other.seq.cmp(&self.seq))
    }
}

/// Event queue ordered by (time, insertion sequence).
#[derive(Debug, Default)]
struct Clock {
    t: f64,
    seq: u64,
    queue: BinaryHeap<Queued>,
}

impl Clock {
    fn push(&mut self, t: f64, ev: Ev) {
        if t.is_finite() {
            self.queue.push(Queued { t, seq: self.seq, ev });
            self.seq += 1;
        }
    }

    fn pop_until(&mut self, end: f64) -> Option<(f64, Ev)> {
        let next = self.queue.peek()?;
        if next.t > end {
            return None;
        }
        let q = self.queue.pop()?;
        self.t = q.t;
        Some((q.t, q.ev))
    }
}

struct Sws {
    id: SubsystemId,
    life: SwsLifecycle,
    faults: FaultInjector,
    stimuli: u64,
    load: f64,
    epoch: u64,
    app_token: u64,
    fault_rng: ChaCha8Rng,
    life_rng: ChaCha8Rng,
    downtime: Option<usize>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct Sim<'a> {
    config: &'a SimulationConfig,
    options: RunOptions,
    clock: Clock,
    sws: Vec<Sws>,
    stimulus_rng: ChaCha8Rng,
    load_rng: ChaCha8Rng,
    trace: SimulationTrace,
    window_start: usize,
    available: bool,
    available_since: f64,
    unavailable_hours: f64,
}

impl<'a> Sim<'a> {
    fn new(config: &'a SimulationConfig, options: RunOptions) -> Self {
        let seed = options.seed;
        let sws = config
            .monitor
            .subsystems
            .iter()
            .map(|(&id, p)| Sws {
                id,
                life: SwsLifecycle::working(0.0),
                faults: FaultInjector::new(*p),
                stimuli: 0,
                load: 0.0,
                epoch: 0,
                app_token: 0,
                fault_rng: stream(seed, FAULT_STREAM_BASE + id.0 as u64),
                life_rng: stream(seed, LIFECYCLE_STREAM_BASE + id.0 as u64),
                downtime: None,
            })
            .collect();
        Self {
            config,
            options,
            clock: Clock::default(),
            sws,
            stimulus_rng: stream(seed, STIMULUS_STREAM),
            load_rng: stream(seed, LOAD_STREAM),
            trace: SimulationTrace {
                events: Vec::new(),
                windows: Vec::new(),
                reports: Vec::new(),
                commands: Vec::new(),
                failures: Vec::new(),
                downtimes: Vec::new(),
                stats: RunStats {
                    seed,
                    duration_hours: options.duration_hours,
                    ..Default::default()
                },
                final_snapshot: None,
            },
            window_start: 0,
            available: true,
            available_since: 0.0,
            unavailable_hours: 0.0,
        }
    }

    fn start_hour(&self) -> f64 {
        self.config.monitor.start_hour
    }

    fn working(&self) -> usize {
        self.sws.iter().filter(|s| s.life.is_working()).count()
    }

    fn update_availability(&mut self, t: f64) {
        let now = self.working() >= self.config.monitor.required;
        if now == self.available {
            return;
        }
        if self.available {
            self.trace.stats.system_losses += 1;
        } else {
            self.unavailable_hours += t - self.available_since;
        }
        self.available = now;
        self.available_since = t;
    }

    fn emit(&mut self, t: f64, i: usize, kind: EventKind) {
        self.trace.events.push(DiagnosticsEvent::new(t, self.sws[i].id, kind));
    }

    fn arm_candidates(&mut self, i: usize, t: f64) {
        let s = &mut self.sws[i];
        s.app_token += 1;
        let (epoch, token) = (s.epoch, s.app_token);
        let app = s.faults.app_candidate(&mut s.fault_rng, t, s.stimuli);
        let os = s.faults.os_candidate(&mut s.fault_rng, t);
        self.clock.push(app, Ev::App { sws: i, epoch, token });
        self.clock.push(os, Ev::Os { sws: i, epoch });
    }

    fn draw_loads(&mut self, t: f64) {
        let start_hour = self.start_hour();
        for s in &mut self.sws {
            s.load = self.config.workload.window_load(&mut self.load_rng, t, start_hour);
        }
    }

    fn schedule_stimulus(&mut self, t: f64) {
        let start_hour = self.start_hour();
        if let Some(next) = self.config.workload.next_stimulus(&mut self.stimulus_rng, t, start_hour) {
            self.clock.push(next, Ev::Stimulus);
        }
    }

    fn on_stimulus(&mut self, t: f64) {
        for i in 0..self.sws.len() {
            if !self.sws[i].life.is_working() {
                continue;
            }
            let s = &mut self.sws[i];
            s.stimuli += 1;
            s.app_token += 1;
            let (epoch, token) = (s.epoch, s.app_token);
            let app = s.faults.app_candidate(&mut s.fault_rng, t, s.stimuli);
            self.clock.push(app, Ev::App { sws: i, epoch, token });
        }
        self.schedule_stimulus(t);
    }

    fn fail(&mut self, i: usize, t: f64, source: FailureSource) {
        self.emit(t, i, EventKind::Shutdown { cause: ShutdownCause::Failure });
        self.trace.failures.push(FailureRecord {
            t,
            subsystem: self.sws[i].id,
            source,
        });
        self.trace.stats.failures += 1;
        self.trace.downtimes.push(DowntimeRecord {
            subsystem: self.sws[i].id,
            reason: InitReason::Repair,
            start: t,
            end: None,
        });
        self.sws[i].downtime = Some(self.trace.downtimes.len() - 1);
        self.enter_failed(i, t);
    }

    fn enter_failed(&mut self, i: usize, t: f64) {
        let lifecycle = self.config.lifecycle;
        let s = &mut self.sws[i];
        s.epoch += 1;
        let until = t + lifecycle.repair_delay(&mut s.life_rng);
        s.life.enter(SwsState::Failed, t, Some(until));
        let epoch = s.epoch;
        self.clock.push(until, Ev::Lifecycle { sws: i, epoch });
        self.update_availability(t);
    }

    fn enter_init(&mut self, i: usize, t: f64, reason: InitReason) {
        let lifecycle = self.config.lifecycle;
        let s = &mut self.sws[i];
        s.epoch += 1;
        let until = t + lifecycle.init_delay(&mut s.life_rng);
        s.life.enter(SwsState::Init { reason }, t, Some(until));
        let epoch = s.epoch;
        self.clock.push(until, Ev::Lifecycle { sws: i, epoch });
        self.update_availability(t);
    }

    fn on_lifecycle(&mut self, i: usize, t: f64) {
        match self.sws[i].life.state {
            SwsState::Failed => self.enter_init(i, t, InitReason::Repair),
            SwsState::Init { .. } => {
                let lifecycle = self.config.lifecycle;
                if lifecycle.startup_fails(&mut self.sws[i].life_rng) {
                    self.emit(t, i, EventKind::StartupTimeout);
                    self.enter_failed(i, t);
                    return;
                }
                self.emit(t, i, EventKind::PowerOn);
                let s = &mut self.sws[i];
                s.epoch += 1;
                s.stimuli = 0;
                s.faults.reset();
                s.life.enter(SwsState::Working, t, None);
                if let Some(k) = s.downtime.take() {
                    self.trace.downtimes[k].end = Some(t);
                }
                self.arm_candidates(i, t);
                self.update_availability(t);
            }
            SwsState::Working => {}
        }
    }

    /// Starts a rejuvenation if every subsystem is working.
    fn execute_rejuvenation(&mut self, target: SubsystemId, priority: Priority, t: f64) {
        let working = self.working();
        let i = self.sws.iter().position(|s| s.id == target);
        let executed = self.options.rejuvenation && working == self.sws.len() && i.is_some();
        self.trace.commands.push(CommandRecord {
            t,
            target,
            priority,
            executed,
            working,
        });
        let Some(i) = i.filter(|_| executed) else {
            self.trace.stats.rejected_commands += 1;
            return;
        };
        self.emit(t, i, EventKind::Shutdown { cause: ShutdownCause::Rejuvenation });
        self.trace.stats.rejuvenations += 1;
        self.trace.downtimes.push(DowntimeRecord {
            subsystem: target,
            reason: InitReason::Rejuvenation,
            start: t,
            end: None,
        });
        self.sws[i].downtime = Some(self.trace.downtimes.len() - 1);
        self.enter_init(i, t, InitReason::Rejuvenation);
    }

    fn on_window_end(
        &mut self,
        n: u64,
        t: f64,
        monitor: Option<&Monitor>,
        snapshot: &mut Option<MonitorSnapshot>,
        hook: &mut dyn FnMut(&MonitorSnapshot, &StepReport),
    ) -> Result<()> {
        let windows: BTreeMap<_, _> = self
            .sws
            .iter()
            .map(|s| {
                (
                    s.id,
                    DiagnosticsWindow {
                        subsystem: s.id,
                        window_index: n,
                        stimuli_total: s.stimuli,
                        avg_cpu_load: s.load,
                    },
                )
            })
            .collect();
        let events = self.window_start..self.trace.events.len();
        self.window_start = events.end;
        let truth_down = self.sws.iter().filter(|s| !s.life.is_working()).map(|s| s.id).collect();

        let mut command = None;
        if let (Some(monitor), Some(snap)) = (monitor, snapshot.as_mut()) {
            let (next, report) = monitor.step(snap, &windows, &self.trace.events[events.clone()])?;
            hook(&next, &report);
            self.trace.stats.alarms_raised += report.alarms.raised.len() as u32;
            command = report.command;
            *snap = next;
            self.trace.reports.push(report);
        }
        self.trace.windows.push(WindowRecord {
            step: n,
            windows,
            events,
            truth_down,
        });
        if let Some(cmd) = command {
            self.execute_rejuvenation(cmd.target, cmd.priority, t);
        }
        self.draw_loads(t);
        Ok(())
    }

    fn run(
        mut self,
        monitor: Option<&Monitor>,
        hook: &mut dyn FnMut(&MonitorSnapshot, &StepReport),
    ) -> Result<SimulationTrace> {
        let delta = self.config.monitor.delta;
        let end = self.options.duration_hours;
        let mut snapshot = monitor.map(|m| m.initial_snapshot()).transpose()?;

        self.draw_loads(0.0);
        for i in 0..self.sws.len() {
            self.arm_candidates(i, 0.0);
        }
        self.schedule_stimulus(0.0);
        self.clock.push(delta, Ev::WindowEnd(0));

        while let Some((t, ev)) = self.clock.pop_until(end) {
            match ev {
                Ev::Stimulus => self.on_stimulus(t),
                Ev::WindowEnd(n) => {
                    self.on_window_end(n, t, monitor, &mut snapshot, hook)?;
                    self.clock.push((n + 2) as f64 * delta, Ev::WindowEnd(n + 1));
                }
                Ev::Lifecycle { sws, epoch } if self.sws[sws].epoch == epoch => self.on_lifecycle(sws, t),
                Ev::App { sws, epoch, token } => {
                    let s = &self.sws[sws];
                    if s.epoch == epoch && s.app_token == token && s.life.is_working() {
                        self.fail(sws, t, FailureSource::Application);
                    }
                }
                Ev::Os { sws, epoch } => {
                    let s = &mut self.sws[sws];
                    if s.epoch != epoch || !s.life.is_working() {
                        continue;
                    }
                    if s.faults.os_accept(&mut s.fault_rng, s.load) {
                        self.fail(sws, t, FailureSource::Os);
                    } else {
                        let next = s.faults.os_candidate(&mut s.fault_rng, t);
                        self.clock.push(next, Ev::Os { sws, epoch });
                    }
                }
                Ev::Lifecycle { .. } => {}
            }
        }

        if !self.available {
            self.unavailable_hours += end - self.available_since;
        }
        let stats = &mut self.trace.stats;
        stats.unavailable_hours = self.unavailable_hours;
        stats.availability = if end > 0.0 { 1.0 - self.unavailable_hours / end } else { 1.0 };
        self.trace.final_snapshot = snapshot;
        Ok(self.trace)
    }
}

/// Runs one simulation.
pub fn run(config: &SimulationConfig, options: RunOptions) -> Result<SimulationTrace> {
    run_with(config, options, &mut |_, _| {})
}

/// Runs one simulation, calling `hook` after every monitor step.
pub fn run_with(
    config: &SimulationConfig,
    options: RunOptions,
    hook: &mut dyn FnMut(&MonitorSnapshot, &StepReport),
) -> Result<SimulationTrace> {
    config.validate()?;
    if !(options.duration_hours.is_finite() && options.duration_hours >= 0.0) {
        return Err(Error::config("duration_hours", "must be a finite number >= 0"));
    }
    let mut monitor_config = config.monitor.clone();
    monitor_config.rejuvenation = options.rejuvenation && monitor_config.rejuvenation;
    let monitor = options.monitor.then(|| Monitor::new(monitor_config)).transpose()?;
    Sim::new(config, options).run(monitor.as_ref(), hook)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbPair {
    pub seed: u64,
    pub with_rbm: RunStats,
    pub without_rbm: RunStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbReport {
    pub duration_hours: f64,
    pub pairs: Vec<AbPair>,
    pub mean_availability_with: f64,
    pub mean_availability_without: f64,
    pub mean_losses_with: f64,
    pub mean_losses_without: f64,
    /// Fraction of pairs where the RBM arm had no more system losses than the other.
    pub loss_dominance: f64,
}

/// Paired comparison of runs with and without predictive rejuvenation.
pub fn ab_compare(config: &SimulationConfig, seeds: &[u64], duration_hours: f64) -> Result<AbReport> {
    if seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed is required"));
    }
    let pairs = seeds
        .par_iter()
        .map(|&seed| {
            let with_rbm = run(config, RunOptions::new(seed, duration_hours))?.stats;
            let without_rbm = run(config, RunOptions::failure_only(seed, duration_hours))?.stats;
            Ok(AbPair {
                seed,
                with_rbm,
                without_rbm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = pairs.len() as f64;
    let mean = |f: &dyn Fn(&AbPair) -> f64| pairs.iter().map(f).sum::<f64>() / n;
    Ok(AbReport {
        duration_hours,
        mean_availability_with: mean(&|p| p.with_rbm.availability),
        mean_availability_without: mean(&|p| p.without_rbm.availability),
        mean_losses_with: mean(&|p| p.with_rbm.system_losses as f64),
        mean_losses_without: mean(&|p| p.without_rbm.system_losses as f64),
        loss_dominance: pairs
            .iter()
            .filter(|p| p.with_rbm.system_losses <= p.without_rbm.system_losses)
            .count() as f64
            / n,
        pairs,
    })
}
