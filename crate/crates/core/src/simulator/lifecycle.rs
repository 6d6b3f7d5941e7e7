//! Subsystem lifecycle: init, working, failed.
//!
//! A rejuvenated subsystem spends one init delay (mean MTTI) down; a failed
//! one spends a repair delay (mean MTTR) and then an init delay.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayDistribution {
    #[default]
    Exponential,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifecycleConfig {
    #[serde(default = "default_mtti")]
    pub mtti_minutes: f64,
    #[serde(default = "default_mttr")]
    pub mttr_minutes: f64,
    /// Probability that an init ends in a startup timeout instead of a power-on.
    #[serde(default)]
    pub startup_failure_probability: f64,
    #[serde(default)]
    pub delay: DelayDistribution,
}

fn default_mtti() -> f64 {
    3.0
}

fn default_mttr() -> f64 {
    40.0
}

impl Default for LifecycleConfig {
    fn default() -> Self {
        Self {
            mtti_minutes: default_mtti(),
            mttr_minutes: default_mttr(),
            startup_failure_probability: 0.0,
            delay: DelayDistribution::Exponential,
        }
    }
}

impl LifecycleConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mtti_minutes", self.mtti_minutes), ("mttr_minutes", self.mttr_minutes)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("lifecycle.{name}"), format!("{v} must be > 0")));
            }
        }
        if !(0.0..1.0).contains(&self.startup_failure_probability) {
            return Err(Error::config(
                "lifecycle.startup_failure_probability",
                "must be in [0, 1)",
            ));
        }
        Ok(())
    }

    pub fn mtti_hours(&self) -> f64 {
        self.mtti_minutes / 60.0
    }

    pub fn mttr_hours(&self) -> f64 {
        self.mttr_minutes / 60.0
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, mean: f64) -> f64 {
        match self.delay {
            DelayDistribution::Exponential => Exp::new(1.0 / mean).expect("positive mean").sample(rng),
            DelayDistribution::Deterministic => mean,
        }
    }

    pub fn init_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.draw(rng, self.mtti_hours())
    }

    pub fn repair_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.draw(rng, self.mttr_hours())
    }

    pub fn startup_fails<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        self.startup_failure_probability > 0.0 && rng.random::<f64>() < self.startup_failure_probability
    }
}

/// Why a subsystem is initializing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitReason {
    Rejuvenation,
    Repair,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SwsState {
    Working,
    Init { reason: InitReason },
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwsLifecycle {
    pub state: SwsState,
    pub state_entered_at: f64,
    /// Scheduled end of the current init or repair.
    pub pending_transition: Option<f64>,
}

impl SwsLifecycle {
    pub fn working(t: f64) -> Self {
        Self {
            state: SwsState::Working,
            state_entered_at: t,
            pending_transition: None,
        }
    }

    pub fn is_working(&self) -> bool {
        matches!(self.state, SwsState::Working)
    }

    pub fn enter(&mut self, state: SwsState, t: f64, until: Option<f64>) {
        self.state = state;
        self.state_entered_at = t;
        self.pending_transition = until;
    }
}
