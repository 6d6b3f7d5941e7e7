//! Failure-rate functions: diagnostics data to net parameters.
//!
//! Application failures follow a rate that grows with the number of external
//! stimuli since power-on, `α + s·β`. OS failures are the `k`-th fault of a
//! stream with rate `λ¹ + λ²·L_cpu`; `k` shrinks as faults are expected to
//! accumulate and is restored by rejuvenation or repair.

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::stpn::{FailureRaceNet, FiringDistribution, Transition};
use crate::SubsystemId;

/// Name of the application-failure transition in every built net.
pub const APP_TRANSITION: &str = "application";
/// Name of the OS-failure transition in every built net.
pub const OS_TRANSITION: &str = "os";

/// Diagnostics data collected for one subsystem over one monitoring period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsWindow {
    pub subsystem: SubsystemId,
    pub window_index: u64,
    /// Stimuli received since the last power-on, read at the end of the window.
    pub stimuli_total: u64,
    pub avg_cpu_load: f64,
}

impl DiagnosticsWindow {
    /// A window with no stimuli and an idle CPU.
    pub fn idle(subsystem: SubsystemId, window_index: u64) -> Self {
        Self {
            subsystem,
            window_index,
            stimuli_total: 0,
            avg_cpu_load: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.avg_cpu_load) {
            return Err(Error::InvalidProbability {
                what: "average CPU load",
                value: self.avg_cpu_load,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwsFrfParams {
    #[serde(deserialize_with = "de_rate")]
    pub alpha: f64,
    #[serde(deserialize_with = "de_rate")]
    pub beta: f64,
    #[serde(deserialize_with = "de_rate")]
    pub lambda1: f64,
    #[serde(deserialize_with = "de_rate")]
    pub lambda2: f64,
    pub k0: u32,
}

impl SwsFrfParams {
    /// Default parameters of the three diverse software systems.
    pub fn table(id: u32) -> Option<Self> {
        let p = |a: f64, b: f64, l1: f64, l2: f64, k0| Self {
            alpha: 1.0 / a,
            beta: 1.0 / b,
            lambda1: 1.0 / l1,
            lambda2: 1.0 / l2,
            k0,
        };
        match id {
            1 => Some(p(8640.0, 8013.0, 1267.0, 1901.0, 7)),
            2 => Some(p(14112.0, 15158.0, 4637.0, 1987.0, 5)),
            3 => Some(p(5760.0, 21936.0, 3326.0, 2722.0, 11)),
            _ => None,
        }
    }

    /// Validates rates and stage budget; `field` prefixes error locations.
    pub fn validate(&self, field: &str) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ] {
            // β and λ² may be zero: that switches the stimulus or load dependence off.
            let ok = v.is_finite() && if name == "beta" || name == "lambda2" { v >= 0.0 } else { v > 0.0 };
            if !ok {
                return Err(Error::config(format!("{field}.{name}"), format!("invalid rate {v}")));
            }
        }
        if self.k0 < 1 {
            return Err(Error::config(format!("{field}.k0"), "k0 must be >= 1"));
        }
        Ok(())
    }
}

/// Accepts a plain number or a reciprocal written as `"1/N"`.
pub fn parse_rate(text: &str) -> Option<f64> {
    let text = text.trim();
    match text.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().ok()?;
            let den: f64 = den.trim().parse().ok()?;
            (den != 0.0).then(|| num / den)
        }
        None => text.parse().ok(),
    }
}

fn de_rate<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Int(i64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Int(v) => Ok(v as f64),
        Raw::Text(s) => parse_rate(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("`{s}` is not a rate (use a number or 1/N)"))),
    }
}

/// Rule mapping accumulated fault intensity to the remaining Erlang stages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StagePolicy {
    /// `k = max(1, k0 - floor(Λ̂))` with `Λ̂ = Σ λ·δ` since the last restart.
    #[default]
    ExpectedFaultCount,
    /// `k` stays at `k0`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwsHealthState {
    pub current_k: u32,
    pub cumulative_fault_intensity: f64,
    /// `(r_app, λ)` used for the most recent net.
    pub last_rates: (f64, f64),
}

impl SwsHealthState {
    /// State right after power-on.
    pub fn fresh(params: &SwsFrfParams) -> Self {
        Self {
            current_k: params.k0,
            cumulative_fault_intensity: 0.0,
            last_rates: (params.alpha, params.lambda1),
        }
    }
}

pub fn app_rate(params: &SwsFrfParams, window: &DiagnosticsWindow) -> f64 {
    params.alpha + window.stimuli_total as f64 * params.beta
}

pub fn os_lambda(params: &SwsFrfParams, window: &DiagnosticsWindow) -> f64 {
    params.lambda1 + params.lambda2 * window.avg_cpu_load
}

pub fn update_health(
    state: &SwsHealthState,
    params: &SwsFrfParams,
    window: &DiagnosticsWindow,
    delta: f64,
    policy: StagePolicy,
) -> SwsHealthState {
    let lambda = os_lambda(params, window);
    let intensity = state.cumulative_fault_intensity + lambda * delta;
    let current_k = match policy {
        StagePolicy::ExpectedFaultCount => {
            let consumed = intensity.floor().min(u32::MAX as f64) as u32;
            params.k0.saturating_sub(consumed).max(1).min(state.current_k)
        }
        StagePolicy::Fixed => params.k0,
    };
    SwsHealthState {
        current_k,
        cumulative_fault_intensity: intensity,
        last_rates: (app_rate(params, window), lambda),
    }
}

/// Fresh (unconditioned) net: application exponential racing an OS Erlang.
pub fn build_net(
    state: &SwsHealthState,
    params: &SwsFrfParams,
    window: &DiagnosticsWindow,
) -> Result<FailureRaceNet> {
    FailureRaceNet::new(
        window.subsystem,
        vec![
            Transition {
                name: APP_TRANSITION.into(),
                dist: FiringDistribution::Exponential {
                    rate: app_rate(params, window),
                },
            },
            Transition {
                name: OS_TRANSITION.into(),
                dist: FiringDistribution::Erlang {
                    k: state.current_k,
                    rate: os_lambda(params, window),
                },
            },
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relcurve::TimeGrid;
    use crate::stpn::transient_reliability;
    use proptest::prelude::*;

    fn window(s: u64, load: f64) -> DiagnosticsWindow {
        DiagnosticsWindow {
            subsystem: SubsystemId(1),
            window_index: 0,
            stimuli_total: s,
            avg_cpu_load: load,
        }
    }

    fn sws1() -> SwsFrfParams {
        SwsFrfParams::table(1).unwrap()
    }

    #[test]
    fn application_rate() {
        assert!((app_rate(&sws1(), &window(0, 0.0)) - 1.1574e-4).abs() < 1e-8);
        assert!((app_rate(&sws1(), &window(10, 0.0)) - 1.363_712_8e-3).abs() < 1e-9);
        let p = SwsFrfParams { beta: 0.0, ..sws1() };
        assert_eq!(app_rate(&p, &window(500, 0.0)), p.alpha);
    }

    #[test]
    fn os_rate() {
        assert!((os_lambda(&sws1(), &window(0, 0.0)) - 7.8927e-4).abs() < 1e-8);
        assert!((os_lambda(&sws1(), &window(0, 0.5)) - 1.052_285_4e-3).abs() < 1e-9);
        let p = sws1();
        assert_eq!(os_lambda(&p, &window(0, 1.0)), p.lambda1 + p.lambda2);
    }

    #[test]
    fn stage_count_floor_rule() {
        let p = SwsFrfParams { k0: 5, ..sws1() };
        let s = SwsHealthState::fresh(&p);
        let s1 = update_health(&s, &p, &window(0, 1.0), 0.5, StagePolicy::ExpectedFaultCount);
        assert_eq!(s1.current_k, 5);

        // λ·δ = 0.25 per step: Λ̂ reaches exactly 1.0 after four steps.
        let q = SwsFrfParams { lambda1: 0.5, lambda2: 0.0, ..p };
        let mut st = SwsHealthState::fresh(&q);
        for _ in 0..3 {
            st = update_health(&st, &q, &window(0, 0.0), 0.5, StagePolicy::ExpectedFaultCount);
        }
        assert_eq!(st.current_k, 5);
        st = update_health(&st, &q, &window(0, 0.0), 0.5, StagePolicy::ExpectedFaultCount);
        assert_eq!(st.cumulative_fault_intensity, 1.0);
        assert_eq!(st.current_k, 4);
        for _ in 0..100 {
            st = update_health(&st, &q, &window(0, 0.0), 0.5, StagePolicy::ExpectedFaultCount);
        }
        assert_eq!(st.current_k, 1);

        let fixed = update_health(&st, &q, &window(0, 0.0), 0.5, StagePolicy::Fixed);
        assert_eq!(fixed.current_k, 5);

        let reset = SwsHealthState::fresh(&q);
        assert_eq!((reset.current_k, reset.cumulative_fault_intensity), (5, 0.0));
    }

    #[test]
    fn nets_from_table_parameters() {
        let st = SwsHealthState::fresh(&sws1());
        let net = build_net(&st, &sws1(), &window(0, 0.0)).unwrap();
        assert_eq!(
            net.transitions()[0].dist,
            FiringDistribution::Exponential { rate: 1.0 / 8640.0 }
        );
        assert_eq!(
            net.transitions()[1].dist,
            FiringDistribution::Erlang { k: 7, rate: 1.0 / 1267.0 }
        );

        let p2 = SwsFrfParams::table(2).unwrap();
        let w2 = DiagnosticsWindow::idle(SubsystemId(2), 0);
        let net = build_net(&SwsHealthState::fresh(&p2), &p2, &w2).unwrap();
        assert!(matches!(net.transitions()[1].dist, FiringDistribution::Erlang { k: 5, .. }));

        let spent = SwsHealthState { current_k: 1, ..st };
        let net = build_net(&spent, &sws1(), &window(0, 0.0)).unwrap();
        let grid = TimeGrid::from_zero(0.5, 100.0).unwrap();
        let c = transient_reliability(&net, grid);
        let total = 1.0 / 8640.0 + 1.0 / 1267.0;
        assert!((c.eval(100.0).unwrap() - (-total * 100.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn each_parameter_feeds_one_operation() {
        let base = sws1();
        let w = window(10, 0.5);
        let probe = |p: &SwsFrfParams| {
            (
                app_rate(p, &w),
                os_lambda(p, &w),
                update_health(&SwsHealthState::fresh(p), p, &w, 2000.0, StagePolicy::ExpectedFaultCount)
                    .current_k,
            )
        };
        let b = probe(&base);
        let changed = |p: SwsFrfParams| {
            let v = probe(&p);
            [v.0 != b.0, v.1 != b.1, v.2 != b.2]
        };
        assert_eq!(changed(SwsFrfParams { alpha: 1.0, ..base }), [true, false, false]);
        assert_eq!(changed(SwsFrfParams { beta: 1.0, ..base }), [true, false, false]);
        assert_eq!(changed(SwsFrfParams { lambda1: 1.0, ..base })[..2], [false, true]);
        assert_eq!(changed(SwsFrfParams { lambda2: 1.0, ..base })[..2], [false, true]);
        assert_eq!(changed(SwsFrfParams { k0: 20, ..base }), [false, false, true]);
    }

    #[test]
    fn rate_strings() {
        assert_eq!(parse_rate("1/8640"), Some(1.0 / 8640.0));
        assert_eq!(parse_rate(" 0.25 "), Some(0.25));
        assert_eq!(parse_rate("1/0"), None);
        assert_eq!(parse_rate("fast"), None);

        let p: SwsFrfParams = toml::from_str(
            "alpha = \"1/8640\"\nbeta = 0.001\nlambda1 = \"1/1267\"\nlambda2 = 0\nk0 = 7\n",
        )
        .unwrap();
        assert_eq!(p.alpha, 1.0 / 8640.0);
        assert_eq!(p.lambda2, 0.0);
        assert!(p.validate("subsystems[0]").is_ok());
        let bad = SwsFrfParams { alpha: 0.0, ..p };
        let err = bad.validate("subsystems[0]").unwrap_err();
        assert!(err.to_string().contains("subsystems[0].alpha"));
    }

    proptest! {
        #[test]
        fn rates_monotone(s1 in 0u64..10_000, ds in 0u64..1000, l in 0.0f64..=1.0, dl in 0.0f64..=1.0) {
            let p = sws1();
            let l2 = (l + dl).min(1.0);
            prop_assert!(app_rate(&p, &window(s1, l)) <= app_rate(&p, &window(s1 + ds, l)));
            prop_assert!(os_lambda(&p, &window(s1, l)) <= os_lambda(&p, &window(s1, l2)));
        }

        #[test]
        fn stage_count_never_increases(loads in proptest::collection::vec(0.0f64..=1.0, 1..400)) {
            let p = sws1();
            let mut st = SwsHealthState::fresh(&p);
            for l in loads {
                let next = update_health(&st, &p, &window(0, l), 0.5, StagePolicy::ExpectedFaultCount);
                prop_assert!(next.current_k <= st.current_k);
                prop_assert!(next.current_k >= 1);
                st = next;
            }
        }

        #[test]
        fn constant_windows_are_stationary(s in 0u64..200, l in 0.0f64..=1.0) {
            let p = SwsFrfParams { lambda1: 1e-6, lambda2: 0.0, ..sws1() };
            let grid = TimeGrid::from_zero(0.5, 200.0).unwrap();
            let mut st = SwsHealthState::fresh(&p);
            let w = window(s, l);
            let first = transient_reliability(&build_net(&st, &p, &w).unwrap(), grid);
            for _ in 0..5 {
                st = update_health(&st, &p, &w, 0.5, StagePolicy::ExpectedFaultCount);
                let again = transient_reliability(&build_net(&st, &p, &w).unwrap(), grid);
                prop_assert_eq!(&again, &first);
            }
        }
    }
}
