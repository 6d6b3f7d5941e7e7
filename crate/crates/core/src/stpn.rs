//! Failure-race nets: one token in a working place, several timed transitions
//! competing to move it to the failed place.
//!
//! The race admits a closed-form transient solution: the subsystem survives to
//! `t` iff no transition has fired, so reliability is the product of the
//! per-transition survival functions.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Weibull};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relcurve::{ReliabilityCurve, TimeGrid};
use crate::SubsystemId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FiringDistribution {
    Exponential { rate: f64 },
    Erlang { k: u32, rate: f64 },
    Weibull { shape: f64, scale: f64 },
    Deterministic { d: f64 },
}

impl FiringDistribution {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDistribution(msg));
        match *self {
            FiringDistribution::Exponential { rate } if !(rate.is_finite() && rate > 0.0) => {
                bad(format!("exponential rate must be > 0, got {rate}"))
            }
            FiringDistribution::Erlang { k, rate } if k < 1 || !(rate.is_finite() && rate > 0.0) => {
                bad(format!("erlang needs k >= 1 and rate > 0, got k = {k}, rate = {rate}"))
            }
            FiringDistribution::Weibull { shape, scale }
                if !(shape.is_finite() && shape > 0.0 && scale.is_finite() && scale > 0.0) =>
            {
                bad(format!("weibull needs shape, scale > 0, got {shape}, {scale}"))
            }
            FiringDistribution::Deterministic { d } if !(d.is_finite() && d >= 0.0) => {
                bad(format!("deterministic delay must be >= 0, got {d}"))
            }
            _ => Ok(()),
        }
    }

    /// Probability that the transition has not fired by `t` hours.
    pub fn survival(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 1.0;
        }
        match *self {
            FiringDistribution::Exponential { rate } => (-rate * t).exp(),
            FiringDistribution::Erlang { k, rate } => erlang_survival(k, rate * t),
            FiringDistribution::Weibull { shape, scale } => (-(t / scale).powf(shape)).exp(),
            FiringDistribution::Deterministic { d } => {
                if t < d {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            FiringDistribution::Exponential { rate } => {
                Exp::new(rate).expect("validated rate").sample(rng)
            }
            FiringDistribution::Erlang { k, rate } => Gamma::new(k as f64, 1.0 / rate)
                .expect("validated erlang")
                .sample(rng),
            FiringDistribution::Weibull { shape, scale } => Weibull::new(scale, shape)
                .expect("validated weibull")
                .sample(rng),
            FiringDistribution::Deterministic { d } => d,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            FiringDistribution::Exponential { rate } => 1.0 / rate,
            FiringDistribution::Erlang { k, rate } => k as f64 / rate,
            FiringDistribution::Weibull { shape, scale } => scale * gamma_fn(1.0 + 1.0 / shape),
            FiringDistribution::Deterministic { d } => d,
        }
    }
}

/// `P(N < k)` for `N ~ Poisson(x)`, the survival of an Erlang(k) at rate·t = x.
///
/// Terms are built in log space so that large `x` does not overflow `x^m / m!`.
pub fn erlang_survival(k: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let ln_x = x.ln();
    let mut log_term = -x;
    let mut sum = log_term.exp();
    for m in 1..k {
        log_term += ln_x - (m as f64).ln();
        sum += log_term.exp();
    }
    sum.min(1.0)
}

/// Lanczos approximation, only used for the Weibull mean.
fn gamma_fn(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x))
    } else {
        let x = x - 1.0;
        let t = x + G + 0.5;
        let a = C[1..]
            .iter()
            .enumerate()
            .fold(C[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub name: String,
    pub dist: FiringDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRaceNet {
    subsystem: SubsystemId,
    transitions: Vec<Transition>,
}

impl FailureRaceNet {
    pub fn new(subsystem: SubsystemId, transitions: Vec<Transition>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::InvalidNet(format!("net for {subsystem} has no transitions")));
        }
        let mut names = BTreeSet::new();
        for tr in &transitions {
            if !names.insert(tr.name.as_str()) {
                return Err(Error::InvalidNet(format!(
                    "duplicate transition `{}` in net for {subsystem}",
                    tr.name
                )));
            }
            tr.dist.validate()?;
        }
        Ok(Self {
            subsystem,
            transitions,
        })
    }

    pub fn subsystem(&self) -> SubsystemId {
        self.subsystem
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Probability that no transition has fired by `t`.
    pub fn reliability(&self, t: f64) -> f64 {
        self.transitions.iter().map(|tr| tr.dist.survival(t)).product()
    }
}

/// Samples the net's reliability at every grid point; time is measured from the grid origin.
pub fn transient_reliability(net: &FailureRaceNet, grid: TimeGrid) -> ReliabilityCurve {
    let origin = grid.origin();
    ReliabilityCurve::from_fn(grid, |t| net.reliability(t - origin))
}

/// Draws every transition's firing time and returns the earliest with its name.
///
/// Ties keep the transition listed first.
pub fn sample_failure_time<'a, R: Rng + ?Sized>(net: &'a FailureRaceNet, rng: &mut R) -> (f64, &'a str) {
    let mut best: Option<(f64, &str)> = None;
    for tr in &net.transitions {
        let t = tr.dist.sample(rng);
        if best.is_none_or(|(b, _)| t < b) {
            best = Some((t, tr.name.as_str()));
        }
    }
    best.expect("nets have at least one transition")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(dists: &[FiringDistribution]) -> FailureRaceNet {
        let transitions = dists
            .iter()
            .enumerate()
            .map(|(i, &dist)| Transition {
                name: format!("t{i}"),
                dist,
            })
            .collect();
        FailureRaceNet::new(SubsystemId(1), transitions).unwrap()
    }

    #[test]
    fn survival_examples() {
        let e2 = FiringDistribution::Erlang { k: 2, rate: 1.0 };
        assert!((e2.survival(1.0) - 0.735_758_882_3).abs() < 1e-9);
        for t in [0.0, 0.3, 7.0, 1e4] {
            let a = FiringDistribution::Erlang { k: 1, rate: 0.02 }.survival(t);
            let b = FiringDistribution::Exponential { rate: 0.02 }.survival(t);
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(FiringDistribution::Weibull { shape: 2.0, scale: 3.0 }.survival(0.0), 1.0);
        assert_eq!(FiringDistribution::Deterministic { d: 0.0 }.survival(0.0), 0.0);
        assert_eq!(FiringDistribution::Deterministic { d: 5.0 }.survival(4.99), 1.0);
    }

    #[test]
    fn erlang_survival_large_argument() {
        // x^m / m! overflows f64 for x = 1000, m = 200 if computed naively.
        let v = erlang_survival(200, 1000.0);
        assert!(v.is_finite() && (0.0..1e-50).contains(&v));
        assert!((erlang_survival(1000, 1000.0) - 0.5).abs() < 0.01);
    }

    #[test]
    fn erlang_matches_numerical_integration() {
        // 1 - ∫_0^t λ^k u^{k-1} e^{-λu} / (k-1)! du with the trapezoid rule
        let (k, rate, t) = (4u32, 0.3f64, 9.0f64);
        let n = 200_000;
        let h = t / n as f64;
        let fact: f64 = (1..k).map(|m| m as f64).product();
        let pdf = |u: f64| rate.powi(k as i32) * u.powi(k as i32 - 1) * (-rate * u).exp() / fact;
        let integral: f64 =
            (0..n).map(|i| 0.5 * h * (pdf(i as f64 * h) + pdf((i + 1) as f64 * h))).sum();
        let exact = FiringDistribution::Erlang { k, rate }.survival(t);
        assert!((exact - (1.0 - integral)).abs() < 1e-8);
    }

    #[test]
    fn validation() {
        assert!(FiringDistribution::Exponential { rate: 0.0 }.validate().is_err());
        assert!(FiringDistribution::Erlang { k: 0, rate: 1.0 }.validate().is_err());
        assert!(FiringDistribution::Weibull { shape: -1.0, scale: 1.0 }.validate().is_err());
        assert!(FiringDistribution::Deterministic { d: -1.0 }.validate().is_err());
        assert!(FailureRaceNet::new(SubsystemId(1), vec![]).is_err());
        let tr = Transition {
            name: "a".into(),
            dist: FiringDistribution::Exponential { rate: 1.0 },
        };
        assert!(FailureRaceNet::new(SubsystemId(1), vec![tr.clone(), tr]).is_err());
    }

    #[test]
    fn transient_examples() {
        let grid = TimeGrid::from_zero(0.5, 1000.0).unwrap();
        let c = transient_reliability(&net(&[FiringDistribution::Exponential { rate: 0.001 }]), grid);
        assert!((c.eval(1000.0).unwrap() - (-1.0f64).exp()).abs() < 1e-12);

        let c = transient_reliability(
            &net(&[
                FiringDistribution::Exponential { rate: 0.002 },
                FiringDistribution::Erlang { k: 1, rate: 0.003 },
            ]),
            grid,
        );
        assert!((c.eval(300.0).unwrap() - (-0.005f64 * 300.0).exp()).abs() < 1e-12);

        // Computed directly: e^{-0.68185} * P(Poisson(0.526) < 5) = 0.5055708.
        let race = net(&[
            FiringDistribution::Exponential { rate: 0.001_363_7 },
            FiringDistribution::Erlang { k: 5, rate: 0.001_052 },
        ]);
        assert!((race.reliability(500.0) - 0.505_570_8).abs() < 1e-7);
    }

    #[test]
    fn race_matches_monte_carlo() {
        let race = net(&[
            FiringDistribution::Exponential { rate: 0.001_363_7 },
            FiringDistribution::Erlang { k: 5, rate: 0.001_052 },
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let alive = (0..n)
            .filter(|_| sample_failure_time(&race, &mut rng).0 > 500.0)
            .count() as f64
            / n as f64;
        let p = race.reliability(500.0);
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((alive - p).abs() < 3.0 * sigma, "{alive} vs {p}");
    }

    #[test]
    fn sampling_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let det = net(&[FiringDistribution::Deterministic { d: 100.0 }]);
        for _ in 0..10 {
            assert_eq!(sample_failure_time(&det, &mut rng), (100.0, "t0"));
        }
        let exp = net(&[FiringDistribution::Exponential { rate: 0.01 }]);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_failure_time(&exp, &mut rng).0).sum::<f64>() / n as f64;
        assert!((mean - 100.0).abs() < 1.0, "mean {mean}");
    }

    #[test]
    fn erlang_matches_sequential_stages() {
        let (k, rate) = (5u32, 0.02);
        let dist = FiringDistribution::Erlang { k, rate };
        let stage = Exp::new(rate).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| (0..k).map(|_| stage.sample(&mut rng)).sum())
            .collect();
        for t in [50.0, 150.0, 250.0, 400.0] {
            let emp = draws.iter().filter(|&&d| d > t).count() as f64 / n as f64;
            let p = dist.survival(t);
            let sigma = (p * (1.0 - p) / n as f64).sqrt().max(1e-6);
            assert!((emp - p).abs() < 3.0 * sigma, "t = {t}: {emp} vs {p}");
        }
    }

    #[test]
    fn weibull_mean() {
        let d = FiringDistribution::Weibull { shape: 1.0, scale: 10.0 };
        assert!((d.mean() - 10.0).abs() < 1e-9);
        let d = FiringDistribution::Weibull { shape: 2.0, scale: 1.0 };
        assert!((d.mean() - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-9);
    }

    fn arb_dist() -> impl Strategy<Value = FiringDistribution> {
        prop_oneof![
            (1e-4f64..0.1).prop_map(|rate| FiringDistribution::Exponential { rate }),
            (1u32..12, 1e-4f64..0.1).prop_map(|(k, rate)| FiringDistribution::Erlang { k, rate }),
            (0.3f64..4.0, 10.0f64..2000.0)
                .prop_map(|(shape, scale)| FiringDistribution::Weibull { shape, scale }),
            (0.5f64..500.0).prop_map(|d| FiringDistribution::Deterministic { d }),
        ]
    }

    proptest! {
        #[test]
        fn transient_is_monotone_from_one(dists in proptest::collection::vec(arb_dist(), 1..5)) {
            let grid = TimeGrid::from_zero(0.5, 720.0).unwrap();
            let c = transient_reliability(&net(&dists), grid);
            prop_assert_eq!(c.sample(0), 1.0);
            for w in c.values().windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-15);
            }
        }

        #[test]
        fn adding_transition_never_helps(dists in proptest::collection::vec(arb_dist(), 1..4), extra in arb_dist(), t in 0.0f64..1000.0) {
            let base = net(&dists);
            let mut more = dists.clone();
            more.push(extra);
            prop_assert!(net(&more).reliability(t) <= base.reliability(t) + 1e-15);
        }

        #[test]
        fn erlang_survival_decreasing_in_rate_and_increasing_in_k(k in 1u32..30, x in 0.0f64..200.0, dx in 0.0f64..10.0) {
            prop_assert!(erlang_survival(k, x + dx) <= erlang_survival(k, x) + 1e-15);
            prop_assert!(erlang_survival(k + 1, x) >= erlang_survival(k, x) - 1e-15);
        }
    }
}
