//! Ground-truth failure injection.
//!
//! Application failures arrive with rate `α + s·β`, constant between stimuli,
//! so the next candidate is redrawn whenever a stimulus changes the rate.
//! OS faults form a Poisson stream with rate `λ¹ + λ²·L(t)`, simulated by
//! thinning against `λ¹ + λ²`; the `k0`-th accepted fault fails the subsystem.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::frf::SwsFrfParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureSource {
    Application,
    Os,
}

/// Per-subsystem fault state between two power-ons.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultInjector {
    params: SwsFrfParams,
    os_faults: u32,
}

impl FaultInjector {
    pub fn new(params: SwsFrfParams) -> Self {
        Self { params, os_faults: 0 }
    }

    pub fn reset(&mut self) {
        self.os_faults = 0;
    }

    pub fn os_faults(&self) -> u32 {
        self.os_faults
    }

    pub fn app_rate(&self, stimuli: u64) -> f64 {
        self.params.alpha + stimuli as f64 * self.params.beta
    }

    /// Next application failure candidate after `t` at the current rate.
    pub fn app_candidate<R: Rng + ?Sized>(&self, rng: &mut R, t: f64, stimuli: u64) -> f64 {
        t + exp_draw(rng, self.app_rate(stimuli))
    }

    fn os_bound(&self) -> f64 {
        self.params.lambda1 + self.params.lambda2
    }

    /// Next OS fault candidate after `t` at the bounding rate.
    pub fn os_candidate<R: Rng + ?Sized>(&self, rng: &mut R, t: f64) -> f64 {
        t + exp_draw(rng, self.os_bound())
    }

    /// Thinning step at a candidate with CPU load `load`.
    ///
    /// Returns true when the accepted fault is the `k0`-th one.
    pub fn os_accept<R: Rng + ?Sized>(&mut self, rng: &mut R, load: f64) -> bool {
        let rate = self.params.lambda1 + self.params.lambda2 * load;
        if rng.random::<f64>() * self.os_bound() < rate {
            self.os_faults += 1;
        }
        self.os_faults >= self.params.k0
    }
}

fn exp_draw<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    Exp::new(rate).expect("positive rate").sample(rng)
}

/// Draws one failure time for a subsystem that powers on at 0 and keeps running.
///
/// `stimuli` are the arrival times of external stimuli and `load` gives the CPU
/// load at any time. Returns `None` if nothing fails before `horizon`.
pub fn inject_failures<R: Rng + ?Sized>(
    params: &SwsFrfParams,
    stimuli: &[f64],
    load: impl Fn(f64) -> f64,
    horizon: f64,
    rng: &mut R,
) -> Option<(f64, FailureSource)> {
    let mut inj = FaultInjector::new(*params);
    let mut next_stimulus = stimuli.iter().copied().filter(|&s| s > 0.0).peekable();
    let mut count = 0u64;
    let mut app = inj.app_candidate(rng, 0.0, 0);
    let mut os = inj.os_candidate(rng, 0.0);
    loop {
        let s = next_stimulus.peek().copied().unwrap_or(f64::INFINITY);
        let t = app.min(os).min(s);
        if t >= horizon {
            return None;
        }
        if t == s {
            next_stimulus.next();
            count += 1;
            app = inj.app_candidate(rng, s, count);
        } else if t == app {
            return Some((app, FailureSource::Application));
        } else {
            if inj.os_accept(rng, load(os)) {
                return Some((os, FailureSource::Os));
            }
            os = inj.os_candidate(rng, os);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stpn::erlang_survival;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(alpha: f64, beta: f64, l1: f64, l2: f64, k0: u32) -> SwsFrfParams {
        SwsFrfParams {
            alpha,
            beta,
            lambda1: l1,
            lambda2: l2,
            k0,
        }
    }

    fn survival_at(p: &SwsFrfParams, load: impl Fn(f64) -> f64 + Copy, t: f64, n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .filter(|_| inject_failures(p, &[], load, t, &mut rng).is_none())
            .count() as f64
            / n as f64
    }

    #[test]
    fn piecewise_load_matches_closed_form() {
        // λ = 0.01 + 0.03·L with L = 0.2 before 50 h and 0.9 after.
        let p = params(1e-3, 0.0, 0.01, 0.03, 3);
        let load = |t: f64| if t < 50.0 { 0.2 } else { 0.9 };
        let t = 120.0;
        let n = 20_000;
        let emp = survival_at(&p, load, t, n, 9);
        let cumulative = 0.016 * 50.0 + 0.037 * 70.0;
        let want = (-1e-3 * t).exp() * erlang_survival(3, cumulative);
        let sigma = (want * (1.0 - want) / n as f64).sqrt();
        assert!((emp - want).abs() < 3.0 * sigma, "{emp} vs {want}");
    }

    #[test]
    fn stimuli_raise_the_application_rate() {
        // one stimulus at 10 h doubles the application rate
        let p = params(0.01, 0.01, 1e-9, 0.0, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 20_000;
        let t = 40.0;
        let alive = (0..n)
            .filter(|_| inject_failures(&p, &[10.0], |_| 0.0, t, &mut rng).is_none())
            .count() as f64
            / n as f64;
        let want = (-(0.01 * 10.0 + 0.02 * 30.0f64)).exp();
        let sigma = (want * (1.0 - want) / n as f64).sqrt();
        assert!((alive - want).abs() < 3.0 * sigma, "{alive} vs {want}");
    }

    #[test]
    fn zero_rates_never_fail() {
        let p = params(0.0, 0.0, 0.0, 0.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(inject_failures(&p, &[1.0, 2.0], |_| 1.0, 1e9, &mut rng), None);
    }

    #[test]
    fn fault_counter_resets() {
        let p = params(1e-3, 0.0, 1.0, 0.0, 2);
        let mut inj = FaultInjector::new(p);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(!inj.os_accept(&mut rng, 0.0));
        assert!(inj.os_accept(&mut rng, 0.0));
        inj.reset();
        assert_eq!(inj.os_faults(), 0);
    }
}
