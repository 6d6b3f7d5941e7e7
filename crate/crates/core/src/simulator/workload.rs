//! Synthetic workload: hourly stimulus intensities and CPU load.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::wall_hour;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    /// Stimulus arrival intensity per hour of day (arrivals per hour).
    pub stimuli_per_hour: Vec<f64>,
    /// Mean CPU load per hour of day.
    pub cpu_load: Vec<f64>,
    /// Half-width of the uniform noise added to each window's load.
    #[serde(default)]
    pub cpu_noise: f64,
}

impl WorkloadProfile {
    pub fn constant(stimuli_per_hour: f64, cpu_load: f64) -> Self {
        Self {
            stimuli_per_hour: vec![stimuli_per_hour; 24],
            cpu_load: vec![cpu_load; 24],
            cpu_noise: 0.0,
        }
    }

    /// Busy days, quiet nights. The values are illustrative, not measured.
    pub fn heavy_stress() -> Self {
        let by_hour = |night: f64, morning: f64, day: f64, evening: f64| {
            (0..24)
                .map(|h| match h {
                    0..=5 => night,
                    6..=8 => morning,
                    9..=17 => day,
                    _ => evening,
                })
                .collect::<Vec<_>>()
        };
        Self {
            stimuli_per_hour: by_hour(2.0, 20.0, 15.0, 6.0),
            cpu_load: by_hour(0.2, 0.8, 0.9, 0.5),
            cpu_noise: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stimuli_per_hour.len() != 24 {
            return Err(Error::config(
                "workload.stimuli_per_hour",
                format!("expected 24 hourly values, got {}", self.stimuli_per_hour.len()),
            ));
        }
        if self.cpu_load.len() != 24 {
            return Err(Error::config(
                "workload.cpu_load",
                format!("expected 24 hourly values, got {}", self.cpu_load.len()),
            ));
        }
        if let Some((h, v)) = self
            .stimuli_per_hour
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::config(
                format!("workload.stimuli_per_hour[{h}]"),
                format!("intensity {v} must be >= 0"),
            ));
        }
        if let Some((h, v)) = self.cpu_load.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::config(format!("workload.cpu_load[{h}]"), format!("load {v} outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.cpu_noise) {
            return Err(Error::config("workload.cpu_noise", "must be in [0, 1]"));
        }
        Ok(())
    }

    fn hour_index(hour: f64) -> usize {
        (hour.floor() as usize).min(23)
    }

    pub fn intensity_at(&self, t: f64, start_hour: f64) -> f64 {
        self.stimuli_per_hour[Self::hour_index(wall_hour(t, start_hour))]
    }

    pub fn load_at(&self, t: f64, start_hour: f64) -> f64 {
        self.cpu_load[Self::hour_index(wall_hour(t, start_hour))]
    }

    /// Next stimulus after `t` by thinning against the peak intensity.
    ///
    /// Returns `None` when the profile has no stimuli at all.
    pub fn next_stimulus<R: Rng + ?Sized>(&self, rng: &mut R, t: f64, start_hour: f64) -> Option<f64> {
        let bound = self.stimuli_per_hour.iter().cloned().fold(0.0, f64::max);
        if bound <= 0.0 {
            return None;
        }
        let gap = Exp::new(bound).expect("positive bound");
        let mut t = t;
        loop {
            t += gap.sample(rng);
            if rng.random::<f64>() * bound < self.intensity_at(t, start_hour) {
                return Some(t);
            }
        }
    }

    /// Average load of a window starting at `t`, with uniform noise, clamped to [0, 1].
    pub fn window_load<R: Rng + ?Sized>(&self, rng: &mut R, t: f64, start_hour: f64) -> f64 {
        let noise = (2.0 * rng.random::<f64>() - 1.0) * self.cpu_noise;
        (self.load_at(t, start_hour) + noise).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn thinning_matches_hourly_counts() {
        let mut p = WorkloadProfile::constant(0.0, 0.5);
        p.stimuli_per_hour[3] = 40.0;
        p.stimuli_per_hour[10] = 10.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let days = 400;
        let mut counts = [0usize; 24];
        let mut t = 0.0;
        while let Some(next) = p.next_stimulus(&mut rng, t, 0.0) {
            if next >= days as f64 * 24.0 {
                break;
            }
            counts[(next % 24.0) as usize] += 1;
            t = next;
        }
        for (h, &c) in counts.iter().enumerate() {
            let want = p.stimuli_per_hour[h] * days as f64;
            let tol = 4.0 * want.sqrt();
            assert!((c as f64 - want).abs() <= tol, "hour {h}: {c} vs {want}");
        }
    }

    #[test]
    fn no_stimuli_without_intensity() {
        let p = WorkloadProfile::constant(0.0, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(p.next_stimulus(&mut rng, 0.0, 6.0), None);
    }

    #[test]
    fn loads_stay_in_range() {
        let p = WorkloadProfile {
            cpu_noise: 0.5,
            ..WorkloadProfile::heavy_stress()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..5000 {
            let l = p.window_load(&mut rng, i as f64 * 0.5, 6.0);
            assert!((0.0..=1.0).contains(&l));
        }
    }

    #[test]
    fn wall_clock_offset() {
        let p = WorkloadProfile::heavy_stress();
        // t = 0 is 06:00, the morning peak
        assert_eq!(p.intensity_at(0.0, 6.0), 20.0);
        // t = 18 is midnight
        assert_eq!(p.load_at(18.0, 6.0), 0.2);
    }

    #[test]
    fn validation_names_the_field() {
        let mut p = WorkloadProfile::heavy_stress();
        p.cpu_load[7] = 1.5;
        assert!(p.validate().unwrap_err().to_string().contains("workload.cpu_load[7]"));
        let mut p = WorkloadProfile::heavy_stress();
        p.stimuli_per_hour.pop();
        assert!(p.validate().unwrap_err().to_string().contains("workload.stimuli_per_hour"));
    }
}
