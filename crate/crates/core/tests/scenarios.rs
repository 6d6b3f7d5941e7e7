//! The shipped scenario files parse and behave as their names promise.

use std::path::PathBuf;

use rbm_core::config::ScenarioConfig;
use rbm_core::simulator::{ab_compare, run, InitReason, RunOptions};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&dir().join(format!("{name}.toml"))).unwrap()
}

#[test]
fn every_scenario_file_parses() {
    let mut count = 0;
    for entry in std::fs::read_dir(dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 3);
}

#[test]
fn null_hazard_is_quiet() {
    let scenario = load("null_hazard");
    let trace = run(&scenario.simulation, RunOptions::new(scenario.seed, scenario.duration_hours)).unwrap();
    assert!(trace.failures.is_empty());
    assert_eq!(trace.stats.alarms_raised, 0);
    assert!(trace.commands.is_empty());
    assert_eq!(trace.stats.availability, 1.0);

    let ab = ab_compare(&scenario.simulation, &[1, 2, 3], 48.0).unwrap();
    assert_eq!(ab.mean_availability_with, 1.0);
    assert_eq!(ab.mean_availability_without, 1.0);
    assert_eq!(ab.loss_dominance, 1.0);
}

#[test]
fn rejuvenation_downtime_matches_the_configured_mtti() {
    let scenario = load("heavy_stress");
    let mtti = scenario.simulation.lifecycle.mtti_hours();
    let mut downtimes = Vec::new();
    for seed in 1..=10 {
        let trace = run(&scenario.simulation, RunOptions::new(seed, scenario.duration_hours)).unwrap();
        downtimes.extend(
            trace
                .downtimes
                .iter()
                .filter(|d| d.reason == InitReason::Rejuvenation)
                .filter_map(|d| d.end.map(|end| end - d.start)),
        );
    }
    let n = downtimes.len() as f64;
    assert!(n >= 50.0, "only {n} rejuvenations");
    let mean = downtimes.iter().sum::<f64>() / n;
    // exponential delays: standard error of the mean is mtti / sqrt(n)
    assert!((mean - mtti).abs() <= 3.0 * mtti / n.sqrt(), "mean {mean} vs {mtti}");
}
