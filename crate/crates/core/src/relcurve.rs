//! Reliability curves on a uniform time grid.
//!
//! A [`ReliabilityCurve`] stores absolute survival probabilities at
//! `origin + m * step`. Evaluation between grid points uses the left neighbour
//! (step-function semantics): the monitor only ever reasons at grid resolution.
//!
//! The splice functions build the next conditioned curve from the previous one
//! and a freshly evaluated unconditioned curve. They never rewrite history: every
//! sample at or before the split time is copied verbatim.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when snapping times onto the grid.
const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    step: f64,
    horizon: f64,
    origin: f64,
}

impl TimeGrid {
    pub fn new(step: f64, horizon: f64, origin: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidGrid(format!("step must be > 0, got {step}")));
        }
        if !(horizon.is_finite() && horizon >= step * (1.0 - GRID_EPS)) {
            return Err(Error::InvalidGrid(format!(
                "horizon {horizon} must be at least one step ({step})"
            )));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self {
            step,
            horizon,
            origin,
        })
    }

    /// Grid starting at time zero.
    pub fn from_zero(step: f64, horizon: f64) -> Result<Self> {
        Self::new(step, horizon, 0.0)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    /// Number of samples: `floor(horizon / step) + 1`.
    pub fn len(&self) -> usize {
        (self.horizon / self.step * (1.0 + GRID_EPS)).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.origin + index as f64 * self.step
    }

    /// Last instant covered by the grid.
    pub fn end(&self) -> f64 {
        self.origin + self.horizon
    }

    /// Index of the grid point at or immediately before `t`.
    pub fn index_at_or_before(&self, t: f64) -> Result<usize> {
        let rel = t - self.origin;
        let slack = GRID_EPS * self.step.max(t.abs());
        if !t.is_finite() || rel < -slack || rel > self.horizon + slack {
            return Err(Error::OutOfRange {
                t,
                start: self.origin,
                end: self.end(),
            });
        }
        let idx = ((rel + slack) / self.step).floor().max(0.0) as usize;
        Ok(idx.min(self.len() - 1))
    }

    /// Index of `t`, which must lie exactly on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let idx = self.index_at_or_before(t)?;
        if (self.time_at(idx) - t).abs() > GRID_EPS * self.step.max(t.abs()) * 16.0 {
            return Err(Error::IncompatibleGrid(format!(
                "t = {t} h is not on the grid of step {} h",
                self.step
            )));
        }
        Ok(idx)
    }

    /// Number of grid steps in `duration`, which must be a positive multiple of the step.
    pub fn steps_in(&self, duration: f64) -> Result<usize> {
        let ratio = duration / self.step;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > 1e-6 {
            return Err(Error::IncompatibleGrid(format!(
                "{duration} h is not a positive multiple of the grid step {} h",
                self.step
            )));
        }
        Ok(rounded as usize)
    }

    /// Same step and origin, so sample indices line up.
    pub fn is_aligned_with(&self, other: &TimeGrid) -> bool {
        (self.step - other.step).abs() <= GRID_EPS * self.step
            && (self.origin - other.origin).abs() <= GRID_EPS * self.step
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.step, horizon, self.origin)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time_at(i))
    }
}

/// Whether a sample lies in the already-observed past or in the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Observed,
    Predicted,
}

impl CurveKind {
    /// Observed covers `t <= split_time`, predicted covers `t > split_time`.
    pub fn at(t: f64, split_time: f64) -> Self {
        if t <= split_time + GRID_EPS * split_time.abs().max(1.0) {
            CurveKind::Observed
        } else {
            CurveKind::Predicted
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CurveKind::Observed => "observed",
            CurveKind::Predicted => "predicted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityCurve {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl ReliabilityCurve {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::IncompatibleGrid(format!(
                "{} samples for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidProbability {
                what: "curve sample",
                value: bad,
            });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every grid time, clamping into [0, 1].
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.times().map(|t| clamp_unit(f(t))).collect();
        Self { grid, values }
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sample(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Sample at `index`, holding the last value past the end.
    pub fn sample_held(&self, index: usize) -> f64 {
        self.values[index.min(self.values.len() - 1)]
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("curves always hold at least one sample")
    }

    /// Value at `t` (absolute hours) using left-neighbour semantics.
    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.grid.index_at_or_before(t)?])
    }

    /// Same curve on a grid with a different horizon: truncated, or padded by
    /// holding the last sample.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let grid = self.grid.with_horizon(horizon)?;
        let values = (0..grid.len()).map(|i| self.sample_held(i)).collect();
        Ok(Self { grid, values })
    }

    /// CSV with header `t_hours,value`, times at 4 decimals and values at 6.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_hours,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{:.4},{:.6}", self.grid.time_at(i), v);
        }
        out
    }

    /// Parses the `t_hours,value` format. The grid step is inferred from the
    /// first two rows and every row must sit on that grid.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next().map(str::trim) {
            Some("t_hours,value") => {}
            other => {
                return Err(Error::Parse(format!(
                    "expected header `t_hours,value`, found {other:?}"
                )))
            }
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let mut cols = line.split(',');
            let parse = |c: Option<&str>| -> Result<f64> {
                c.and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse(format!("row {}: `{line}`", row + 2)))
            };
            times.push(parse(cols.next())?);
            values.push(parse(cols.next())?);
        }
        curve_from_columns(&times, values)
    }
}

/// Builds a curve from explicit time stamps; used by the CSV readers.
pub fn curve_from_columns(times: &[f64], values: Vec<f64>) -> Result<ReliabilityCurve> {
    if times.len() < 2 {
        return Err(Error::Parse("a curve needs at least two rows".into()));
    }
    let step = times[1] - times[0];
    let grid = TimeGrid::new(step, times[times.len() - 1] - times[0], times[0])?;
    for (i, t) in times.iter().enumerate() {
        // CSV times carry 4 decimals.
        if (grid.time_at(i) - t).abs() > 1e-4 {
            return Err(Error::Parse(format!("row {} at t = {t} is off the grid", i + 2)));
        }
    }
    ReliabilityCurve::new(grid, values)
}

fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

fn check_fresh(history: &ReliabilityCurve, fresh: &ReliabilityCurve) -> Result<()> {
    let (h, f) = (history.grid(), fresh.grid());
    if (h.step() - f.step()).abs() > GRID_EPS * h.step() {
        return Err(Error::IncompatibleGrid(format!(
            "history step {} h differs from fresh step {} h",
            h.step(),
            f.step()
        )));
    }
    if f.origin().abs() > GRID_EPS * f.step() {
        return Err(Error::IncompatibleGrid(format!(
            "fresh curves must start at 0, found origin {}",
            f.origin()
        )));
    }
    Ok(())
}

/// Rejuvenation splice: history up to `split`, then the fresh curve restarted at `split`.
///
/// The result keeps the history grid; fresh samples beyond its horizon hold the last value.
pub fn splice_restore(
    history: &ReliabilityCurve,
    fresh: &ReliabilityCurve,
    split: f64,
) -> Result<ReliabilityCurve> {
    check_fresh(history, fresh)?;
    let cut = history.grid().index_of(split)?;
    Ok(splice_with(history, cut, |i| fresh.sample_held(i - cut)))
}

/// Freeze splice: history up to `split`, then constant at `history(split)`.
pub fn splice_freeze(history: &ReliabilityCurve, split: f64) -> Result<ReliabilityCurve> {
    let cut = history.grid().index_of(split)?;
    let frozen = history.sample(cut);
    Ok(splice_with(history, cut, |_| frozen))
}

/// Time `b * delta` on the fresh curve whose value is closest to `target`.
///
/// Scans every multiple of `delta` within the fresh horizon; ties go to the
/// smallest `b`. A target below the curve's minimum selects the last point.
pub fn match_time(fresh: &ReliabilityCurve, target: f64, delta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::InvalidProbability {
            what: "match target",
            value: target,
        });
    }
    let stride = fresh.grid().steps_in(delta)?;
    let (best, _) = fresh
        .values()
        .iter()
        .step_by(stride)
        .enumerate()
        .map(|(b, v)| (b, (v - target).abs()))
        .fold(None, |best: Option<(usize, f64)>, (b, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((b, d)),
        })
        .ok_or(Error::EmptySearch)?;
    Ok(best as f64 * delta)
}

/// Conservation splice: history up to `split`, then the fresh curve shifted so
/// that it continues from the value reached at `split`.
pub fn splice_conserve(
    history: &ReliabilityCurve,
    fresh: &ReliabilityCurve,
    split: f64,
    delta: f64,
) -> Result<ReliabilityCurve> {
    Ok(splice_conserve_with_shift(history, fresh, split, delta)?.0)
}

/// [`splice_conserve`] that also returns the matched shift `t'`.
pub fn splice_conserve_with_shift(
    history: &ReliabilityCurve,
    fresh: &ReliabilityCurve,
    split: f64,
    delta: f64,
) -> Result<(ReliabilityCurve, f64)> {
    check_fresh(history, fresh)?;
    let cut = history.grid().index_of(split)?;
    let shift = match_time(fresh, history.sample(cut), delta)?;
    let offset = fresh.grid().index_of(shift)?;
    let curve = splice_with(history, cut, |i| fresh.sample_held(i - cut + offset));
    Ok((curve, shift))
}

/// History up to `split`, then `replacement` sampled on the same grid.
pub fn splice_replace(
    history: &ReliabilityCurve,
    replacement: &ReliabilityCurve,
    split: f64,
) -> Result<ReliabilityCurve> {
    if !history.grid().is_aligned_with(replacement.grid()) {
        return Err(Error::IncompatibleGrid(
            "replacement curve is not aligned with the history grid".into(),
        ));
    }
    let cut = history.grid().index_of(split)?;
    Ok(splice_with(history, cut, |i| replacement.sample_held(i)))
}

fn splice_with(
    history: &ReliabilityCurve,
    cut: usize,
    tail: impl Fn(usize) -> f64,
) -> ReliabilityCurve {
    let values = (0..history.len())
        .map(|i| if i <= cut { history.sample(i) } else { tail(i) })
        .collect();
    ReliabilityCurve {
        grid: history.grid,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exp_curve(rate: f64, step: f64, horizon: f64) -> ReliabilityCurve {
        let grid = TimeGrid::from_zero(step, horizon).unwrap();
        ReliabilityCurve::from_fn(grid, |t| (-rate * t).exp())
    }

    #[test]
    fn grid_point_count() {
        let g = TimeGrid::from_zero(0.5, 10.0).unwrap();
        assert_eq!(g.len(), 21);
        let g = TimeGrid::from_zero(0.5, 10.2).unwrap();
        assert_eq!(g.len(), 21);
        assert!(TimeGrid::from_zero(0.0, 1.0).is_err());
        assert!(TimeGrid::from_zero(1.0, 0.5).is_err());
    }

    #[test]
    fn eval_constant_and_exponential() {
        let g = TimeGrid::from_zero(0.5, 10.0).unwrap();
        let one = ReliabilityCurve::constant(g, 1.0).unwrap();
        assert_eq!(one.eval(5.0).unwrap(), 1.0);

        let c = exp_curve(0.001, 0.5, 200.0);
        assert!((c.eval(105.5).unwrap() - 0.899_874_47).abs() < 1e-4);
        // off-grid evaluates at the left neighbour
        assert_eq!(c.eval(105.9).unwrap(), c.eval(105.5).unwrap());
        assert_eq!(c.eval(200.0).unwrap(), c.last());
    }

    #[test]
    fn eval_out_of_range() {
        let c = exp_curve(0.001, 0.5, 10.0);
        assert!(matches!(c.eval(-0.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(c.eval(10.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn rejects_values_outside_unit_interval() {
        let g = TimeGrid::from_zero(1.0, 1.0).unwrap();
        assert!(ReliabilityCurve::new(g, vec![1.0, 1.2]).is_err());
        assert!(ReliabilityCurve::new(g, vec![1.0]).is_err());
    }

    #[test]
    fn restore_piecewise() {
        let g = TimeGrid::from_zero(0.5, 20.0).unwrap();
        let history = ReliabilityCurve::constant(g, 0.8).unwrap();
        let fresh = ReliabilityCurve::constant(g, 1.0).unwrap();
        let out = splice_restore(&history, &fresh, 10.0).unwrap();
        assert_eq!(out.eval(10.0).unwrap(), 0.8);
        assert_eq!(out.eval(10.5).unwrap(), 1.0);

        let history = exp_curve(0.002, 0.5, 300.0);
        let fresh = exp_curve(0.001, 0.5, 300.0);
        let out = splice_restore(&history, &fresh, 100.0).unwrap();
        assert!((out.eval(150.0).unwrap() - 0.951_229_424_5).abs() < 1e-9);

        let out = splice_restore(&history, &fresh, 0.0).unwrap();
        assert_eq!(out.values()[1..], fresh.values()[1..]);
    }

    #[test]
    fn restore_rejects_mismatched_grids() {
        let history = exp_curve(0.002, 0.5, 30.0);
        let fresh = exp_curve(0.001, 0.25, 30.0);
        assert!(matches!(
            splice_restore(&history, &fresh, 10.0),
            Err(Error::IncompatibleGrid(_))
        ));
        // split must be on the grid
        let fresh = exp_curve(0.001, 0.5, 30.0);
        assert!(splice_restore(&history, &fresh, 10.2).is_err());
    }

    #[test]
    fn replace_keeps_history_then_takes_replacement_in_place() {
        let history = exp_curve(0.002, 0.5, 30.0);
        let replacement = exp_curve(0.05, 0.5, 30.0);
        let out = splice_replace(&history, &replacement, 10.0).unwrap();
        for i in 0..out.len() {
            let want = if i <= 20 { history.sample(i) } else { replacement.sample(i) };
            assert_eq!(out.sample(i), want, "index {i}");
        }
        let coarse = exp_curve(0.05, 1.0, 30.0);
        assert!(matches!(
            splice_replace(&history, &coarse, 10.0),
            Err(Error::IncompatibleGrid(_))
        ));
    }

    #[test]
    fn freeze_holds_split_value() {
        let g = TimeGrid::from_zero(0.5, 20.0).unwrap();
        let mut vals = vec![1.0; g.len()];
        vals[10] = 0.8;
        let hist = ReliabilityCurve::new(g, vals).unwrap();
        let out = splice_freeze(&hist, 5.0).unwrap();
        assert!(out.values()[11..].iter().all(|&v| v == 0.8));

        let one = ReliabilityCurve::constant(g, 1.0).unwrap();
        assert_eq!(splice_freeze(&one, 5.0).unwrap(), one);

        let hist = exp_curve(0.001, 0.5, 400.0);
        let out = splice_freeze(&hist, 200.0).unwrap();
        let idx = out.grid().index_of(200.0).unwrap();
        assert!(out.values()[idx + 1..]
            .iter()
            .all(|&v| (v - 0.818_730_75).abs() < 1e-8));
    }

    #[test]
    fn match_time_examples() {
        let g = TimeGrid::from_zero(0.5, 50.0).unwrap();
        let one = ReliabilityCurve::constant(g, 1.0).unwrap();
        assert_eq!(match_time(&one, 1.0, 0.5).unwrap(), 0.0);

        let c = exp_curve(0.001, 0.5, 2000.0);
        assert_eq!(match_time(&c, 0.9, 0.5).unwrap(), 105.5);

        let exact = -(0.9f64).ln() / 0.001;
        assert!((match_time(&c, 0.9, 1.0).unwrap() - exact).abs() <= 1.0);
    }

    #[test]
    fn match_time_errors_and_tail() {
        let c = exp_curve(0.001, 0.5, 100.0);
        assert!(match_time(&c, 1.5, 0.5).is_err());
        assert!(match_time(&c, 0.5, 0.75).is_err());
        // below the minimum: the last grid point wins
        assert_eq!(match_time(&c, 0.0, 0.5).unwrap(), 100.0);
    }

    #[test]
    fn conserve_examples() {
        let c = exp_curve(0.001, 0.5, 600.0);
        let out = splice_conserve(&c, &c, 100.0, 0.5).unwrap();
        for (a, b) in out.values().iter().zip(c.values()) {
            assert!((a - b).abs() < 1e-12);
        }

        // history ends at 0.9 at t = 50; fresh = e^{-0.001 t}
        let g = TimeGrid::from_zero(0.5, 600.0).unwrap();
        let hist = ReliabilityCurve::from_fn(g, |t| if t <= 50.0 { 0.9 } else { 0.5 });
        let fresh = exp_curve(0.001, 0.5, 1200.0);
        let (out, shift) = splice_conserve_with_shift(&hist, &fresh, 50.0, 0.5).unwrap();
        assert_eq!(shift, 105.5);
        for t in [50.5, 100.0, 300.0, 599.5] {
            let want = (-0.001f64 * (t - 50.0 + 105.5)).exp();
            assert!((out.eval(t).unwrap() - want).abs() < 1e-12);
        }

        let one = ReliabilityCurve::constant(g, 1.0).unwrap();
        let (out, shift) = splice_conserve_with_shift(&one, &fresh, 20.0, 0.5).unwrap();
        assert_eq!(shift, 0.0);
        assert_eq!(out.eval(20.5).unwrap(), fresh.sample(1));
    }

    #[test]
    fn csv_round_trip() {
        let c = exp_curve(0.01, 0.5, 5.0);
        let text = c.to_csv();
        assert!(text.starts_with("t_hours,value\n0.0000,1.000000\n0.5000,0.995012\n"));
        let back = ReliabilityCurve::from_csv(&text).unwrap();
        assert_eq!(back.len(), c.len());
        for (a, b) in back.values().iter().zip(c.values()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(ReliabilityCurve::from_csv("t,v\n0,1\n").is_err());
    }

    fn arb_curve() -> impl Strategy<Value = ReliabilityCurve> {
        (0.0001f64..0.05, 20usize..200).prop_map(|(rate, n)| exp_curve(rate, 0.5, n as f64 * 0.5))
    }

    proptest! {
        #[test]
        fn restore_never_rewrites_history(h in arb_curve(), rate in 0.0001f64..0.05, k in 0usize..20) {
            let fresh = exp_curve(rate, 0.5, 100.0);
            let split = k as f64 * 0.5;
            let out = splice_restore(&h, &fresh, split).unwrap();
            prop_assert_eq!(&out.values()[..=k], &h.values()[..=k]);
            prop_assert!(out.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn freeze_is_idempotent(h in arb_curve(), k in 0usize..20) {
            let split = k as f64 * 0.5;
            let once = splice_freeze(&h, split).unwrap();
            prop_assert_eq!(splice_freeze(&once, split).unwrap(), once);
        }

        #[test]
        fn match_time_is_optimal(rate in 0.0001f64..0.05, target in 0.0f64..=1.0, stride in 1usize..4) {
            let fresh = exp_curve(rate, 0.5, 300.0);
            let delta = stride as f64 * 0.5;
            let t = match_time(&fresh, target, delta).unwrap();
            let got = (fresh.eval(t).unwrap() - target).abs();
            let mut b = 0;
            while b as f64 * delta <= 300.0 {
                let d = (fresh.eval(b as f64 * delta).unwrap() - target).abs();
                prop_assert!(got <= d);
                if d == got { prop_assert!(b as f64 * delta >= t); }
                b += 1;
            }
        }

        #[test]
        fn conserve_is_continuous(h_rate in 0.0001f64..0.02, f_rate in 0.0005f64..0.05, k in 1usize..100) {
            let hist = exp_curve(h_rate, 0.5, 100.0);
            let fresh = exp_curve(f_rate, 0.5, 4000.0);
            let split = k as f64 * 0.5;
            let (out, shift) = splice_conserve_with_shift(&hist, &fresh, split, 0.5).unwrap();
            let target = hist.eval(split).unwrap();
            let b = fresh.grid().index_of(shift).unwrap();
            let local = fresh.sample(b.saturating_sub(1)) - fresh.sample(b + 1);
            let jump = (out.sample(k + 1) - target).abs();
            prop_assert!(jump <= local + 1e-15, "jump {} > local variation {}", jump, local);
        }
    }
}
