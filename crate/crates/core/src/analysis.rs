//! Quantities of interest and regime diagnostics computed from trajectories:
//! mean harvested power, stroboscopic sections, amplitude sweeps with
//! continuation, and power maps over `(beta, f)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::exec::parallel_map;
use crate::integrator::{integrate, interpolate_at, solve, IntegratorSettings, TimeSeries};
use crate::model::{rhs_unchecked, HarvesterParams, State3};

/// Maximum period detected by [`classify_regime`].
pub const MAX_PERIOD: usize = 8;
/// Intra-cluster voltage spread below which stroboscopic points coincide.
pub const CLUSTER_SPREAD: f64 = 1e-3;
/// Minimum number of stroboscopic points for classification.
pub const MIN_CLASSIFY_POINTS: usize = 50;
/// Stroboscopic voltages recorded per sweep step.
pub const DEFAULT_STROBE_POINTS: usize = 32;

/// How a single mean-power evaluation is simulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QoiOptions {
    pub s0: State3,
    pub settings: IntegratorSettings,
    /// Trailing fraction of the time span averaged for the mean power.
    pub window_fraction: f64,
}

impl Default for QoiOptions {
    fn default() -> Self {
        Self {
            s0: State3::new(1.0, 0.0, 0.0),
            settings: IntegratorSettings::default(),
            window_fraction: 0.5,
        }
    }
}

/// Time average of `lambda v(t)^2` over the trailing `window_fraction` of the
/// series, by trapezoidal quadrature.
pub fn mean_power(series: &TimeSeries, lambda: f64, window_fraction: f64) -> Result<f64> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "window fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    let (Some(&t_first), Some(&t_last)) = (series.t.first(), series.t.last()) else {
        return Err(Error::InsufficientData("empty time series".into()));
    };
    let span = t_last - t_first;
    let t_start = t_last - window_fraction * span;
    let eps = 1e-9 * span.abs().max(1.0);
    let first = series.t.partition_point(|&t| t < t_start - eps);
    let t = &series.t[first..];
    let states = &series.states[first..];
    if t.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "mean-power window holds {} samples, need at least 2",
            t.len()
        )));
    }
    let mut integral = 0.0;
    for i in 1..t.len() {
        let a = states[i - 1].v;
        let b = states[i].v;
        integral += 0.5 * (t[i] - t[i - 1]) * (a * a + b * b);
    }
    Ok(lambda * integral / (t[t.len() - 1] - t[0]))
}

/// Simulates the harvester and returns its mean output power.
pub fn simulate_mean_power(prm: &HarvesterParams, opts: &QoiOptions) -> Result<f64> {
    let series = integrate(prm, opts.s0, &opts.settings)?;
    mean_power(&series, prm.lambda, opts.window_fraction)
}

/// Four-point Lagrange interpolation on a uniform series at time `t`.
fn interpolate_series(series: &TimeSeries, t: f64) -> State3 {
    let n = series.t.len();
    let t0 = series.t[0];
    let dt = (series.t[n - 1] - t0) / (n - 1) as f64;
    let pos = (t - t0) / dt;
    let i = (pos.floor() as isize).clamp(0, n as isize - 1) as usize;
    if series.t[i] == t {
        return series.states[i];
    }
    if n < 4 {
        let j = (i + 1).min(n - 1);
        let w = if j == i {
            0.0
        } else {
            (t - series.t[i]) / (series.t[j] - series.t[i])
        };
        let (a, b) = (series.states[i].to_array(), series.states[j].to_array());
        return State3::from_array([0, 1, 2].map(|c| a[c] + w * (b[c] - a[c])));
    }
    let start = i.saturating_sub(1).min(n - 4);
    let nodes: Vec<f64> = series.t[start..start + 4].to_vec();
    // Offsets from the first node keep constant data exact.
    let base = series.states[start].to_array();
    let mut out = base;
    for a in 1..4 {
        let mut w = 1.0;
        for b in 0..4 {
            if a != b {
                w *= (t - nodes[b]) / (nodes[a] - nodes[b]);
            }
        }
        let s = series.states[start + a].to_array();
        for c in 0..3 {
            out[c] += w * (s[c] - base[c]);
        }
    }
    State3::from_array(out)
}

/// Forcing period `2 pi / omega`.
pub fn forcing_period(omega: f64) -> f64 {
    2.0 * PI / omega
}

/// States sampled once per forcing period, at integer multiples of the period
/// (force phase reference `t = 0`), after discarding the leading
/// `discard_fraction` of the series.
pub fn poincare_samples(
    series: &TimeSeries,
    omega: f64,
    discard_fraction: f64,
) -> Result<Vec<State3>> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("Omega must be > 0, got {omega}")));
    }
    if !(0.0..1.0).contains(&discard_fraction) {
        return Err(Error::Config(format!(
            "discard fraction must lie in [0, 1), got {discard_fraction}"
        )));
    }
    if series.len() < 2 {
        return Err(Error::InsufficientData(
            "time series has fewer than 2 samples".into(),
        ));
    }
    let t0 = series.t[0];
    let t1 = series.t[series.len() - 1];
    let t_discard = t0 + discard_fraction * (t1 - t0);
    let period = forcing_period(omega);
    if t1 - t_discard < period {
        return Err(Error::InsufficientData(format!(
            "less than one forcing period ({period}) after discarding up to t = {t_discard}"
        )));
    }
    let tol = 1e-9 * (t1 - t0);
    let first = ((t_discard - tol) / period).ceil() as i64;
    let last = ((t1 + tol) / period).floor() as i64;
    Ok((first..=last)
        .map(|n| interpolate_series(series, (n as f64 * period).clamp(t0, t1)))
        .collect())
}

/// Steady-state regime read off a stroboscopic section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Periodic(usize),
    Aperiodic,
}

/// Smallest `k <= max_period` such that the values split by index modulo `k`
/// into groups each spanning less than `tol`.
pub fn detect_period(values: &[f64], max_period: usize, tol: f64) -> Option<usize> {
    (1..=max_period.min(values.len())).find(|&k| {
        (0..k).all(|r| {
            let (lo, hi) = values
                .iter()
                .skip(r)
                .step_by(k)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            hi - lo < tol
        })
    })
}

/// Labels a stroboscopic section as period-k (k <= 8) or aperiodic from the
/// voltage coordinate.
pub fn classify_regime(points: &[State3]) -> Result<Regime> {
    if points.len() < MIN_CLASSIFY_POINTS {
        return Err(Error::InsufficientData(format!(
            "regime classification needs at least {MIN_CLASSIFY_POINTS} points, got {}",
            points.len()
        )));
    }
    let v: Vec<f64> = points.iter().map(|p| p.v).collect();
    Ok(match detect_period(&v, MAX_PERIOD, CLUSTER_SPREAD) {
        Some(k) => Regime::Periodic(k),
        None => Regime::Aperiodic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Up,
    Down,
}

impl SweepDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepDirection::Up => "up",
            SweepDirection::Down => "down",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationRecord {
    pub f: f64,
    /// Stroboscopic voltages at the end of the step, oldest first.
    pub samples: Vec<f64>,
    /// Integration failure for this step; the sweep continued from the
    /// previous state.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationData {
    pub direction: SweepDirection,
    pub records: Vec<BifurcationRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Initial state for the first amplitude.
    pub s0: State3,
    /// Per-step integration settings; only the span length `t1 - t0` is used
    /// for steps after the first, since time is carried over between steps.
    pub settings: IntegratorSettings,
    pub n_strobe: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            s0: State3::new(1.0, 0.0, 0.0),
            settings: IntegratorSettings::default(),
            n_strobe: DEFAULT_STROBE_POINTS,
        }
    }
}

/// Evenly spaced amplitudes between `f_start` and `f_end`, ordered by direction.
pub fn sweep_values(
    f_start: f64,
    f_end: f64,
    n_steps: usize,
    direction: SweepDirection,
) -> Vec<f64> {
    let (lo, hi) = (f_start.min(f_end), f_start.max(f_end));
    let mut values: Vec<f64> = (0..n_steps)
        .map(|i| {
            if i + 1 == n_steps {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n_steps - 1) as f64
            }
        })
        .collect();
    if direction == SweepDirection::Down {
        values.reverse();
    }
    values
}

/// Integrates one continuation step and returns the final state together with
/// the last `n_strobe` stroboscopic voltages.
fn sweep_step(
    prm: &HarvesterParams,
    s: State3,
    settings: &IntegratorSettings,
    n_strobe: usize,
) -> Result<(State3, Vec<f64>)> {
    prm.validate()?;
    let steps = solve(|t, y| rhs_unchecked(y, t, prm), s.to_array(), settings)?;
    let period = forcing_period(prm.omega);
    let last = (settings.t1 / period).floor() as i64;
    let first = last - n_strobe as i64 + 1;
    let times: Vec<f64> = (first..=last).map(|n| n as f64 * period).collect();
    if times[0] < settings.t0 {
        return Err(Error::Config(format!(
            "sweep span {} holds fewer than {n_strobe} forcing periods",
            settings.t1 - settings.t0
        )));
    }
    let samples = interpolate_at(&steps, &times)
        .iter()
        .map(|y| y[2])
        .collect();
    let end = steps[steps.len() - 1].y;
    Ok((State3::from_array(end), samples))
}

/// Amplitude sweep with continuation: each amplitude starts from the final
/// state (and final time) of the previous one.
pub fn bifurcation_sweep(
    prm_base: &HarvesterParams,
    f_start: f64,
    f_end: f64,
    n_steps: usize,
    direction: SweepDirection,
    opts: &SweepOptions,
) -> Result<BifurcationData> {
    if n_steps < 2 {
        return Err(Error::Config(format!(
            "sweep needs n_steps >= 2, got {n_steps}"
        )));
    }
    if opts.n_strobe == 0 {
        return Err(Error::Config("n_strobe must be >= 1".into()));
    }
    opts.settings.validate()?;
    let span = opts.settings.t1 - opts.settings.t0;
    let mut t = opts.settings.t0;
    let mut state = opts.s0;
    let mut records = Vec::with_capacity(n_steps);
    for f in sweep_values(f_start, f_end, n_steps, direction) {
        let prm = HarvesterParams { f, ..*prm_base };
        let settings = IntegratorSettings {
            t0: t,
            t1: t + span,
            ..opts.settings
        };
        match sweep_step(&prm, state, &settings, opts.n_strobe) {
            Ok((end, samples)) => {
                state = end;
                t += span;
                records.push(BifurcationRecord {
                    f,
                    samples,
                    error: None,
                });
            }
            Err(e @ Error::Config(_)) => return Err(e),
            Err(e) => records.push(BifurcationRecord {
                f,
                samples: Vec::new(),
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(BifurcationData { direction, records })
}

/// Cluster centres of a periodic record, sorted, or `None` if not periodic.
fn cluster_centres(samples: &[f64]) -> Option<Vec<f64>> {
    let k = detect_period(samples, MAX_PERIOD, CLUSTER_SPREAD)?;
    let mut centres: Vec<f64> = (0..k)
        .map(|r| {
            let group: Vec<f64> = samples.iter().skip(r).step_by(k).copied().collect();
            group.iter().sum::<f64>() / group.len() as f64
        })
        .collect();
    centres.sort_by(f64::total_cmp);
    Some(centres)
}

/// Amplitudes at which the up- and down-sweeps settle on different attractors:
/// one periodic and the other not, or both periodic with a different period
/// or a cluster centre shifted by more than `tol`. Records that are aperiodic
/// in both sweeps never count.
pub fn hysteresis_window(up: &BifurcationData, down: &BifurcationData, tol: f64) -> Vec<f64> {
    let mut window = Vec::new();
    for a in &up.records {
        let Some(b) = down
            .records
            .iter()
            .find(|b| (b.f - a.f).abs() <= 1e-12 * a.f.abs().max(1.0))
        else {
            continue;
        };
        if a.samples.is_empty() || b.samples.is_empty() {
            continue;
        }
        let differ = match (cluster_centres(&a.samples), cluster_centres(&b.samples)) {
            (Some(ca), Some(cb)) => {
                ca.len() != cb.len() || ca.iter().zip(&cb).any(|(x, y)| (x - y).abs() > tol)
            }
            (Some(_), None) | (None, Some(_)) => true,
            (None, None) => false,
        };
        if differ {
            window.push(a.f);
        }
    }
    window.sort_by(f64::total_cmp);
    window
}

/// Mean output power over a `(beta, f)` grid: one row per `beta`, one column
/// per `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGrid {
    pub f_axis: Vec<f64>,
    pub beta_axis: Vec<f64>,
    pub mean_power: Vec<Vec<f64>>,
}

impl PowerGrid {
    pub fn get(&self, beta_index: usize, f_index: usize) -> f64 {
        self.mean_power[beta_index][f_index]
    }
}

fn power_row(
    prm_base: &HarvesterParams,
    beta: f64,
    f_axis: &[f64],
    opts: &QoiOptions,
) -> Result<Vec<f64>> {
    let span = opts.settings.t1 - opts.settings.t0;
    let mut t = opts.settings.t0;
    let mut state = opts.s0;
    let mut row = Vec::with_capacity(f_axis.len());
    for &f in f_axis {
        let prm = HarvesterParams {
            beta,
            f,
            ..*prm_base
        };
        let settings = IntegratorSettings {
            t0: t,
            t1: t + span,
            ..opts.settings
        };
        let series = integrate(&prm, state, &settings)?;
        row.push(mean_power(&series, prm.lambda, opts.window_fraction)?);
        state = series.last_state().unwrap_or(state);
        t += span;
    }
    Ok(row)
}

/// Mean-power map with continuation along `f` within each `beta` row. Rows
/// are independent and run on `workers` threads.
pub fn power_map(
    prm_base: &HarvesterParams,
    f_axis: &[f64],
    beta_axis: &[f64],
    opts: &QoiOptions,
    workers: usize,
) -> Result<PowerGrid> {
    if f_axis.is_empty() || beta_axis.is_empty() {
        return Err(Error::Config("power map axes must be non-empty".into()));
    }
    opts.settings.validate()?;
    let mean_power = parallel_map(beta_axis, workers, |&beta| {
        power_row(prm_base, beta, f_axis, opts)
    })?;
    Ok(PowerGrid {
        f_axis: f_axis.to_vec(),
        beta_axis: beta_axis.to_vec(),
        mean_power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::uniform_grid;

    fn synthetic(t0: f64, t1: f64, n: usize, v: impl Fn(f64) -> f64) -> TimeSeries {
        let t = uniform_grid(t0, t1, n);
        let states = t.iter().map(|&t| State3::new(v(t), 0.0, v(t))).collect();
        TimeSeries { t, states }
    }

    #[test]
    fn constant_voltage_power() {
        let s = synthetic(0.0, 10.0, 101, |_| 0.3);
        let p = mean_power(&s, 0.05, 0.5).unwrap();
        assert!((p - 0.05 * 0.09).abs() < 1e-15);
        let z = synthetic(0.0, 10.0, 101, |_| 0.0);
        assert_eq!(mean_power(&z, 0.05, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn sine_voltage_power() {
        // Ten periods of sin over the trailing half.
        let s = synthetic(0.0, 40.0 * PI, 400_001, f64::sin);
        let p = mean_power(&s, 0.05, 0.5).unwrap();
        assert!((p - 0.025).abs() < 1e-6, "{p}");
    }

    #[test]
    fn power_window_errors() {
        let s = synthetic(0.0, 1.0, 3, |_| 1.0);
        assert!(mean_power(&s, 1.0, 0.0).is_err());
        assert!(mean_power(&s, 1.0, 1.5).is_err());
        assert!(mean_power(&s, 1.0, 0.1).is_err());
        assert!(mean_power(&TimeSeries::default(), 1.0, 0.5).is_err());
    }

    #[test]
    fn power_scales_with_lambda() {
        let s = synthetic(0.0, 30.0, 3001, |t| (0.7 * t).sin() + 0.2 * (2.1 * t).cos());
        let a = mean_power(&s, 0.05, 0.5).unwrap();
        let b = mean_power(&s, 0.15, 0.5).unwrap();
        assert!((b - 3.0 * a).abs() < 1e-15 * b.max(1.0) * 10.0);
    }

    #[test]
    fn power_invariant_under_period_shift() {
        let omega = 0.8;
        let period = forcing_period(omega);
        let n = 200_001;
        let span = 40.0 * period;
        let v = |t: f64| (omega * t).cos() + 0.3 * (2.0 * omega * t + 0.4).sin();
        let base = synthetic(0.0, span, n, v);
        let shifted = synthetic(3.0 * period, 3.0 * period + span, n, v);
        let a = mean_power(&base, 0.05, 0.5).unwrap();
        let b = mean_power(&shifted, 0.05, 0.5).unwrap();
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn constant_trajectory_section() {
        let s = synthetic(0.0, 100.0, 1001, |_| 0.42);
        let pts = poincare_samples(&s, 0.8, 0.5).unwrap();
        assert!(!pts.is_empty());
        assert!(pts.iter().all(|p| p.v == 0.42));
    }

    #[test]
    fn period_one_section() {
        let omega = 0.8;
        let s = synthetic(0.0, 600.0, 60_001, |t| (omega * t).cos());
        let pts = poincare_samples(&s, omega, 0.5).unwrap();
        assert!(pts.len() > 30);
        for p in &pts {
            assert!((p.x - 1.0).abs() < 1e-6, "{}", p.x);
        }
    }

    #[test]
    fn period_two_section() {
        let omega = 0.8;
        let s = synthetic(0.0, 1200.0, 120_001, |t| (0.5 * omega * t).cos());
        let pts = poincare_samples(&s, omega, 0.5).unwrap();
        let vals: Vec<f64> = pts.iter().map(|p| p.x).collect();
        assert_eq!(detect_period(&vals, MAX_PERIOD, 1e-6), Some(2));
        assert_eq!(classify_regime(&pts).unwrap(), Regime::Periodic(2));
        let centres = cluster_centres(&vals).unwrap();
        assert!((centres[0] + 1.0).abs() < 1e-6 && (centres[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn section_needs_a_period() {
        let s = synthetic(0.0, 10.0, 1001, |_| 0.0);
        assert!(poincare_samples(&s, 0.8, 0.5).is_err());
        assert!(poincare_samples(&s, 0.0, 0.5).is_err());
        assert!(poincare_samples(&s, 0.8, 1.0).is_err());
    }

    fn points(v: impl Fn(usize) -> f64, n: usize) -> Vec<State3> {
        (0..n).map(|i| State3::new(0.0, 0.0, v(i))).collect()
    }

    #[test]
    fn classify_synthetic() {
        assert_eq!(
            classify_regime(&points(|_| 0.1, 60)).unwrap(),
            Regime::Periodic(1)
        );
        let two = points(|i| if i % 2 == 0 { 0.3 } else { -0.2 }, 60);
        assert_eq!(classify_regime(&two).unwrap(), Regime::Periodic(2));
        let four = points(|i| [0.1, 0.5, -0.3, 0.2][i % 4], 64);
        assert_eq!(classify_regime(&four).unwrap(), Regime::Periodic(4));
        // Irrational rotation never repeats.
        let quasi = points(|i| (i as f64 * 2.0f64.sqrt() * PI).sin(), 100);
        assert_eq!(classify_regime(&quasi).unwrap(), Regime::Aperiodic);
        assert!(classify_regime(&points(|_| 0.0, 10)).is_err());
    }

    #[test]
    fn sweep_values_order() {
        let up = sweep_values(0.02, 0.2, 4, SweepDirection::Up);
        assert_eq!(up[0], 0.02);
        assert_eq!(up[3], 0.2);
        let down = sweep_values(0.02, 0.2, 4, SweepDirection::Down);
        assert_eq!(down[0], 0.2);
        assert!(down.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn unforced_sweep_decays() {
        let opts = SweepOptions {
            settings: IntegratorSettings {
                t1: 800.0,
                n_out: 2,
                ..IntegratorSettings::default()
            },
            ..SweepOptions::default()
        };
        let data = bifurcation_sweep(
            &HarvesterParams::classical(0.0),
            0.0,
            0.0,
            3,
            SweepDirection::Up,
            &opts,
        )
        .unwrap();
        assert_eq!(data.records.len(), 3);
        for r in &data.records {
            assert_eq!(r.samples.len(), DEFAULT_STROBE_POINTS);
            assert!(r.samples.iter().all(|v| v.abs() < 1e-6));
        }
    }

    #[test]
    fn sweep_rejects_short_span() {
        let opts = SweepOptions {
            settings: IntegratorSettings {
                t1: 50.0,
                n_out: 2,
                ..IntegratorSettings::default()
            },
            ..SweepOptions::default()
        };
        let r = bifurcation_sweep(
            &HarvesterParams::classical(0.1),
            0.1,
            0.2,
            2,
            SweepDirection::Up,
            &opts,
        );
        assert!(r.is_err());
    }

    fn short_qoi() -> QoiOptions {
        QoiOptions {
            settings: IntegratorSettings {
                t1: 300.0,
                n_out: 30_001,
                ..IntegratorSettings::default()
            },
            ..QoiOptions::default()
        }
    }

    #[test]
    fn single_cell_matches_direct_call() {
        let opts = short_qoi();
        let base = HarvesterParams::classical(0.0);
        let grid = power_map(&base, &[0.12], &[1.0], &opts, 1).unwrap();
        let direct = simulate_mean_power(
            &HarvesterParams {
                f: 0.12,
                beta: 1.0,
                ..base
            },
            &opts,
        )
        .unwrap();
        assert_eq!(grid.get(0, 0), direct);
    }

    #[test]
    fn zero_forcing_column_is_zero() {
        let opts = short_qoi();
        let grid = power_map(
            &HarvesterParams::classical(0.0),
            &[0.0, 0.1],
            &[0.5, 2.0],
            &opts,
            2,
        )
        .unwrap();
        for row in &grid.mean_power {
            assert_eq!(row[0], 0.0);
            assert!(row[1] > 0.0 && row[1].is_finite());
        }
        assert!(power_map(&HarvesterParams::classical(0.0), &[], &[1.0], &opts, 1).is_err());
    }
}
