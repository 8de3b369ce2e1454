//! Explicit Runge–Kutta integration with dense output on a uniform grid.
//!
//! The default scheme is the Dormand–Prince 5(4) embedded pair with PI
//! step-size control. A fixed-step classical RK4 scheme is available for
//! comparison runs. Accepted steps keep their end-point derivatives so the
//! trajectory can be resampled with cubic Hermite interpolation.

use crate::error::{Error, Result};
use crate::model::{rhs_unchecked, HarvesterParams, State3};

/// Stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Dormand–Prince 5(4) with embedded error control.
    DormandPrince,
    /// Classical fourth-order Runge–Kutta with constant step `dt`.
    FixedRk4 { dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t0: f64,
    pub t1: f64,
    /// Number of samples on the uniform output grid, end points included.
    pub n_out: usize,
    /// Maximum number of attempted steps (accepted + rejected).
    pub max_steps: usize,
    /// Initial trial step.
    pub h0: f64,
    pub method: Method,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            t0: 0.0,
            t1: 2000.0,
            n_out: 200_001,
            max_steps: 5_000_000,
            h0: 1e-3,
            method: Method::DormandPrince,
        }
    }
}

impl IntegratorSettings {
    /// Same settings over `[t0, t1]`, keeping the output spacing.
    pub fn with_span(mut self, t0: f64, t1: f64) -> Self {
        let dt = (self.t1 - self.t0) / (self.n_out - 1) as f64;
        self.t0 = t0;
        self.t1 = t1;
        self.n_out = (((t1 - t0) / dt).round() as usize).max(1) + 1;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok_tol = self.rel_tol > 0.0 && self.abs_tol > 0.0;
        if !ok_tol || !self.rel_tol.is_finite() || !self.abs_tol.is_finite() {
            return Err(Error::Config(format!(
                "tolerances must be positive (rel_tol = {}, abs_tol = {})",
                self.rel_tol, self.abs_tol
            )));
        }
        if !(self.t1 > self.t0) || !self.t0.is_finite() || !self.t1.is_finite() {
            return Err(Error::Config(format!(
                "time span must satisfy t1 > t0 (t0 = {}, t1 = {})",
                self.t0, self.t1
            )));
        }
        if self.n_out < 2 {
            return Err(Error::Config(format!(
                "n_out must be >= 2, got {}",
                self.n_out
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be >= 1".into()));
        }
        if !(self.h0 > 0.0) {
            return Err(Error::Config(format!("h0 must be > 0, got {}", self.h0)));
        }
        if let Method::FixedRk4 { dt } = self.method {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::Config(format!("fixed step must be > 0, got {dt}")));
            }
        }
        Ok(())
    }
}

/// An accepted step end point: time, state and derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPoint<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub dy: [f64; N],
}

/// Uniformly sampled trajectory of the harvester.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub states: Vec<State3>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last_state(&self) -> Option<State3> {
        self.states.last().copied()
    }

    pub fn voltages(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.v)
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
// PI controller exponents (Gustafsson-type, as in Hairer's DOPRI5).
const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

/// Integrates `dy/dt = rhs(t, y)` over `[settings.t0, settings.t1]` and returns
/// every accepted step end point, the initial point included.
pub fn solve<const N: usize, F>(
    rhs: F,
    y0: [f64; N],
    settings: &IntegratorSettings,
) -> Result<Vec<StepPoint<N>>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    settings.validate()?;
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite initial state {y0:?}")));
    }
    match settings.method {
        Method::DormandPrince => solve_dopri(rhs, y0, settings),
        Method::FixedRk4 { dt } => solve_rk4(rhs, y0, settings, dt),
    }
}

fn solve_dopri<const N: usize, F>(
    rhs: F,
    y0: [f64; N],
    s: &IntegratorSettings,
) -> Result<Vec<StepPoint<N>>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let span = s.t1 - s.t0;
    let mut t = s.t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y);
    let mut h = s.h0.min(span);
    let mut err_old: f64 = 1e-4;
    let mut rejected_last = false;
    let mut steps = Vec::with_capacity(1024);
    steps.push(StepPoint { t, y, dy: k1 });

    for _ in 0..s.max_steps {
        let remaining = s.t1 - t;
        // Land exactly on t1 and avoid a sliver final step.
        let last = h >= remaining || remaining - h < 1e-12 * span;
        if last {
            h = remaining;
        }

        let y2 = axpy(&y, h, &[(A21, &k1)]);
        let k2 = rhs(t + C2 * h, &y2);
        let y3 = axpy(&y, h, &[(A31, &k1), (A32, &k2)]);
        let k3 = rhs(t + C3 * h, &y3);
        let y4 = axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        let k4 = rhs(t + C4 * h, &y4);
        let y5 = axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        let k5 = rhs(t + C5 * h, &y5);
        let y6 = axpy(
            &y,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        );
        let t_new = if last { s.t1 } else { t + h };
        let k6 = rhs(t + h, &y6);
        let y_new = axpy(
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let k7 = rhs(t_new, &y_new);

        let mut err = 0.0f64;
        for i in 0..N {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = s.abs_tol + s.rel_tol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / scale).abs());
        }
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { time: t });
        }

        if err <= 1.0 {
            t = t_new;
            y = y_new;
            k1 = k7;
            steps.push(StepPoint { t, y, dy: k1 });
            if last {
                return Ok(steps);
            }
            let err_c = err.max(1e-10);
            let mut fac = SAFETY * err_c.powf(-PI_ALPHA) * err_old.powf(PI_BETA);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if rejected_last {
                fac = fac.min(1.0);
            }
            err_old = err.max(1e-4);
            h *= fac;
            rejected_last = false;
        } else {
            let fac = (SAFETY * err.powf(-0.2)).max(FAC_MIN);
            h *= fac;
            rejected_last = true;
        }
        if h <= f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::NonConvergent { last_time: t });
        }
    }
    Err(Error::NonConvergent { last_time: t })
}

fn solve_rk4<const N: usize, F>(
    rhs: F,
    y0: [f64; N],
    s: &IntegratorSettings,
    dt: f64,
) -> Result<Vec<StepPoint<N>>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let span = s.t1 - s.t0;
    let n_steps = (span / dt).ceil() as usize;
    if n_steps > s.max_steps {
        return Err(Error::NonConvergent { last_time: s.t0 });
    }
    let mut y = y0;
    let mut steps = Vec::with_capacity(n_steps + 1);
    steps.push(StepPoint {
        t: s.t0,
        y,
        dy: rhs(s.t0, &y),
    });
    for n in 0..n_steps {
        let t = s.t0 + n as f64 * dt;
        let t_next = if n + 1 == n_steps {
            s.t1
        } else {
            s.t0 + (n + 1) as f64 * dt
        };
        let h = t_next - t;
        let k1 = steps[steps.len() - 1].dy;
        let k2 = rhs(t + 0.5 * h, &axpy(&y, 0.5 * h, &[(1.0, &k1)]));
        let k3 = rhs(t + 0.5 * h, &axpy(&y, 0.5 * h, &[(1.0, &k2)]));
        let k4 = rhs(t + h, &axpy(&y, h, &[(1.0, &k3)]));
        y = axpy(
            &y,
            h / 6.0,
            &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)],
        );
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { time: t });
        }
        steps.push(StepPoint {
            t: t_next,
            y,
            dy: rhs(t_next, &y),
        });
    }
    Ok(steps)
}

/// Cubic Hermite interpolation between two step end points.
#[inline]
pub fn hermite<const N: usize>(a: &StepPoint<N>, b: &StepPoint<N>, t: f64) -> [f64; N] {
    if t == a.t {
        return a.y;
    }
    if t == b.t {
        return b.y;
    }
    let h = b.t - a.t;
    let s = (t - a.t) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    std::array::from_fn(|i| h00 * a.y[i] + h10 * h * a.dy[i] + h01 * b.y[i] + h11 * h * b.dy[i])
}

/// Uniform grid of `n` points over `[t0, t1]` with exact end points.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let dt = (t1 - t0) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { t1 } else { t0 + i as f64 * dt })
        .collect()
}

/// Interpolates accepted steps onto the given increasing times, which must lie
/// within the step range.
pub fn interpolate_at<const N: usize>(steps: &[StepPoint<N>], times: &[f64]) -> Vec<[f64; N]> {
    let mut out = Vec::with_capacity(times.len());
    let mut j = 0;
    for &t in times {
        while j + 2 < steps.len() && steps[j + 1].t < t {
            j += 1;
        }
        // Exact hit on the right end of the bracket.
        if j + 1 < steps.len() {
            out.push(hermite(&steps[j], &steps[j + 1], t));
        } else {
            out.push(steps[j].y);
        }
    }
    out
}

/// Resamples accepted steps onto a uniform grid of `n_out` points spanning the
/// first and last step times.
pub fn resample(steps: &[StepPoint<3>], n_out: usize) -> Result<TimeSeries> {
    if steps.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "resampling needs at least 2 accepted steps, got {}",
            steps.len()
        )));
    }
    if n_out < 2 {
        return Err(Error::Config(format!("n_out must be >= 2, got {n_out}")));
    }
    let t = uniform_grid(steps[0].t, steps[steps.len() - 1].t, n_out);
    let states = interpolate_at(steps, &t)
        .into_iter()
        .map(State3::from_array)
        .collect();
    Ok(TimeSeries { t, states })
}

/// Integrates the harvester from `s0` and returns the dense uniform trajectory.
pub fn integrate(
    prm: &HarvesterParams,
    s0: State3,
    settings: &IntegratorSettings,
) -> Result<TimeSeries> {
    prm.validate()?;
    if !s0.is_finite() {
        return Err(Error::Domain(format!("non-finite initial state {s0:?}")));
    }
    let steps = solve(|t, y| rhs_unchecked(y, t, prm), s0.to_array(), settings)?;
    resample(&steps, settings.n_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::potential_energy;

    fn short(t1: f64) -> IntegratorSettings {
        IntegratorSettings {
            t1,
            n_out: 1001,
            ..IntegratorSettings::default()
        }
    }

    #[test]
    fn equilibrium_stays_constant() {
        let ts = integrate(
            &HarvesterParams::classical(0.0),
            State3::new(1.0, 0.0, 0.0),
            &short(50.0),
        )
        .unwrap();
        assert_eq!(ts.len(), 1001);
        assert!(ts.states.iter().all(|s| *s == State3::new(1.0, 0.0, 0.0)));
    }

    #[test]
    fn exponential_decay() {
        let settings = short(1.0);
        let steps = solve(|_, y: &[f64; 1]| [-y[0]], [1.0], &settings).unwrap();
        let end = steps.last().unwrap();
        assert_eq!(end.t, 1.0);
        assert!((end.y[0] - (-1.0f64).exp()).abs() < 1e-6);
        assert!((end.y[0] - 0.3678794).abs() < 1e-6);
    }

    #[test]
    fn fixed_rk4_exponential() {
        let settings = IntegratorSettings {
            t1: 1.0,
            method: Method::FixedRk4 { dt: 1e-3 },
            ..IntegratorSettings::default()
        };
        let steps = solve(|_, y: &[f64; 1]| [-y[0]], [1.0], &settings).unwrap();
        assert_eq!(steps.len(), 1001);
        assert!((steps.last().unwrap().y[0] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn resample_linear_is_exact() {
        let steps: Vec<StepPoint<3>> = [0.0, 0.3, 1.1, 2.0]
            .iter()
            .map(|&t| StepPoint {
                t,
                y: [2.0 * t + 1.0, -t, 0.5],
                dy: [2.0, -1.0, 0.0],
            })
            .collect();
        let ts = resample(&steps, 37).unwrap();
        for (t, s) in ts.t.iter().zip(&ts.states) {
            assert!((s.x - (2.0 * t + 1.0)).abs() < 1e-14);
            assert!((s.xdot + t).abs() < 1e-14);
            assert_eq!(s.v, 0.5);
        }
        assert_eq!(ts.t[0], 0.0);
        assert_eq!(*ts.t.last().unwrap(), 2.0);
    }

    #[test]
    fn resample_at_step_times_is_identity() {
        let steps: Vec<StepPoint<3>> = (0..11)
            .map(|i| {
                let t = i as f64 * 0.5;
                StepPoint {
                    t,
                    y: [t.sin(), t.cos(), t * t],
                    dy: [t.cos(), -t.sin(), 2.0 * t],
                }
            })
            .collect();
        let ts = resample(&steps, 11).unwrap();
        for (s, p) in ts.states.iter().zip(&steps) {
            assert_eq!(s.to_array(), p.y);
        }
    }

    #[test]
    fn resample_sine_dense() {
        // Tight tolerances so the step values themselves are accurate and the
        // check isolates the interpolant.
        let settings = IntegratorSettings {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            ..short(20.0)
        };
        let steps = solve(|_, y: &[f64; 2]| [y[1], -y[0]], [0.0, 1.0], &settings).unwrap();
        let times = uniform_grid(0.0, 20.0, 10 * steps.len());
        let vals = interpolate_at(&steps, &times);
        let max_err = times
            .iter()
            .zip(&vals)
            .map(|(t, y)| (y[0] - t.sin()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-6, "max error {max_err}");
    }

    #[test]
    fn resample_needs_two_steps() {
        let p = StepPoint {
            t: 0.0,
            y: [0.0; 3],
            dy: [0.0; 3],
        };
        assert!(resample(&[p], 10).is_err());
    }

    #[test]
    fn undamped_well_conserves_energy() {
        let prm = HarvesterParams {
            xi: 0.0,
            chi: 0.0,
            f: 0.0,
            ..HarvesterParams::default()
        };
        let settings = IntegratorSettings {
            // Default tolerances drift by ~1e-5 over this span; tighten them.
            rel_tol: 1e-8,
            abs_tol: 1e-11,
            t1: 200.0,
            n_out: 20_001,
            ..IntegratorSettings::default()
        };
        let ts = integrate(&prm, State3::new(1.2, 0.0, 0.0), &settings).unwrap();
        let energy = |s: &State3| 0.5 * s.xdot * s.xdot + potential_energy(s.x, 0.0);
        let e0 = energy(&ts.states[0]);
        let drift = ts
            .states
            .iter()
            .map(|s| ((energy(s) - e0) / e0).abs())
            .fold(0.0, f64::max);
        assert!(drift < 1e-5, "relative energy drift {drift}");
    }

    #[test]
    fn deterministic_output() {
        let prm = HarvesterParams::classical(0.1);
        let a = integrate(&prm, State3::new(1.0, 0.0, 0.0), &short(100.0)).unwrap();
        let b = integrate(&prm, State3::new(1.0, 0.0, 0.0), &short(100.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_budget_error() {
        let settings = IntegratorSettings {
            max_steps: 10,
            ..short(100.0)
        };
        let err = integrate(
            &HarvesterParams::classical(0.1),
            State3::new(1.0, 0.0, 0.0),
            &settings,
        )
        .unwrap_err();
        match err {
            Error::NonConvergent { last_time } => assert!(last_time > 0.0 && last_time < 100.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blow_up_detected() {
        let settings = short(10.0);
        let err = solve(|_, y: &[f64; 1]| [y[0] * y[0]], [1.0], &settings).unwrap_err();
        assert!(
            matches!(err, Error::BlowUp { .. } | Error::NonConvergent { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn invalid_settings_rejected() {
        let mut s = short(10.0);
        s.rel_tol = 0.0;
        assert!(s.validate().is_err());
        let mut s = short(10.0);
        s.t1 = s.t0;
        assert!(s.validate().is_err());
        let mut s = short(10.0);
        s.n_out = 1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn with_span_keeps_spacing() {
        let s = IntegratorSettings::default().with_span(2000.0, 2500.0);
        assert_eq!(s.n_out, 50_001);
    }
}
