//! Built-in oracle suite: problems with known answers that exercise the
//! integrator, the polynomial basis, the regression and both Sobol estimators.

use std::f64::consts::PI;

use harvest_sa_core::error::Result;
use harvest_sa_core::integrator::{solve, IntegratorSettings};
use harvest_sa_core::model::{potential_energy, rhs, HarvesterParams, State3};
use harvest_sa_core::pce::{fit, legendre_orthonormal, sobol_from_pce, DegreePolicy, MultiIndex};
use harvest_sa_core::uq::{
    lhs_sample, mc_first_order, InputEntry, RandomInputSpec, SensitivityReport,
};

/// Criterion group of a check.
pub const GROUP_CORE: &str = "core";
pub const GROUP_ISHIGAMI: &str = "ishigami";

const ISHIGAMI_A: f64 = 7.0;
const ISHIGAMI_B: f64 = 0.1;
const PCE_SEED: u64 = 2024;
const MC_SEED: u64 = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub group: &'static str,
    pub name: &'static str,
    /// Observed error.
    pub value: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

fn check(group: &'static str, name: &'static str, value: f64, tolerance: f64) -> OracleCheck {
    OracleCheck {
        group,
        name,
        value,
        tolerance,
    }
}

fn max_abs_diff(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest error of `y' = -y` over [0, 10] at the accepted steps.
fn exponential_decay() -> Result<f64> {
    let settings = IntegratorSettings::default().with_span(0.0, 10.0);
    let steps = solve(|_, y: &[f64; 1]| [-y[0]], [1.0], &settings)?;
    Ok(max_abs_diff(
        steps.iter().map(|s| s.y[0]),
        steps.iter().map(|s| (-s.t).exp()),
    ))
}

/// Relative energy drift of the unforced, undamped, uncoupled well.
fn energy_drift() -> Result<f64> {
    let prm = HarvesterParams {
        xi: 0.0,
        chi: 0.0,
        f: 0.0,
        ..HarvesterParams::default()
    };
    let settings = IntegratorSettings {
        rel_tol: 1e-8,
        abs_tol: 1e-11,
        ..IntegratorSettings::default().with_span(0.0, 200.0)
    };
    let energy = |y: &[f64; 3]| 0.5 * y[1] * y[1] + potential_energy(y[0], prm.delta);
    let y0 = [1.2, 0.0, 0.0];
    let h0 = energy(&y0);
    let steps = solve(
        |t, y: &[f64; 3]| rhs(State3::from_array(*y), t, &prm).unwrap_or([f64::NAN; 3]),
        y0,
        &settings,
    )?;
    Ok(steps
        .iter()
        .map(|s| ((energy(&s.y) - h0) / h0).abs())
        .fold(0.0, f64::max))
}

/// Gauss-Legendre rule on [-1, 1] by Newton iteration on `P_n`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let legendre = |x: f64| {
        let (mut p0, mut p1) = (1.0, x);
        for k in 1..n {
            let kf = k as f64;
            let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
            p0 = p1;
            p1 = p2;
        }
        (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
    };
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(x);
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Largest deviation of the degree <= 10 Gram matrix from the identity.
fn gram_deviation() -> f64 {
    let rule = gauss_legendre(12);
    let mut worst: f64 = 0.0;
    for i in 0..=10 {
        for j in 0..=10 {
            let g: f64 = rule
                .iter()
                .map(|&(x, w)| 0.5 * w * legendre_orthonormal(i, x) * legendre_orthonormal(j, x))
                .sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

fn unit_spec(k: usize) -> Result<RandomInputSpec> {
    RandomInputSpec::new(
        (1..=k)
            .map(|i| InputEntry {
                name: format!("u{i}"),
                lower: -1.0,
                upper: 1.0,
            })
            .collect(),
    )
}

/// Coefficient error of the degree-2 expansion of `u1^2`.
fn square_coefficients() -> Result<f64> {
    let spec = unit_spec(2)?;
    let design = lhs_sample(40, 2, PCE_SEED)?;
    let y: Vec<f64> = design.rows().map(|u| u[0] * u[0]).collect();
    let model = fit(&spec, &design, &y, DegreePolicy::Fixed(2))?;
    let expected = |alpha: &MultiIndex| match alpha.0.as_slice() {
        [0, 0] => 1.0 / 3.0,
        [2, 0] => 2.0 / (3.0 * 5f64.sqrt()),
        _ => 0.0,
    };
    Ok(max_abs_diff(
        model.coeffs.iter().copied(),
        model.indices.iter().map(expected),
    ))
}

fn linear_reports(workers: usize) -> Result<(SensitivityReport, SensitivityReport)> {
    let spec = unit_spec(2)?;
    let model_fn = |u: &[f64]| u[0] + 2.0 * u[1];
    let design = lhs_sample(20, 2, PCE_SEED)?;
    let y: Vec<f64> = design.rows().map(model_fn).collect();
    let pce = sobol_from_pce(&fit(&spec, &design, &y, DegreePolicy::Fixed(1))?, 1)?;
    let mc = mc_first_order(|u| Ok(model_fn(u)), &spec, 4096, MC_SEED, workers)?;
    Ok((pce, mc))
}

fn ishigami(x: &[f64]) -> f64 {
    x[0].sin() + ISHIGAMI_A * x[1].sin().powi(2) + ISHIGAMI_B * x[2].powi(4) * x[0].sin()
}

/// Closed-form first-order indices of the Ishigami function.
pub fn ishigami_first_order() -> [f64; 3] {
    let (a, b) = (ISHIGAMI_A, ISHIGAMI_B);
    let pi4 = PI.powi(4);
    let v1 = 0.5 * (1.0 + b * pi4 / 5.0).powi(2);
    let v2 = a * a / 8.0;
    let v13 = b * b * PI.powi(8) * (1.0 / 18.0 - 1.0 / 50.0);
    let v = v1 + v2 + v13;
    [v1 / v, v2 / v, 0.0]
}

fn ishigami_spec() -> Result<RandomInputSpec> {
    RandomInputSpec::new(
        (1..=3)
            .map(|i| InputEntry {
                name: format!("x{i}"),
                lower: -PI,
                upper: PI,
            })
            .collect(),
    )
}

fn ishigami_reports(workers: usize) -> Result<(SensitivityReport, SensitivityReport)> {
    let spec = ishigami_spec()?;
    let design = lhs_sample(500, 3, PCE_SEED)?;
    let y = design
        .rows()
        .map(|u| Ok(ishigami(&spec.cube_to_values(u)?)))
        .collect::<Result<Vec<f64>>>()?;
    let pce = sobol_from_pce(&fit(&spec, &design, &y, DegreePolicy::Fixed(9))?, 1)?;
    let mc = mc_first_order(
        |u| Ok(ishigami(&spec.cube_to_values(u)?)),
        &spec,
        16384,
        MC_SEED,
        workers,
    )?;
    Ok((pce, mc))
}

fn first_values(r: &SensitivityReport) -> Vec<f64> {
    r.first_order.iter().map(|(_, v)| *v).collect()
}

/// Runs every oracle check.
pub fn run_oracles(workers: usize) -> Result<Vec<OracleCheck>> {
    let mut out = vec![
        check(
            GROUP_CORE,
            "exponential_decay_error",
            exponential_decay()?,
            1e-6,
        ),
        check(GROUP_CORE, "undamped_energy_drift", energy_drift()?, 1e-5),
        check(
            GROUP_CORE,
            "legendre_gram_deviation",
            gram_deviation(),
            1e-12,
        ),
        check(
            GROUP_CORE,
            "square_pce_coefficients",
            square_coefficients()?,
            1e-10,
        ),
    ];
    let (pce, mc) = linear_reports(workers)?;
    out.push(check(
        GROUP_CORE,
        "linear_pce_indices",
        max_abs_diff(first_values(&pce), [0.2, 0.8]),
        1e-10,
    ));
    out.push(check(
        GROUP_CORE,
        "linear_mc_indices",
        max_abs_diff(first_values(&mc), [0.2, 0.8]),
        0.03,
    ));

    let (pce, mc) = ishigami_reports(workers)?;
    let exact = ishigami_first_order();
    let (p, m) = (first_values(&pce), first_values(&mc));
    let mae = p.iter().zip(&m).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64;
    out.push(check(
        GROUP_ISHIGAMI,
        "ishigami_pce_indices",
        max_abs_diff(p, exact),
        0.02,
    ));
    out.push(check(
        GROUP_ISHIGAMI,
        "ishigami_mc_indices",
        max_abs_diff(m, exact),
        0.03,
    ));
    out.push(check(GROUP_ISHIGAMI, "ishigami_pce_mc_mae", mae, 0.03));
    Ok(out)
}
