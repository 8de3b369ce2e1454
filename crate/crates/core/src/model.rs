//! Equations of motion of the (a)symmetric bistable piezo-magneto-elastic
//! harvester with nonlinear electromechanical coupling.
//!
//! All quantities are dimensionless. With `beta = delta = phi = 0` the
//! equations are the classical linear-coupling double-well harvester.

use std::fmt;

use crate::error::{Error, Result};

/// Names of the model coefficients, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    Xi,
    Chi,
    Lambda,
    Kappa,
    F,
    Omega,
    Beta,
    Delta,
    Phi,
    P,
}

impl Param {
    pub const ALL: [Param; 10] = [
        Param::Xi,
        Param::Chi,
        Param::Lambda,
        Param::Kappa,
        Param::F,
        Param::Omega,
        Param::Beta,
        Param::Delta,
        Param::Phi,
        Param::P,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Xi => "xi",
            Param::Chi => "chi",
            Param::Lambda => "lambda",
            Param::Kappa => "kappa",
            Param::F => "f",
            Param::Omega => "Omega",
            Param::Beta => "beta",
            Param::Delta => "delta",
            Param::Phi => "phi",
            Param::P => "p",
        }
    }

    /// Accepts the canonical name; `omega` is accepted case-insensitively.
    pub fn from_name(name: &str) -> Option<Param> {
        Param::ALL
            .iter()
            .copied()
            .find(|p| p.name() == name || p.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Dimensionless coefficients of the harvester. `phi` is stored in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvesterParams {
    /// Damping ratio.
    pub xi: f64,
    /// Piezoelectric coupling in the mechanical equation.
    pub chi: f64,
    /// Reciprocal time constant of the circuit.
    pub lambda: f64,
    /// Piezoelectric coupling in the electrical equation.
    pub kappa: f64,
    /// Excitation amplitude.
    pub f: f64,
    /// Excitation frequency.
    pub omega: f64,
    /// Nonlinear electromechanical coupling coefficient.
    pub beta: f64,
    /// Quadratic asymmetry of the restoring force.
    pub delta: f64,
    /// Bias angle in radians.
    pub phi: f64,
    /// Equivalent dimensionless gravity.
    pub p: f64,
}

impl Default for HarvesterParams {
    /// Classical nominal harvester with `f = 0`.
    fn default() -> Self {
        Self {
            xi: 0.01,
            chi: 0.05,
            lambda: 0.05,
            kappa: 0.5,
            f: 0.0,
            omega: 0.8,
            beta: 0.0,
            delta: 0.0,
            phi: 0.0,
            p: 1.0,
        }
    }
}

impl HarvesterParams {
    /// Classical nominal parameters at excitation amplitude `f`.
    pub fn classical(f: f64) -> Self {
        Self {
            f,
            ..Self::default()
        }
    }

    pub fn get(&self, param: Param) -> f64 {
        match param {
            Param::Xi => self.xi,
            Param::Chi => self.chi,
            Param::Lambda => self.lambda,
            Param::Kappa => self.kappa,
            Param::F => self.f,
            Param::Omega => self.omega,
            Param::Beta => self.beta,
            Param::Delta => self.delta,
            Param::Phi => self.phi,
            Param::P => self.p,
        }
    }

    pub fn set(&mut self, param: Param, value: f64) {
        let slot = match param {
            Param::Xi => &mut self.xi,
            Param::Chi => &mut self.chi,
            Param::Lambda => &mut self.lambda,
            Param::Kappa => &mut self.kappa,
            Param::F => &mut self.f,
            Param::Omega => &mut self.omega,
            Param::Beta => &mut self.beta,
            Param::Delta => &mut self.delta,
            Param::Phi => &mut self.phi,
            Param::P => &mut self.p,
        };
        *slot = value;
    }

    pub fn with(mut self, param: Param, value: f64) -> Self {
        self.set(param, value);
        self
    }

    /// Sets the bias angle from degrees.
    pub fn with_phi_degrees(mut self, degrees: f64) -> Self {
        self.phi = degrees.to_radians();
        self
    }

    pub fn validate(&self) -> Result<()> {
        for param in Param::ALL {
            let value = self.get(param);
            if !value.is_finite() {
                return Err(Error::Domain(format!("{param} is not finite ({value})")));
            }
        }
        let non_negative = [
            (Param::Xi, self.xi),
            (Param::Lambda, self.lambda),
            (Param::Kappa, self.kappa),
            (Param::F, self.f),
            (Param::Beta, self.beta),
        ];
        for (param, value) in non_negative {
            if value < 0.0 {
                return Err(Error::Domain(format!("{param} must be >= 0, got {value}")));
            }
        }
        if self.omega <= 0.0 {
            return Err(Error::Domain(format!(
                "Omega must be > 0, got {}",
                self.omega
            )));
        }
        Ok(())
    }
}

/// Mechanical displacement, velocity and voltage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State3 {
    pub x: f64,
    pub xdot: f64,
    pub v: f64,
}

/// Time derivative of a [`State3`]: `(xdot, xddot, vdot)`.
pub type Derivative3 = [f64; 3];

impl State3 {
    pub const fn new(x: f64, xdot: f64, v: f64) -> Self {
        Self { x, xdot, v }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.xdot, self.v]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.xdot.is_finite() && self.v.is_finite()
    }
}

/// Right-hand side without validation; used in the integrator hot loop.
#[inline]
pub(crate) fn rhs_unchecked(y: &[f64; 3], t: f64, prm: &HarvesterParams) -> Derivative3 {
    let [x, xdot, v] = *y;
    let coupling = coupling_modulation(x, prm.beta);
    let restoring = 0.5 * x * (1.0 + 2.0 * prm.delta * x - x * x);
    let xddot = -2.0 * prm.xi * xdot
        + restoring
        + coupling * prm.chi * v
        + prm.f * (prm.omega * t).cos()
        + prm.p * prm.phi.sin();
    let vdot = -prm.lambda * v - coupling * prm.kappa * xdot;
    [xdot, xddot, vdot]
}

/// Equations of motion: returns `(xdot, xddot, vdot)` at state `s` and time `t`.
pub fn rhs(s: State3, t: f64, prm: &HarvesterParams) -> Result<Derivative3> {
    prm.validate()?;
    if !s.is_finite() || !t.is_finite() {
        return Err(Error::Domain(format!("non-finite state {s:?} at t = {t}")));
    }
    Ok(rhs_unchecked(&s.to_array(), t, prm))
}

/// Potential energy of the (a)symmetric double well,
/// `U(x) = -x^2/4 - delta x^3/3 + x^4/8`.
pub fn potential_energy(x: f64, delta: f64) -> f64 {
    let x2 = x * x;
    -0.25 * x2 - delta * x2 * x / 3.0 + 0.125 * x2 * x2
}

/// Roots of the restoring force, sorted ascending.
pub fn equilibria(delta: f64) -> [f64; 3] {
    let r = delta.hypot(1.0);
    // delta - r loses precision for large |delta|; use the product of roots (= -1).
    let (lo, hi) = if delta >= 0.0 {
        let hi = delta + r;
        (-1.0 / hi, hi)
    } else {
        let lo = delta - r;
        (lo, -1.0 / lo)
    };
    [lo, 0.0, hi]
}

/// Strain-dependent coupling factor `1 + beta |x|`.
#[inline]
pub fn coupling_modulation(x: f64, beta: f64) -> f64 {
    1.0 + beta * x.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uncoupled(beta: f64, kappa: f64) -> HarvesterParams {
        HarvesterParams {
            xi: 0.0,
            chi: 0.0,
            lambda: 0.0,
            kappa,
            f: 0.0,
            omega: 1.0,
            beta,
            delta: 0.0,
            phi: 0.0,
            p: 0.0,
        }
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let d = rhs(
            State3::new(1.0, 0.0, 0.0),
            0.0,
            &HarvesterParams::classical(0.0),
        )
        .unwrap();
        assert_eq!(d, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn forcing_enters_acceleration() {
        let d = rhs(
            State3::new(1.0, 0.0, 0.0),
            0.0,
            &HarvesterParams::classical(0.083),
        )
        .unwrap();
        assert_eq!(d, [0.0, 0.083, 0.0]);
    }

    #[test]
    fn coupling_at_origin() {
        let d = rhs(State3::new(0.0, 1.0, 0.0), 0.0, &uncoupled(1.0, 0.5)).unwrap();
        assert_eq!(d, [1.0, 0.0, -0.5]);
    }

    #[test]
    fn rejects_non_finite() {
        let prm = HarvesterParams::classical(0.1);
        assert!(matches!(
            rhs(State3::new(f64::NAN, 0.0, 0.0), 0.0, &prm),
            Err(Error::Domain(_))
        ));
        let bad = prm.with(Param::Chi, f64::INFINITY);
        assert!(rhs(State3::default(), 0.0, &bad).is_err());
        assert!(prm.with(Param::Omega, 0.0).validate().is_err());
        assert!(prm.with(Param::Xi, -0.1).validate().is_err());
    }

    #[test]
    fn potential_values() {
        assert_eq!(potential_energy(0.0, 0.3), 0.0);
        assert_eq!(potential_energy(1.0, 0.0), -0.125);
        for &(x, d) in &[(0.7, 0.1), (-1.3, 0.15), (2.0, -0.05)] {
            assert_eq!(potential_energy(-x, -d), potential_energy(x, d));
        }
    }

    #[test]
    fn equilibria_values() {
        assert_eq!(equilibria(0.0), [-1.0, 0.0, 1.0]);
        let e = equilibria(0.15);
        assert!((e[0] - -0.8612).abs() < 5e-5);
        assert!((e[2] - 1.1612).abs() < 5e-5);
        let m = equilibria(-0.15);
        assert_eq!(m, [-e[2], 0.0, -e[0]]);
    }

    #[test]
    fn modulation_values() {
        assert_eq!(coupling_modulation(0.0, 3.0), 1.0);
        assert_eq!(coupling_modulation(1.0, 1.0), 2.0);
        assert_eq!(coupling_modulation(-0.5, 2.0), 2.0);
    }

    #[test]
    fn param_names_round_trip() {
        for p in Param::ALL {
            assert_eq!(Param::from_name(p.name()), Some(p));
        }
        assert_eq!(Param::from_name("omega"), Some(Param::Omega));
        assert_eq!(Param::from_name("gamma"), None);
    }

    #[test]
    fn reduces_to_classical_model() {
        let prm = HarvesterParams::classical(0.1);
        let s = State3::new(0.3, -0.2, 0.05);
        let t = 1.7;
        let d = rhs(s, t, &prm).unwrap();
        let xddot = -2.0 * prm.xi * s.xdot
            + 0.5 * s.x * (1.0 - s.x * s.x)
            + prm.chi * s.v
            + prm.f * (prm.omega * t).cos();
        let vdot = -prm.lambda * s.v - prm.kappa * s.xdot;
        assert_eq!(d[1], xddot);
        assert_eq!(d[2], vdot);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn equilibria_are_fixed_points(delta in -1.0f64..1.0) {
                let prm = HarvesterParams { delta, f: 0.0, phi: 0.0, ..HarvesterParams::default() };
                for x in equilibria(delta) {
                    let d = rhs(State3::new(x, 0.0, 0.0), 0.0, &prm).unwrap();
                    prop_assert!(d.iter().all(|c| c.abs() < 1e-14), "{d:?} at x = {x}");
                }
            }

            #[test]
            fn sign_map_equivariance(
                x in -2.0f64..2.0, xd in -2.0f64..2.0, v in -1.0f64..1.0,
                delta in -0.3f64..0.3, beta in 0.0f64..3.0, t in 0.0f64..50.0,
            ) {
                let prm = HarvesterParams { delta, beta, f: 0.0, phi: 0.0, ..HarvesterParams::default() };
                let mirrored = HarvesterParams { delta: -delta, ..prm };
                let a = rhs(State3::new(x, xd, v), t, &prm).unwrap();
                let b = rhs(State3::new(-x, -xd, -v), t, &mirrored).unwrap();
                for i in 0..3 {
                    prop_assert!((a[i] + b[i]).abs() <= 1e-15 * (1.0 + a[i].abs()));
                }
            }

            #[test]
            fn modulation_even_and_monotone(x in -5.0f64..5.0, dx in 0.0f64..1.0, beta in 0.0f64..4.0) {
                prop_assert_eq!(coupling_modulation(x, beta), coupling_modulation(-x, beta));
                prop_assert!(coupling_modulation(x.abs() + dx, beta) >= coupling_modulation(x, beta));
                prop_assert!(coupling_modulation(x, beta) >= 1.0);
            }

            #[test]
            fn potential_gradient_matches_restoring_force(x in -2.5f64..2.5, delta in -0.3f64..0.3) {
                let h = 1e-5;
                let grad = (potential_energy(x + h, delta) - potential_energy(x - h, delta)) / (2.0 * h);
                let force = 0.5 * x * (1.0 + 2.0 * delta * x - x * x);
                prop_assert!((-grad - force).abs() <= 1e-6 * (1.0 + force.abs()));
            }
        }
    }
}
