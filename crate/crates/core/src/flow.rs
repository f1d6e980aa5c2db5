//! Time-`t₀` maps of forced scalar ODEs `x' = F_β(ω_t(θ), x)`.
//!
//! The base flow is the rotation flow `ω_t(θ) = θ + t·ρ mod 1`, whose time-`t₀`
//! map is the circle rotation by `ρ·t₀`. The fibre derivative of the induced
//! map is `exp ∫₀^{t₀} ∂ₓF ds` along the trajectory; the integrand is carried
//! as an extra state component of a fixed-step RK4 scheme.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::base::{wrap, BasePoint, BaseSystem};
use crate::error::{Error, Result};
use crate::fibre::{FibreMap, GammaBoundary, NoPreimage, Orientation};

const TWO_PI: f64 = 2.0 * PI;

/// Supported vector fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", content = "params", rename_all = "snake_case")]
pub enum VectorField {
    /// `a·x + b·sin 2πθ + beta_coeff·β`.
    Linear {
        a: f64,
        #[serde(default)]
        b: f64,
        #[serde(default = "default_beta_coeff")]
        beta_coeff: f64,
    },
    /// `−(x − 1)² + c0 + c1·sin 2πθ − β`.
    QuadraticCap { c0: f64, c1: f64 },
}

fn default_beta_coeff() -> f64 {
    -1.0
}

impl VectorField {
    #[inline]
    pub fn f(&self, beta: f64, theta: f64, x: f64) -> f64 {
        match *self {
            VectorField::Linear { a, b, beta_coeff } => a * x + b * (TWO_PI * theta).sin() + beta_coeff * beta,
            VectorField::QuadraticCap { c0, c1 } => {
                -(x - 1.0) * (x - 1.0) + c0 + c1 * (TWO_PI * theta).sin() - beta
            }
        }
    }

    #[inline]
    pub fn df_dx(&self, _beta: f64, _theta: f64, x: f64) -> f64 {
        match *self {
            VectorField::Linear { a, .. } => a,
            VectorField::QuadraticCap { .. } => -2.0 * (x - 1.0),
        }
    }
}

/// A forced scalar ODE sampled at period `t0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarFlowSystem {
    pub field: VectorField,
    pub t0: f64,
    pub rho_flow: f64,
    pub boundary: GammaBoundary,
    /// Trajectories with `|x|` above this are reported as blown up.
    pub blowup: f64,
    /// RK4 steps per period, fixed at construction.
    pub steps: usize,
}

impl ScalarFlowSystem {
    /// Builds the system and fixes the RK4 step count: the smallest power of
    /// two such that halving the step changes `x(t₀)` by less than `1e-10`
    /// on a probe set of starting points in `Γ` with `β ∈ beta_range`.
    pub fn new(field: VectorField, t0: f64, rho_flow: f64, boundary: GammaBoundary, beta_range: (f64, f64)) -> Result<Self> {
        if !(t0 > 0.0) || !t0.is_finite() {
            return Err(Error::Config(format!("t0 must be positive, got {t0}")));
        }
        let mut sys = Self {
            field,
            t0,
            rho_flow,
            boundary,
            blowup: 1e6,
            steps: 16,
        };
        let mut probes = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                for &beta in &[beta_range.0, beta_range.1] {
                    let x = boundary.lower + (boundary.upper - boundary.lower) * j as f64 / 4.0;
                    probes.push((beta, i as f64 / 5.0, x));
                }
            }
        }
        let width = boundary.upper - boundary.lower;
        let mut k = 4;
        loop {
            let n = 1usize << k;
            let worst = probes
                .iter()
                .filter_map(|&(beta, th, x)| {
                    let a = sys.integrate(beta, th, x, t0, n).ok()?;
                    let b = sys.integrate(beta, th, x, t0, 2 * n).ok()?;
                    // trajectories heading for blow-up say nothing about accuracy on Γ
                    let far = |y: f64| (y - 0.5 * (boundary.lower + boundary.upper)).abs() > 2.0 * width;
                    if far(a.0) || far(b.0) {
                        return None;
                    }
                    Some((a.0 - b.0).abs())
                })
                .fold(0.0, f64::max);
            if worst < 1e-10 {
                sys.steps = 2 * n;
                return Ok(sys);
            }
            k += 1;
            if k > 20 {
                return Err(Error::Numerical(format!(
                    "RK4 step count did not settle below 2^20 steps (last change {worst:e})"
                )));
            }
        }
    }

    /// The induced discrete base: rotation by `ρ·t₀`.
    pub fn base_system(&self) -> BaseSystem {
        BaseSystem::Rotation {
            rho: wrap(self.rho_flow * self.t0),
        }
    }

    /// Integrates `(x, ∫∂ₓF)` from `(θ, x)` over signed time `t` in `n`
    /// equal steps. Returns the end state and the accumulated log-derivative.
    pub fn integrate(&self, beta: f64, theta: f64, x: f64, t: f64, n: usize) -> Result<(f64, f64)> {
        let h = t / n as f64;
        let rhs = |s: f64, x: f64| {
            let th = theta + self.rho_flow * s;
            (self.field.f(beta, th, x), self.field.df_dx(beta, th, x))
        };
        let (mut x, mut l) = (x, 0.0);
        for i in 0..n {
            let s = i as f64 * h;
            let (k1, m1) = rhs(s, x);
            let (k2, m2) = rhs(s + 0.5 * h, x + 0.5 * h * k1);
            let (k3, m3) = rhs(s + 0.5 * h, x + 0.5 * h * k2);
            let (k4, m4) = rhs(s + h, x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            l += h / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
            if !(x.abs() <= self.blowup) {
                return Err(Error::Blowup { t: s + h, x });
            }
        }
        Ok((x, l))
    }

    /// `(x(t₀), ∂ₓx(t₀))` from `(θ, x)`.
    pub fn time_t0_map(&self, beta: f64, theta: &BasePoint, x: f64) -> Result<(f64, f64)> {
        let (y, l) = self.integrate(beta, theta.t1(), x, self.t0, self.steps)?;
        Ok((y, l.exp()))
    }

    /// The same map over `k` periods, with the same step size.
    pub fn time_map_periods(&self, beta: f64, theta: &BasePoint, x: f64, k: usize) -> Result<(f64, f64)> {
        let (y, l) = self.integrate(beta, theta.t1(), x, k as f64 * self.t0, k * self.steps)?;
        Ok((y, l.exp()))
    }

    /// Sampled check that `∂ₓF > 0` on the interior of `Γ`. Returns the
    /// violations found.
    pub fn check_field_monotone(&self, beta_range: (f64, f64)) -> Vec<String> {
        let mut out = Vec::new();
        let (lo, hi) = (self.boundary.lower, self.boundary.upper);
        for i in 0..20 {
            for j in 1..20 {
                for &beta in &[beta_range.0, beta_range.1] {
                    let th = i as f64 / 20.0;
                    let x = lo + (hi - lo) * j as f64 / 20.0;
                    let d = self.field.df_dx(beta, th, x);
                    if !(d > 0.0) {
                        out.push(format!("∂ₓF = {d} ≤ 0 at θ={th}, x={x}, β={beta}"));
                    }
                }
            }
        }
        out
    }

    /// Whether trajectories started on `γ±` stay on the side required by
    /// `orientation` at every RK4 substep over one period: below the boundary
    /// for the concave orientation, above it for the convex one.
    pub fn boundaries_trap(&self, beta: f64, orientation: Orientation, thetas: &[f64]) -> bool {
        let h = self.t0 / self.steps as f64;
        thetas.iter().all(|&theta| {
            [self.boundary.lower, self.boundary.upper].iter().all(|&g| {
                let mut x = g;
                (0..self.steps).all(|i| {
                    let s = i as f64 * h;
                    match self.integrate(beta, theta + self.rho_flow * s, x, h, 1) {
                        Ok((y, _)) => {
                            x = y;
                            match orientation {
                                Orientation::ConvexIncreasing => x >= g - 1e-12,
                                _ => x <= g + 1e-12,
                            }
                        }
                        Err(_) => false,
                    }
                })
            })
        })
    }
}

/// The induced map `θ ↦ (θ + ρt₀, x(t₀))` as a fibre family.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowFamily {
    pub sys: ScalarFlowSystem,
    orientation: Orientation,
}

const FD_H: f64 = 1e-5;

impl FlowFamily {
    fn value_or_inf(&self, beta: f64, theta: &BasePoint, x: f64) -> f64 {
        match self.sys.time_t0_map(beta, theta, x) {
            Ok((y, _)) => y,
            Err(Error::Blowup { x, .. }) => x.signum() * f64::INFINITY,
            Err(_) => f64::NAN,
        }
    }
}

impl FibreMap for FlowFamily {
    fn eval(&self, beta: f64, theta: &BasePoint, x: f64) -> f64 {
        self.value_or_inf(beta, theta, x)
    }

    fn deriv_x(&self, beta: f64, theta: &BasePoint, x: f64) -> f64 {
        self.sys.time_t0_map(beta, theta, x).map(|(_, d)| d).unwrap_or(f64::NAN)
    }

    fn deriv_xx(&self, beta: f64, theta: &BasePoint, x: f64) -> f64 {
        (self.deriv_x(beta, theta, x + FD_H) - self.deriv_x(beta, theta, x - FD_H)) / (2.0 * FD_H)
    }

    fn deriv_beta(&self, beta: f64, theta: &BasePoint, x: f64) -> f64 {
        (self.eval(beta + FD_H, theta, x) - self.eval(beta - FD_H, theta, x)) / (2.0 * FD_H)
    }

    fn boundary(&self, theta: &BasePoint) -> (f64, f64) {
        self.sys.boundary.at(theta)
    }

    fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Integrates backward in time from `ω_{t₀}(θ)`.
    fn inverse(&self, beta: f64, theta: &BasePoint, y: f64) -> Result<f64, NoPreimage> {
        let start = theta.t1() + self.sys.rho_flow * self.sys.t0;
        self.sys
            .integrate(beta, start, y, -self.sys.t0, self.sys.steps)
            .map(|(x, _)| x)
            .map_err(|_| NoPreimage)
    }
}

/// Wraps the time-`t₀` map as a fibre family after checking, on a sample
/// grid of `(β, θ, x)`, that the induced map is increasing in `x` and has a
/// strict, constant sign of `∂²ₓf` and of `∂_βf`. The orientation is
/// inferred from those signs.
pub fn as_fibre_family(sys: ScalarFlowSystem, beta_range: (f64, f64)) -> Result<FlowFamily> {
    let mut fam = FlowFamily {
        sys,
        orientation: Orientation::None,
    };
    let (lo, hi) = (fam.sys.boundary.lower, fam.sys.boundary.upper);
    let mut problems = Vec::new();
    let mut curv = Vec::new();
    let mut slope_b = Vec::new();
    for i in 0..8 {
        let theta = BasePoint::new1(i as f64 / 8.0);
        for j in 0..=8 {
            let x = lo + (hi - lo) * j as f64 / 8.0;
            for k in 0..3 {
                let beta = beta_range.0 + (beta_range.1 - beta_range.0) * k as f64 / 2.0;
                let d = fam.deriv_x(beta, &theta, x);
                if !(d > 0.0) {
                    problems.push(format!("∂ₓf = {d} not > 0 at θ={}, x={x}, β={beta}", theta.t1()));
                }
                curv.push(fam.deriv_xx(beta, &theta, x));
                slope_b.push(fam.deriv_beta(beta, &theta, x));
            }
        }
    }
    let sign = |v: &[f64], name: &str, problems: &mut Vec<String>| -> i8 {
        // magnitudes below this are finite-difference noise on a degenerate map
        const NOISE: f64 = 1e-5;
        if v.iter().all(|d| *d > NOISE) {
            1
        } else if v.iter().all(|d| *d < -NOISE) {
            -1
        } else {
            let (mn, mx) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| (a.min(*d), b.max(*d)));
            problems.push(format!("{name} has no strict constant sign on Γ (range [{mn:e}, {mx:e}])"));
            0
        }
    };
    let s_curv = sign(&curv, "∂²ₓf", &mut problems);
    let s_beta = sign(&slope_b, "∂_βf", &mut problems);
    fam.orientation = match (s_curv, s_beta) {
        (1, 1) => Orientation::ConvexIncreasing,
        (-1, -1) => Orientation::ConcaveDecreasing,
        (0, _) | (_, 0) => Orientation::None,
        _ => {
            problems.push("convexity and β-monotonicity do not match a supported orientation".into());
            Orientation::None
        }
    };
    if problems.is_empty() {
        Ok(fam)
    } else {
        Err(Error::ValidationFailed(problems))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cap(rho_flow: f64) -> ScalarFlowSystem {
        ScalarFlowSystem::new(
            VectorField::QuadraticCap { c0: 0.6, c1: 0.2 },
            1.0,
            rho_flow,
            GammaBoundary::new(0.0, 2.0).unwrap(),
            (0.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn linear_field_derivative_is_exponential() {
        let sys = ScalarFlowSystem::new(
            VectorField::Linear { a: -1.0, b: 0.3, beta_coeff: -1.0 },
            1.0,
            0.618,
            GammaBoundary::default(),
            (0.0, 1.0),
        )
        .unwrap();
        for &x in &[0.0, 0.5, 1.7] {
            let (_, d) = sys.time_t0_map(0.2, &BasePoint::new1(0.1), x).unwrap();
            assert_abs_diff_eq!(d, (-1.0f64).exp(), epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_field_is_the_identity() {
        let sys = ScalarFlowSystem::new(
            VectorField::Linear { a: 0.0, b: 0.0, beta_coeff: 0.0 },
            2.0,
            0.3,
            GammaBoundary::default(),
            (0.0, 1.0),
        )
        .unwrap();
        let (y, d) = sys.time_t0_map(0.5, &BasePoint::new1(0.4), 1.25).unwrap();
        assert_eq!(y, 1.25);
        assert_eq!(d, 1.0);
    }

    #[test]
    fn frozen_fixed_points_are_equilibria() {
        let sys = cap(0.0);
        for &th in &[0.0, 0.25, 0.6] {
            let theta = BasePoint::new1(th);
            let c = 0.6 + 0.2 * (TWO_PI * th).sin();
            let beta = 0.1;
            let r = (c - beta).sqrt();
            for eq in [1.0 - r, 1.0 + r] {
                let (y, _) = sys.time_t0_map(beta, &theta, eq).unwrap();
                assert!((y - eq).abs() < 1e-10);
            }
            // the upper equilibrium attracts from γ⁺
            let mut x = 2.0;
            for _ in 0..200 {
                x = sys.time_t0_map(beta, &theta, x).unwrap().0;
            }
            assert!((x - (1.0 + r)).abs() < 1e-9);
        }
    }

    #[test]
    fn blowup_is_reported() {
        let sys = cap(0.1);
        let err = sys.integrate(0.0, 0.0, -50.0, 1.0, sys.steps).unwrap_err();
        assert!(matches!(err, Error::Blowup { .. }));
        let fam = as_fibre_family(sys, (0.0, 0.3)).unwrap();
        assert_eq!(fam.eval(0.0, &BasePoint::new1(0.0), -50.0), f64::NEG_INFINITY);
    }

    #[test]
    fn quadratic_cap_is_concave_decreasing() {
        let fam = as_fibre_family(cap(0.1), (0.0, 0.3)).unwrap();
        assert_eq!(fam.orientation(), Orientation::ConcaveDecreasing);
        let t = BasePoint::new1(0.3);
        let y = fam.eval(0.2, &t, 1.3);
        assert_abs_diff_eq!(fam.inverse(0.2, &t, y).unwrap(), 1.3, epsilon = 1e-9);
    }

    #[test]
    fn linear_field_is_rejected() {
        let sys = ScalarFlowSystem::new(
            VectorField::Linear { a: -1.0, b: 0.2, beta_coeff: -1.0 },
            1.0,
            0.1,
            GammaBoundary::default(),
            (0.0, 1.0),
        )
        .unwrap();
        assert!(matches!(as_fibre_family(sys, (0.0, 1.0)), Err(Error::ValidationFailed(_))));
    }

    #[test]
    fn field_monotonicity_on_lower_half() {
        let sys = ScalarFlowSystem::new(
            VectorField::QuadraticCap { c0: 0.6, c1: 0.2 },
            1.0,
            0.1,
            GammaBoundary::new(0.0, 1.0).unwrap(),
            (0.0, 1.0),
        )
        .unwrap();
        assert!(sys.check_field_monotone((0.0, 1.0)).is_empty());
        assert!(!cap(0.1).check_field_monotone((0.0, 1.0)).is_empty());
    }

    #[test]
    fn base_is_rotation_by_rho_t0() {
        let sys = ScalarFlowSystem::new(
            VectorField::Linear { a: -1.0, b: 0.0, beta_coeff: -1.0 },
            2.0,
            0.3,
            GammaBoundary::default(),
            (0.0, 1.0),
        )
        .unwrap();
        assert_eq!(sys.base_system(), BaseSystem::Rotation { rho: 0.6 });
    }
}
