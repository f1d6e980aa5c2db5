//! Parameter families of monotone fibre maps `x ↦ f_{β,θ}(x)`.
//!
//! The engine only talks to fibre maps through the [`FibreMap`] trait, so the
//! closed-form families in [`FibreFamily`] and the flow-induced maps of
//! [`crate::flow`] run through the same code.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::base::{BasePoint, BaseSystem};
use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Returned by [`FibreMap::inverse`] when `y` is outside the range of the
/// fibre map on its extended domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoPreimage;

/// Convexity and parameter orientation of a family on `Γ`.
///
/// `ConvexIncreasing` is the orientation in which the lower bounding graph is
/// attracting and the family moves up with `β`; `ConcaveDecreasing` is its
/// mirror image under `x ↦ −x`, where the upper bounding graph attracts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    ConvexIncreasing,
    ConcaveDecreasing,
    /// No convexity claim; used for test families.
    None,
}

/// The region `Γ_θ = [γ⁻(θ), γ⁺(θ)]`. Only constant boundaries are needed
/// by the supported families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaBoundary {
    pub lower: f64,
    pub upper: f64,
}

impl GammaBoundary {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::Config(format!(
                "Γ boundary needs finite γ⁻ < γ⁺, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    #[inline]
    pub fn at(&self, _theta: &BasePoint) -> (f64, f64) {
        (self.lower, self.upper)
    }
}

impl Default for GammaBoundary {
    fn default() -> Self {
        Self { lower: 0.0, upper: 2.0 }
    }
}

/// A `β`-parametrised family of strictly increasing fibre maps.
pub trait FibreMap: Send + Sync {
    /// `f_{β,θ}(x)`. Defined for every finite `x`, including points outside `Γ_θ`.
    fn eval(&self, beta: f64, theta: &BasePoint, x: f64) -> f64;
    /// `∂ₓ f_{β,θ}(x)`.
    fn deriv_x(&self, beta: f64, theta: &BasePoint, x: f64) -> f64;
    /// `∂²ₓ f_{β,θ}(x)`.
    fn deriv_xx(&self, beta: f64, theta: &BasePoint, x: f64) -> f64;
    /// `∂_β f_{β,θ}(x)`.
    fn deriv_beta(&self, beta: f64, theta: &BasePoint, x: f64) -> f64;
    /// The region `Γ_θ`.
    fn boundary(&self, theta: &BasePoint) -> (f64, f64);
    fn orientation(&self) -> Orientation;

    /// `f_{β,θ}⁻¹(y)`, searched on an extended domain around `Γ_θ`.
    ///
    /// The default is a monotone bisection to machine precision.
    fn inverse(&self, beta: f64, theta: &BasePoint, y: f64) -> Result<f64, NoPreimage> {
        let (lo, hi) = self.boundary(theta);
        let pad = 2.0 * (hi - lo) + 1.0;
        bisect_inverse(|x| self.eval(beta, theta, x), lo - pad, hi + pad, y)
    }
}

/// Solves `g(x) = y` for increasing `g` on `[a, b]` by bisection.
pub fn bisect_inverse<G: Fn(f64) -> f64>(g: G, a: f64, b: f64, y: f64) -> Result<f64, NoPreimage> {
    let (mut a, mut b) = (a, b);
    let (ga, gb) = (g(a), g(b));
    if !(ga <= y && y <= gb) {
        return Err(NoPreimage);
    }
    if ga == y {
        return Ok(a);
    }
    if gb == y {
        return Ok(b);
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == y {
            return Ok(m);
        }
        if gm < y {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// The closed-form families used throughout, plus two orientation-free test
/// families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FibreFamily {
    /// `arctan(αx) − 2β − γ(sin 2πθ + 1)` over a circle base.
    Arctan1d {
        alpha: f64,
        gamma: f64,
        #[serde(default)]
        boundary: GammaBoundary,
    },
    /// `arctan(αx) − 2β − γ(sin 2πθ₁ · sin 2πθ₂ + 1)` over a torus base.
    Arctan2d {
        alpha: f64,
        gamma: f64,
        #[serde(default)]
        boundary: GammaBoundary,
    },
    /// `slope·x + intercept + beta_coeff·β + forcing·sin 2πθ₁`.
    Affine {
        slope: f64,
        intercept: f64,
        beta_coeff: f64,
        forcing: f64,
        boundary: GammaBoundary,
    },
    /// Piecewise-linear interpolation through `(xs[i], ys[i])`, extended
    /// linearly past the end knots, plus `beta_coeff·β`. The same map is used
    /// on every fibre.
    Table {
        xs: Vec<f64>,
        ys: Vec<f64>,
        beta_coeff: f64,
        boundary: GammaBoundary,
    },
}

impl FibreFamily {
    pub fn arctan_1d(alpha: f64, gamma: f64) -> Self {
        FibreFamily::Arctan1d {
            alpha,
            gamma,
            boundary: GammaBoundary::default(),
        }
    }

    pub fn arctan_2d(alpha: f64, gamma: f64) -> Self {
        FibreFamily::Arctan2d {
            alpha,
            gamma,
            boundary: GammaBoundary::default(),
        }
    }

    /// Builds a table family, checking that the knots are strictly
    /// increasing in both coordinates.
    pub fn table(xs: Vec<f64>, ys: Vec<f64>, beta_coeff: f64, boundary: GammaBoundary) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::Config("table needs at least two (x, y) knots of equal count".into()));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&xs) || !increasing(&ys) {
            return Err(Error::Config("table knots must be strictly increasing".into()));
        }
        Ok(FibreFamily::Table {
            xs,
            ys,
            beta_coeff,
            boundary,
        })
    }

    /// The `θ`-dependent part of the arctan offset, `γ(sin 2πθ + 1)` or
    /// `γ(sin 2πθ₁ sin 2πθ₂ + 1)`.
    #[inline]
    pub fn forcing_offset(&self, theta: &BasePoint) -> f64 {
        match self {
            FibreFamily::Arctan1d { gamma, .. } => gamma * ((TWO_PI * theta.t1()).sin() + 1.0),
            FibreFamily::Arctan2d { gamma, .. } => {
                gamma * ((TWO_PI * theta.t1()).sin() * (TWO_PI * theta.t2()).sin() + 1.0)
            }
            FibreFamily::Affine { forcing, .. } => -forcing * (TWO_PI * theta.t1()).sin(),
            FibreFamily::Table { .. } => 0.0,
        }
    }

    fn table_segment(xs: &[f64], x: f64) -> usize {
        match xs.iter().position(|&k| k > x) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => xs.len() - 2,
        }
        .min(xs.len() - 2)
    }

    /// Checks the declared orientation and strict monotonicity on `Γ` by
    /// sampling `count` random `(β, θ, x)` triples with `β ∈ beta_range`.
    pub fn validate(&self, dim: usize, beta_range: (f64, f64), count: usize) -> Result<()> {
        validate_family(self, dim, beta_range, count)
    }
}

impl FibreMap for FibreFamily {
    #[inline]
    fn eval(&self, beta: f64, theta: &BasePoint, x: f64) -> f64 {
        match self {
            FibreFamily::Arctan1d { alpha, .. } | FibreFamily::Arctan2d { alpha, .. } => {
                (alpha * x).atan() - 2.0 * beta - self.forcing_offset(theta)
            }
            FibreFamily::Affine {
                slope,
                intercept,
                beta_coeff,
                ..
            } => slope * x + intercept + beta_coeff * beta - self.forcing_offset(theta),
            FibreFamily::Table { xs, ys, beta_coeff, .. } => {
                let i = Self::table_segment(xs, x);
                let s = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
                ys[i] + s * (x - xs[i]) + beta_coeff * beta
            }
        }
    }

    #[inline]
    fn deriv_x(&self, _beta: f64, _theta: &BasePoint, x: f64) -> f64 {
        match self {
            FibreFamily::Arctan1d { alpha, .. } | FibreFamily::Arctan2d { alpha, .. } => {
                let ax = alpha * x;
                alpha / (1.0 + ax * ax)
            }
            FibreFamily::Affine { slope, .. } => *slope,
            FibreFamily::Table { xs, ys, .. } => {
                let i = Self::table_segment(xs, x);
                (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
            }
        }
    }

    fn deriv_xx(&self, _beta: f64, _theta: &BasePoint, x: f64) -> f64 {
        match self {
            FibreFamily::Arctan1d { alpha, .. } | FibreFamily::Arctan2d { alpha, .. } => {
                let ax = alpha * x;
                let d = 1.0 + ax * ax;
                -2.0 * alpha * alpha * alpha * x / (d * d)
            }
            FibreFamily::Affine { .. } | FibreFamily::Table { .. } => 0.0,
        }
    }

    fn deriv_beta(&self, _beta: f64, _theta: &BasePoint, _x: f64) -> f64 {
        match self {
            FibreFamily::Arctan1d { .. } | FibreFamily::Arctan2d { .. } => -2.0,
            FibreFamily::Affine { beta_coeff, .. } | FibreFamily::Table { beta_coeff, .. } => *beta_coeff,
        }
    }

    #[inline]
    fn boundary(&self, theta: &BasePoint) -> (f64, f64) {
        match self {
            FibreFamily::Arctan1d { boundary, .. }
            | FibreFamily::Arctan2d { boundary, .. }
            | FibreFamily::Affine { boundary, .. }
            | FibreFamily::Table { boundary, .. } => boundary.at(theta),
        }
    }

    fn orientation(&self) -> Orientation {
        match self {
            FibreFamily::Arctan1d { .. } | FibreFamily::Arctan2d { .. } => Orientation::ConcaveDecreasing,
            FibreFamily::Affine { .. } | FibreFamily::Table { .. } => Orientation::None,
        }
    }

    #[inline]
    fn inverse(&self, beta: f64, theta: &BasePoint, y: f64) -> Result<f64, NoPreimage> {
        match self {
            FibreFamily::Arctan1d { alpha, .. } | FibreFamily::Arctan2d { alpha, .. } => {
                let arg = y + 2.0 * beta + self.forcing_offset(theta);
                if arg.abs() >= FRAC_PI_2 {
                    return Err(NoPreimage);
                }
                Ok(arg.tan() / alpha)
            }
            FibreFamily::Affine { slope, .. } => {
                Ok((y - self.eval(beta, theta, 0.0)) / slope)
            }
            FibreFamily::Table { boundary, .. } => {
                let pad = 2.0 * (boundary.upper - boundary.lower) + 1.0;
                bisect_inverse(
                    |x| self.eval(beta, theta, x),
                    boundary.lower - pad,
                    boundary.upper + pad,
                    y,
                )
            }
        }
    }
}

/// Sampled check of strict monotonicity and, where declared, the
/// convexity and `β`-derivative signs on `Γ`.
pub fn validate_family<F: FibreMap + ?Sized>(
    fam: &F,
    dim: usize,
    beta_range: (f64, f64),
    count: usize,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut problems = Vec::new();
    let orientation = fam.orientation();
    for _ in 0..count {
        let theta = if dim == 1 {
            BasePoint::new1(rng.gen())
        } else {
            BasePoint::new2(rng.gen(), rng.gen())
        };
        let beta = rng.gen_range(beta_range.0..=beta_range.1);
        let (lo, hi) = fam.boundary(&theta);
        // (lo, hi]: the arctan families are only strictly concave off x = 0
        let x = hi - rng.gen::<f64>() * (hi - lo);
        let d = fam.deriv_x(beta, &theta, x);
        if !(d > 0.0) {
            problems.push(format!("∂ₓf = {d} ≤ 0 at β={beta}, θ={:?}, x={x}", theta.coords()));
        }
        let (dxx, db) = (fam.deriv_xx(beta, &theta, x), fam.deriv_beta(beta, &theta, x));
        match orientation {
            Orientation::ConcaveDecreasing => {
                if !(dxx < 0.0) {
                    problems.push(format!("∂²ₓf = {dxx} not < 0 at x={x}"));
                }
                if !(db < 0.0) {
                    problems.push(format!("∂_βf = {db} not < 0 at x={x}"));
                }
            }
            Orientation::ConvexIncreasing => {
                if !(dxx > 0.0) {
                    problems.push(format!("∂²ₓf = {dxx} not > 0 at x={x}"));
                }
                if !(db > 0.0) {
                    problems.push(format!("∂_βf = {db} not > 0 at x={x}"));
                }
            }
            Orientation::None => {}
        }
        if problems.len() >= 5 {
            break;
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::ValidationFailed(problems))
    }
}

/// Outcome of checking that `Γ` traps the monotone graph-transform
/// sequences, for both possible sign conventions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCheck {
    /// `f_{β,θ}(γ⁺(θ)) ≤ γ⁺(ωθ)` at every sample.
    pub upper_maps_down: bool,
    /// `f_{β,θ}(γ⁻(θ)) ≤ γ⁻(ωθ)` at every sample; equivalently the inverse
    /// transform pushes `γ⁻` up.
    pub lower_maps_down: bool,
    /// `f_{β,θ}(γ⁺(θ)) ≥ γ⁺(ωθ)` at every sample.
    pub upper_maps_up: bool,
    /// `f_{β,θ}(γ⁻(θ)) ≥ γ⁻(ωθ)` at every sample.
    pub lower_maps_up: bool,
}

impl BoundaryCheck {
    /// Whether the check matches what `orientation` needs: both monotone
    /// sequences move inward from `γ±`.
    pub fn compatible_with(&self, orientation: Orientation) -> bool {
        match orientation {
            // forward transform pushes γ⁺ down, inverse transform pushes γ⁻ up
            Orientation::ConcaveDecreasing | Orientation::None => self.upper_maps_down && self.lower_maps_down,
            // forward transform pushes γ⁻ up, inverse transform pushes γ⁺ down
            Orientation::ConvexIncreasing => self.lower_maps_up && self.upper_maps_up,
        }
    }
}

/// Evaluates the boundary inequalities at `beta` over the given samples.
pub fn check_boundaries<F: FibreMap + ?Sized>(
    system: &BaseSystem,
    fam: &F,
    beta: f64,
    samples: &[BasePoint],
) -> BoundaryCheck {
    let mut c = BoundaryCheck {
        upper_maps_down: true,
        lower_maps_down: true,
        upper_maps_up: true,
        lower_maps_up: true,
    };
    for theta in samples {
        let (lo, hi) = fam.boundary(theta);
        let next = system.forward(theta);
        let (lo_n, hi_n) = fam.boundary(&next);
        let fu = fam.eval(beta, theta, hi);
        let fl = fam.eval(beta, theta, lo);
        c.upper_maps_down &= fu <= hi_n;
        c.upper_maps_up &= fu >= hi_n;
        c.lower_maps_down &= fl <= lo_n;
        c.lower_maps_up &= fl >= lo_n;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_points(n: usize, dim: usize, seed: u64) -> Vec<(f64, BasePoint, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let theta = if dim == 1 {
                    BasePoint::new1(rng.gen())
                } else {
                    BasePoint::new2(rng.gen(), rng.gen())
                };
                (rng.gen::<f64>(), theta, rng.gen_range(0.0..2.0))
            })
            .collect()
    }

    #[test]
    fn arctan_eval_examples() {
        let f = FibreFamily::arctan_1d(100.0, 0.5);
        assert_abs_diff_eq!(f.eval(0.0, &BasePoint::new1(0.75), 0.0), 0.0, epsilon = 1e-15);
        let v = f.eval(1.0, &BasePoint::new1(0.0), 2.0);
        assert_abs_diff_eq!(v, 200f64.atan() - 2.5, epsilon = 1e-14);
        assert!(v < 0.0);
        let g = FibreFamily::arctan_2d(100.0, 0.5);
        let p = BasePoint::new2(0.25, 0.25);
        for &(beta, x) in &[(0.0, 0.3), (0.2, 1.0), (0.7, 0.01)] {
            assert_abs_diff_eq!(g.eval(beta, &p, x), (100.0 * x).atan() - 2.0 * beta - 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn arctan_derivatives() {
        let f = FibreFamily::arctan_1d(100.0, 0.5);
        let t = BasePoint::new1(0.3);
        assert_eq!(f.deriv_x(0.1, &t, 0.0), 100.0);
        assert_eq!(f.deriv_beta(0.1, &t, 0.7), -2.0);
        let h = 1e-6;
        for (beta, theta, x) in random_points(1000, 1, 1) {
            let fd = (f.eval(beta, &theta, x + h) - f.eval(beta, &theta, x - h)) / (2.0 * h);
            let d = f.deriv_x(beta, &theta, x);
            assert!((fd - d).abs() <= 1e-5 * d.abs().max(1e-8), "x={x}: {fd} vs {d}");
        }
    }

    #[test]
    fn second_and_beta_derivatives_match_differences() {
        let f = FibreFamily::arctan_2d(20.0, 0.5);
        for (beta, theta, x) in random_points(500, 2, 2) {
            let h = 1e-4;
            let fd2 = (f.deriv_x(beta, &theta, x + h) - f.deriv_x(beta, &theta, x - h)) / (2.0 * h);
            let d2 = f.deriv_xx(beta, &theta, x);
            if d2.abs() > 1e-8 {
                assert!((fd2 - d2).abs() <= 1e-5 * d2.abs().max(1.0), "{fd2} vs {d2}");
            }
            let fdb = (f.eval(beta + h, &theta, x) - f.eval(beta - h, &theta, x)) / (2.0 * h);
            assert!((fdb + 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn inverse_round_trip_and_range_guard() {
        let f = FibreFamily::arctan_1d(100.0, 0.5);
        for (beta, theta, x) in random_points(1000, 1, 3) {
            let y = f.eval(beta, &theta, x);
            let back = f.inverse(beta, &theta, y).unwrap();
            assert!((back - x).abs() < 1e-10, "x={x} back={back}");
        }
        assert_eq!(f.inverse(0.0, &BasePoint::new1(0.75), 0.0), Ok(0.0));
        let theta = BasePoint::new1(0.1);
        let offset = 2.0 * 0.3 + f.forcing_offset(&theta);
        assert_eq!(f.inverse(0.3, &theta, -offset + 1.6), Err(NoPreimage));
    }

    #[test]
    fn table_family_interpolates_and_inverts() {
        let f = FibreFamily::table(
            vec![0.0, 1.0, 2.0],
            vec![0.1, 0.9, 1.2],
            -1.0,
            GammaBoundary::new(0.0, 2.0).unwrap(),
        )
        .unwrap();
        let t = BasePoint::new1(0.0);
        assert_abs_diff_eq!(f.eval(0.0, &t, 0.5), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f.eval(0.0, &t, 3.0), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f.eval(0.0, &t, -1.0), -0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(f.deriv_x(0.0, &t, 1.5), 0.3, epsilon = 1e-15);
        let x = f.inverse(0.2, &t, 0.8).unwrap();
        assert_abs_diff_eq!(f.eval(0.2, &t, x), 0.8, epsilon = 1e-12);
        assert!(FibreFamily::table(vec![0.0, 1.0], vec![1.0, 0.0], 0.0, GammaBoundary::default()).is_err());
    }

    #[test]
    fn affine_inverse() {
        let f = FibreFamily::Affine {
            slope: 0.5,
            intercept: 0.3,
            beta_coeff: -1.0,
            forcing: 0.2,
            boundary: GammaBoundary::default(),
        };
        let t = BasePoint::new1(0.4);
        let y = f.eval(0.1, &t, 0.7);
        assert_abs_diff_eq!(f.inverse(0.1, &t, y).unwrap(), 0.7, epsilon = 1e-14);
    }

    #[test]
    fn monotone_concave_and_decreasing_in_beta() {
        let f = FibreFamily::arctan_1d(100.0, 0.5);
        f.validate(1, (0.0, 1.0), 1000).unwrap();
        FibreFamily::arctan_2d(100.0, 0.5).validate(2, (0.0, 1.0), 1000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let beta: f64 = rng.gen();
            let theta = BasePoint::new1(rng.gen());
            let a: f64 = rng.gen_range(0.0..2.0);
            let b: f64 = rng.gen_range(0.0..2.0);
            let (x1, x2) = (a.min(b), a.max(b));
            if x1 < x2 {
                assert!(f.eval(beta, &theta, x1) < f.eval(beta, &theta, x2));
            }
            if x1 > 0.0 {
                assert!(f.deriv_xx(beta, &theta, x1) < 0.0);
            }
            assert!(f.eval(beta + 0.01, &theta, a) < f.eval(beta, &theta, a));
        }
    }

    #[test]
    fn wrong_orientation_fails_validation() {
        let f = FibreFamily::Affine {
            slope: -1.0,
            intercept: 0.0,
            beta_coeff: 1.0,
            forcing: 0.0,
            boundary: GammaBoundary::default(),
        };
        assert!(matches!(f.validate(1, (0.0, 1.0), 100), Err(Error::ValidationFailed(_))));
    }

    #[test]
    fn example_boundaries_trap_in_the_concave_sense() {
        let sys = BaseSystem::golden_rotation();
        let f = FibreFamily::arctan_1d(100.0, 0.5);
        let samples: Vec<_> = (0..1000).map(|i| BasePoint::new1(i as f64 / 1000.0)).collect();
        for &beta in &[0.0, 0.3, 1.0] {
            let c = check_boundaries(&sys, &f, beta, &samples);
            assert!(c.compatible_with(Orientation::ConcaveDecreasing), "{beta}: {c:?}");
            assert!(!c.lower_maps_up || beta == 0.0);
        }
    }
}
