//! Independent ground truth for the bifurcation engine.
//!
//! Everything here works fibre by fibre on one-dimensional concave families
//! and never touches the graph engine.

use serde::{Deserialize, Serialize};

use crate::base::BasePoint;
use crate::error::{Error, Result};
use crate::fibre::{FibreMap, Orientation};

/// Saddle-node parameter of `x ↦ arctan(αx) − 2β − c`:
/// `½ arctan(√(α−1)) − √(α−1)/(2α) − c/2`.
///
/// The tangency point is `x* = √(α−1)/α`, where `α / (1 + α²x*²) = 1`.
pub fn closed_form_betac_arctan(alpha: f64, offset_const: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::Domain(format!("closed form needs α > 1, got {alpha}")));
    }
    let s = (alpha - 1.0).sqrt();
    Ok(0.5 * s.atan() - s / (2.0 * alpha) - 0.5 * offset_const)
}

/// Tangency point `√(α−1)/α` of the arctan family.
pub fn arctan_tangency_x(alpha: f64) -> f64 {
    (alpha - 1.0).sqrt() / alpha
}

/// A one-dimensional family `g_β(x)`, strictly increasing and strictly
/// concave in `x` on [`domain`](Family1D::domain) and strictly decreasing
/// in `β`. `β` must enter so that `∂ₓg` does not depend on it.
pub trait Family1D {
    fn value(&self, beta: f64, x: f64) -> f64;
    fn dx(&self, beta: f64, x: f64) -> f64;
    fn dxx(&self, beta: f64, x: f64) -> f64;
    fn dbeta(&self, beta: f64, x: f64) -> f64;
    fn domain(&self) -> (f64, f64);
}

/// `arctan(αx) − 2β − offset` on `[0, 2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArctanOffset {
    pub alpha: f64,
    pub offset: f64,
}

impl Family1D for ArctanOffset {
    fn value(&self, beta: f64, x: f64) -> f64 {
        (self.alpha * x).atan() - 2.0 * beta - self.offset
    }
    fn dx(&self, _beta: f64, x: f64) -> f64 {
        let ax = self.alpha * x;
        self.alpha / (1.0 + ax * ax)
    }
    fn dxx(&self, _beta: f64, x: f64) -> f64 {
        let ax = self.alpha * x;
        let d = 1.0 + ax * ax;
        -2.0 * self.alpha.powi(3) * x / (d * d)
    }
    fn dbeta(&self, _beta: f64, _x: f64) -> f64 {
        -2.0
    }
    fn domain(&self) -> (f64, f64) {
        (0.0, 2.0)
    }
}

/// `−(x − 1)² + c − β` on `[0, 1]`; tangency at `x* = ½`, `β* = c − ¾`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticCap {
    pub c: f64,
}

impl Family1D for QuadraticCap {
    fn value(&self, beta: f64, x: f64) -> f64 {
        -(x - 1.0) * (x - 1.0) + self.c - beta
    }
    fn dx(&self, _beta: f64, x: f64) -> f64 {
        -2.0 * (x - 1.0)
    }
    fn dxx(&self, _beta: f64, _x: f64) -> f64 {
        -2.0
    }
    fn dbeta(&self, _beta: f64, _x: f64) -> f64 {
        -1.0
    }
    fn domain(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

/// One fibre of a forced family with `θ` held fixed.
pub struct FrozenFibre<'a, F: FibreMap + ?Sized> {
    pub fam: &'a F,
    pub theta: BasePoint,
}

impl<F: FibreMap + ?Sized> Family1D for FrozenFibre<'_, F> {
    fn value(&self, beta: f64, x: f64) -> f64 {
        self.fam.eval(beta, &self.theta, x)
    }
    fn dx(&self, beta: f64, x: f64) -> f64 {
        self.fam.deriv_x(beta, &self.theta, x)
    }
    fn dxx(&self, beta: f64, x: f64) -> f64 {
        self.fam.deriv_xx(beta, &self.theta, x)
    }
    fn dbeta(&self, beta: f64, x: f64) -> f64 {
        self.fam.deriv_beta(beta, &self.theta, x)
    }
    fn domain(&self) -> (f64, f64) {
        self.fam.boundary(&self.theta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleNode1D {
    pub beta_star: f64,
    pub x_star: f64,
    /// `|g(x*) − x*|`.
    pub residual_fixed: f64,
    /// `|g'(x*) − 1|`.
    pub residual_tangent: f64,
}

/// Safeguarded Newton for a decreasing function `h` on `[a, b]` with
/// `h(a) > 0 > h(b)`: Newton steps that leave the bracket are replaced by
/// bisection.
fn decreasing_root<H: Fn(f64) -> (f64, f64)>(h: H, mut a: f64, mut b: f64) -> f64 {
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let (v, dv) = h(x);
        if v == 0.0 {
            return x;
        }
        if v > 0.0 {
            a = x;
        } else {
            b = x;
        }
        let newton = x - v / dv;
        let next = if dv < 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() <= 1e-16 * x.abs().max(1.0) || b - a <= 1e-16 * a.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

/// Solves the tangency system `g(x) = x`, `g'(x) = 1` for `(β*, x*)`.
///
/// `x*` is the root of `g' − 1`, which is strictly decreasing on the domain
/// by concavity. `β*` is the root of `h(β) = g_β(x*) − x*`, decreasing in `β`
/// with `h'(β) = ∂_β g(β, x*)`. Both roots use bracketed Newton.
pub fn solve_saddle_node_1d<G: Family1D + ?Sized>(g: &G, beta_range: (f64, f64)) -> Result<SaddleNode1D> {
    let (a, b) = g.domain();
    let (lo_b, hi_b) = beta_range;
    let tangent = |beta: f64| -> Result<f64> {
        let (da, db) = (g.dx(beta, a) - 1.0, g.dx(beta, b) - 1.0);
        if !(da > 0.0 && db < 0.0) {
            return Err(Error::NoBracket(format!(
                "g' − 1 does not change sign on [{a}, {b}] (β = {beta}: {da}, {db})"
            )));
        }
        Ok(decreasing_root(|x| (g.dx(beta, x) - 1.0, g.dxx(beta, x)), a, b))
    };
    let h = |beta: f64| -> Result<(f64, f64)> {
        let x = tangent(beta)?;
        Ok((g.value(beta, x) - x, g.dbeta(beta, x)))
    };
    let (h_lo, _) = h(lo_b)?;
    let (h_hi, _) = h(hi_b)?;
    if !(h_lo > 0.0 && h_hi < 0.0) {
        return Err(Error::NoBracket(format!(
            "need two fixed points at β = {lo_b} and none at β = {hi_b}; max(g − x) = {h_lo}, {h_hi}"
        )));
    }
    let beta_star = decreasing_root(|beta| h(beta).unwrap_or((f64::NAN, f64::NAN)), lo_b, hi_b);
    let x_star = tangent(beta_star)?;
    Ok(SaddleNode1D {
        beta_star,
        x_star,
        residual_fixed: (g.value(beta_star, x_star) - x_star).abs(),
        residual_tangent: (g.dx(beta_star, x_star) - 1.0).abs(),
    })
}

/// Per-fibre extremes of the saddle-node parameter over an identity base.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityBaseBetas {
    pub beta_c: f64,
    pub argmin: BasePoint,
    pub beta_hat: f64,
    pub argmax: BasePoint,
    pub per_sample: Vec<f64>,
}

/// With `ω = id` every fibre is an autonomous one-dimensional family, so
/// the first bifurcation over the samples happens at the smallest per-fibre
/// `β*` and the last at the largest.
pub fn identity_base_betac<F: FibreMap + ?Sized>(
    fam: &F,
    samples: &[BasePoint],
    beta_range: (f64, f64),
) -> Result<IdentityBaseBetas> {
    if fam.orientation() != Orientation::ConcaveDecreasing {
        return Err(Error::PreconditionFailed(
            "the per-fibre oracle needs a concave family decreasing in β".into(),
        ));
    }
    if samples.is_empty() {
        return Err(Error::Config("at least one θ sample is required".into()));
    }
    let per_sample = samples
        .iter()
        .map(|t| solve_saddle_node_1d(&FrozenFibre { fam, theta: *t }, beta_range).map(|s| s.beta_star))
        .collect::<Result<Vec<_>>>()?;
    let (mut imin, mut imax) = (0, 0);
    for (i, b) in per_sample.iter().enumerate() {
        if *b < per_sample[imin] {
            imin = i;
        }
        if *b > per_sample[imax] {
            imax = i;
        }
    }
    Ok(IdentityBaseBetas {
        beta_c: per_sample[imin],
        argmin: samples[imin],
        beta_hat: per_sample[imax],
        argmax: samples[imax],
        per_sample,
    })
}
