//! Invertible base transformations on the circle and the 2-torus.
//!
//! Every base point is stored with coordinates reduced into `[0, 1)`. The
//! transformations are pure functions of immutable data, so a
//! [`BaseSystem`] can be shared freely between worker threads.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Distance below which two base points are treated as the same point when
/// matching against a stored periodic orbit.
pub const POINT_MATCH_TOL: f64 = 1e-9;

/// The golden mean `(√5 − 1) / 2`.
pub fn golden_mean() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

/// Reduces `x` modulo 1 into `[0, 1)`. An exact `1.0` maps to `0.0`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed distance on the circle, in `[-0.5, 0.5)`.
#[inline]
pub fn circle_diff(a: f64, b: f64) -> f64 {
    wrap(a - b + 0.5) - 0.5
}

/// A point of the base space: one or two torus coordinates in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasePoint {
    coords: [f64; 2],
    dim: u8,
}

impl BasePoint {
    pub fn new1(t: f64) -> Self {
        Self {
            coords: [wrap(t), 0.0],
            dim: 1,
        }
    }

    pub fn new2(t1: f64, t2: f64) -> Self {
        Self {
            coords: [wrap(t1), wrap(t2)],
            dim: 2,
        }
    }

    /// Builds a point from a slice of length 1 or 2.
    pub fn from_slice(c: &[f64]) -> Result<Self> {
        match c {
            [t] => Ok(Self::new1(*t)),
            [t1, t2] => Ok(Self::new2(*t1, *t2)),
            _ => Err(Error::Config(format!(
                "base point must have 1 or 2 coordinates, got {}",
                c.len()
            ))),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    /// First coordinate.
    #[inline]
    pub fn t1(&self) -> f64 {
        self.coords[0]
    }

    /// Second coordinate; zero for one-dimensional points.
    #[inline]
    pub fn t2(&self) -> f64 {
        self.coords[1]
    }

    /// Max-norm distance on the torus.
    pub fn torus_dist(&self, other: &BasePoint) -> f64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| circle_diff(*a, *b).abs())
            .fold(0.0, f64::max)
    }
}

/// Direction of an orbit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

/// Invertible base transformation `ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseSystem {
    /// `θ ↦ θ` in dimension 1 or 2.
    Identity { dim: usize },
    /// Circle rotation `θ ↦ θ + ρ mod 1`.
    Rotation { rho: f64 },
    /// The area-preserving torus map
    /// `(θ₁, θ₂) ↦ (θ₁ + ½ sin 2π(θ₂ + ½ sin 2πθ₁), θ₂ + ½ sin 2πθ₁)`.
    TorusMap,
    /// A finite cycle; `forward` moves each stored point to its successor.
    PeriodicOrbit { points: Vec<BasePoint> },
}

impl BaseSystem {
    /// Golden-mean circle rotation.
    pub fn golden_rotation() -> Self {
        BaseSystem::Rotation { rho: golden_mean() }
    }

    /// Builds a periodic-orbit base, checking that all points share a
    /// dimension and that the list is non-empty.
    pub fn periodic(points: Vec<BasePoint>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Config("periodic orbit needs at least one point".into()))?;
        if points.iter().any(|p| p.dim() != first.dim()) {
            return Err(Error::Config("periodic orbit points differ in dimension".into()));
        }
        Ok(BaseSystem::PeriodicOrbit { points })
    }

    pub fn dim(&self) -> usize {
        match self {
            BaseSystem::Identity { dim } => *dim,
            BaseSystem::Rotation { .. } => 1,
            BaseSystem::TorusMap => 2,
            BaseSystem::PeriodicOrbit { points } => points[0].dim(),
        }
    }

    pub fn check_point(&self, theta: &BasePoint) -> Result<()> {
        if theta.dim() != self.dim() {
            return Err(Error::Config(format!(
                "base point has dimension {}, system expects {}",
                theta.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `ω(θ)`.
    #[inline]
    pub fn forward(&self, theta: &BasePoint) -> BasePoint {
        match self {
            BaseSystem::Identity { .. } => *theta,
            BaseSystem::Rotation { rho } => BasePoint::new1(theta.t1() + rho),
            BaseSystem::TorusMap => {
                let (t1, t2) = (theta.t1(), theta.t2());
                let t2n = t2 + 0.5 * (TWO_PI * t1).sin();
                let t1n = t1 + 0.5 * (TWO_PI * t2n).sin();
                BasePoint::new2(t1n, t2n)
            }
            BaseSystem::PeriodicOrbit { points } => {
                let i = nearest_index(points, theta);
                points[(i + 1) % points.len()]
            }
        }
    }

    /// `ω⁻¹(θ)`. The torus map is inverted in closed form by undoing the
    /// two shears in reverse order.
    #[inline]
    pub fn backward(&self, theta: &BasePoint) -> BasePoint {
        match self {
            BaseSystem::Identity { .. } => *theta,
            BaseSystem::Rotation { rho } => BasePoint::new1(theta.t1() - rho),
            BaseSystem::TorusMap => {
                let (t1n, t2n) = (theta.t1(), theta.t2());
                let t1 = t1n - 0.5 * (TWO_PI * t2n).sin();
                let t2 = t2n - 0.5 * (TWO_PI * t1).sin();
                BasePoint::new2(t1, t2)
            }
            BaseSystem::PeriodicOrbit { points } => {
                let n = points.len();
                let i = nearest_index(points, theta);
                points[(i + n - 1) % n]
            }
        }
    }

    #[inline]
    pub fn step(&self, theta: &BasePoint, dir: Direction) -> BasePoint {
        match dir {
            Direction::Forward => self.forward(theta),
            Direction::Backward => self.backward(theta),
        }
    }

    /// `n + 1` points: `θ, ω^{±1}(θ), …, ω^{±n}(θ)`.
    pub fn orbit(&self, theta: &BasePoint, n: usize, dir: Direction) -> Vec<BasePoint> {
        let mut out = Vec::with_capacity(n + 1);
        self.orbit_into(theta, n, dir, &mut out);
        out
    }

    /// As [`orbit`](Self::orbit), reusing `out`.
    pub fn orbit_into(&self, theta: &BasePoint, n: usize, dir: Direction, out: &mut Vec<BasePoint>) {
        out.clear();
        out.reserve(n + 1);
        let mut t = *theta;
        out.push(t);
        for _ in 0..n {
            t = self.step(&t, dir);
            out.push(t);
        }
    }

    /// Checks that `set` is mapped into itself by `forward`, up to
    /// [`POINT_MATCH_TOL`] in the torus metric.
    pub fn is_invariant_set(&self, set: &[BasePoint]) -> bool {
        set.iter().all(|p| {
            let img = self.forward(p);
            set.iter().any(|q| img.torus_dist(q) < POINT_MATCH_TOL)
        })
    }
}

fn nearest_index(points: &[BasePoint], theta: &BasePoint) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = p.torus_dist(theta);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// The period-2 orbit `{(¼,¼), (¾,¾)}` of [`BaseSystem::TorusMap`].
pub fn torus_m1() -> Vec<BasePoint> {
    vec![BasePoint::new2(0.25, 0.25), BasePoint::new2(0.75, 0.75)]
}

/// The period-2 orbit `{(¼,¾), (¾,¼)}` of [`BaseSystem::TorusMap`].
pub fn torus_m2() -> Vec<BasePoint> {
    vec![BasePoint::new2(0.25, 0.75), BasePoint::new2(0.75, 0.25)]
}
