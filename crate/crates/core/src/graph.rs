//! Bounding invariant graphs by exact per-point orbit pullback.
//!
//! For a family with attracting upper graph (the concave orientation) the
//! upper bounding graph at `θ` is the limit of
//! `f^n_{β, ω^{-n}θ}(γ⁺(ω^{-n}θ))`, obtained by running the fibre maps
//! forward along the backward base orbit of `θ`. The lower bounding graph is
//! the limit of `n` fibre inverses applied along the forward base orbit,
//! starting from `γ⁻(ω^n θ)`. In the convex orientation the roles of the two
//! boundaries swap. No interpolation on a `θ` grid is involved anywhere, so
//! each sample is independent of every other sample.

use std::cell::RefCell;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{BasePoint, BaseSystem, Direction};
use crate::error::{Error, Result};
use crate::fibre::{FibreMap, Orientation};

/// Which of the two bounding graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Lower,
    Upper,
}

impl Which {
    /// The bounding graph obtained by forward graph transforms, which is the
    /// attracting one when two graphs exist.
    pub fn attracting(orientation: Orientation) -> Which {
        match orientation {
            Orientation::ConvexIncreasing => Which::Lower,
            Orientation::ConcaveDecreasing | Orientation::None => Which::Upper,
        }
    }

    pub fn other(self) -> Which {
        match self {
            Which::Lower => Which::Upper,
            Which::Upper => Which::Lower,
        }
    }
}

/// A single pulled-back graph value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphPoint {
    Value(f64),
    Escaped,
}

impl GraphPoint {
    pub fn value(self) -> Option<f64> {
        match self {
            GraphPoint::Value(v) => Some(v),
            GraphPoint::Escaped => None,
        }
    }

    pub fn is_escaped(self) -> bool {
        matches!(self, GraphPoint::Escaped)
    }
}

/// Numerical settings shared by all engine operations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Intermediate iterates further than this outside `Γ_θ` end the pullback.
    pub escape_margin: f64,
    /// Final values are accepted within this slack around `Γ_θ`.
    pub eps_num: f64,
    pub schedule: DepthSchedule,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            escape_margin: 0.5,
            eps_num: 1e-9,
            schedule: DepthSchedule::default(),
        }
    }
}

/// Depth doubling: start at `start`, double until successive depths agree
/// within `tol` or the next depth would exceed `max_depth`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthSchedule {
    pub start: usize,
    pub max_depth: usize,
    pub tol: f64,
}

impl Default for DepthSchedule {
    fn default() -> Self {
        Self {
            start: 64,
            max_depth: 1_000_000,
            tol: 1e-10,
        }
    }
}

/// A sampled bounding graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphField {
    pub samples: Vec<BasePoint>,
    pub values: Vec<GraphPoint>,
    /// Pullback depth; for adaptive fields the largest depth used.
    pub depth: usize,
    pub which: Which,
    pub beta: f64,
}

impl GraphField {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn escaped_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_escaped()).count()
    }

    /// Writes `theta1[,theta2],value,escaped` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = self.samples.first().map_or(1, |p| p.dim());
        writeln!(w, "{},value,escaped", theta_header(dim))?;
        for (p, v) in self.samples.iter().zip(&self.values) {
            match v {
                GraphPoint::Value(x) => writeln!(w, "{},{},0", theta_cells(p), fmt17(*x))?,
                GraphPoint::Escaped => writeln!(w, "{},,1", theta_cells(p))?,
            }
        }
        Ok(())
    }
}

/// Per-sample fibre section `K(β)_θ` of the set of `Γ`-bounded orbits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Interval { lo: f64, hi: f64 },
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalField {
    pub samples: Vec<BasePoint>,
    pub sections: Vec<Section>,
    pub depth: usize,
    pub beta: f64,
}

impl IntervalField {
    /// Fraction of samples whose section is non-empty, i.e. `|B(β)| / samples`.
    pub fn fraction_bounded(&self) -> f64 {
        if self.sections.is_empty() {
            return 0.0;
        }
        let n = self.sections.iter().filter(|s| matches!(s, Section::Interval { .. })).count();
        n as f64 / self.sections.len() as f64
    }

    /// The base projection `B(β)` at sample resolution.
    pub fn bounded_samples(&self) -> Vec<BasePoint> {
        self.samples
            .iter()
            .zip(&self.sections)
            .filter(|(_, s)| matches!(s, Section::Interval { .. }))
            .map(|(p, _)| *p)
            .collect()
    }

    /// Writes `theta1[,theta2],lo,hi,empty` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = self.samples.first().map_or(1, |p| p.dim());
        writeln!(w, "{},lo,hi,empty", theta_header(dim))?;
        for (p, s) in self.samples.iter().zip(&self.sections) {
            match s {
                Section::Interval { lo, hi } => {
                    writeln!(w, "{},{},{},0", theta_cells(p), fmt17(*lo), fmt17(*hi))?
                }
                Section::Empty => writeln!(w, "{},,,1", theta_cells(p))?,
            }
        }
        Ok(())
    }
}

/// Verdict of the pinching diagnostic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PinchClass {
    UniformlySeparated { delta: f64 },
    WeaklyPinched,
    Collapsed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinchThresholds {
    pub tol_pinch: f64,
    pub tol_collapse: f64,
}

impl Default for PinchThresholds {
    fn default() -> Self {
        Self {
            tol_pinch: 1e-3,
            tol_collapse: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinchingReport {
    pub min_gap: f64,
    pub argmin: BasePoint,
    pub median_gap: f64,
    pub classification: PinchClass,
    pub thresholds: PinchThresholds,
    pub n_samples: usize,
    /// Samples excluded because both graphs escaped there.
    pub n_escaped: usize,
    pub depth: usize,
}

/// Compares a lower and an upper field sampled on the same points.
pub fn pinching_report(lower: &GraphField, upper: &GraphField, thresholds: PinchThresholds) -> Result<PinchingReport> {
    let gaps = paired_gaps(lower, upper)?;
    let mut best: Option<(f64, BasePoint)> = None;
    for (g, p) in gaps.iter().zip(&lower.samples) {
        if let Some(g) = g {
            if best.is_none_or(|(b, _)| *g < b) {
                best = Some((*g, *p));
            }
        }
    }
    let (min_gap, argmin) =
        best.ok_or_else(|| Error::PreconditionFailed("every sample escaped; no gap to report".into()))?;
    let mut sorted: Vec<f64> = gaps.iter().flatten().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let median_gap = median_sorted(&sorted);
    let classification = if min_gap < thresholds.tol_collapse {
        PinchClass::Collapsed
    } else if min_gap < thresholds.tol_pinch {
        PinchClass::WeaklyPinched
    } else {
        PinchClass::UniformlySeparated { delta: min_gap }
    };
    Ok(PinchingReport {
        min_gap,
        argmin,
        median_gap,
        classification,
        thresholds,
        n_samples: lower.len(),
        n_escaped: gaps.iter().filter(|g| g.is_none()).count(),
        depth: lower.depth.max(upper.depth),
    })
}

/// Empirical fraction of samples with gap below each `δ`; the sampled
/// stand-in for measurable pinching.
pub fn measurable_pinching(lower: &GraphField, upper: &GraphField, deltas: &[f64]) -> Result<Vec<(f64, f64)>> {
    let gaps: Vec<f64> = paired_gaps(lower, upper)?.into_iter().flatten().collect();
    let n = gaps.len().max(1) as f64;
    Ok(deltas
        .iter()
        .map(|&d| (d, gaps.iter().filter(|&&g| g < d).count() as f64 / n))
        .collect())
}

fn paired_gaps(lower: &GraphField, upper: &GraphField) -> Result<Vec<Option<f64>>> {
    if lower.samples != upper.samples {
        return Err(Error::MismatchedFields("sample sets differ".into()));
    }
    if lower.beta != upper.beta {
        return Err(Error::MismatchedFields(format!("β differs: {} vs {}", lower.beta, upper.beta)));
    }
    lower
        .values
        .iter()
        .zip(&upper.values)
        .enumerate()
        .map(|(i, (l, u))| match (l, u) {
            (GraphPoint::Value(l), GraphPoint::Value(u)) => Ok(Some((u - l).max(0.0))),
            (GraphPoint::Escaped, GraphPoint::Escaped) => Ok(None),
            _ => Err(Error::MismatchedFields(format!("escape masks disagree at sample {i}"))),
        })
        .collect()
}

pub(crate) fn median_sorted(v: &[f64]) -> f64 {
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Outcome of adaptive graph computation.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveField {
    pub field: GraphField,
    /// Per sample: whether the depth schedule converged.
    pub converged: Vec<bool>,
}

impl AdaptiveField {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().zip(&self.field.values).all(|(c, v)| *c && !v.is_escaped())
    }
}

/// Result of the finite-`N` contraction diagnostic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contraction {
    /// `sup (f^N)' < 1` over the sampled set, with that supremum.
    Contracting { n: usize, alpha_bound: f64 },
    NotContracting,
}

thread_local! {
    static ORBIT_BUF: RefCell<Vec<BasePoint>> = const { RefCell::new(Vec::new()) };
}

/// Graph computations for one base system and fibre family.
pub struct GraphEngine<'a, F: FibreMap + ?Sized> {
    pub system: &'a BaseSystem,
    pub fam: &'a F,
    pub cfg: EngineConfig,
}

impl<'a, F: FibreMap + ?Sized> GraphEngine<'a, F> {
    pub fn new(system: &'a BaseSystem, fam: &'a F) -> Self {
        Self {
            system,
            fam,
            cfg: EngineConfig::default(),
        }
    }

    pub fn with_config(system: &'a BaseSystem, fam: &'a F, cfg: EngineConfig) -> Self {
        Self { system, fam, cfg }
    }

    /// The graph computed by forward transforms.
    pub fn attracting(&self) -> Which {
        Which::attracting(self.fam.orientation())
    }

    #[inline]
    fn outside(&self, theta: &BasePoint, x: f64, slack: f64) -> bool {
        let (lo, hi) = self.fam.boundary(theta);
        !(x >= lo - slack && x <= hi + slack)
    }

    fn start_value(&self, theta: &BasePoint, which: Which) -> f64 {
        let (lo, hi) = self.fam.boundary(theta);
        match which {
            Which::Lower => lo,
            Which::Upper => hi,
        }
    }

    /// Value of the depth-`n` graph transform of `γ±` at `θ`.
    pub fn pullback_point(&self, beta: f64, theta: &BasePoint, n: usize, which: Which) -> GraphPoint {
        ORBIT_BUF.with(|buf| {
            let mut orbit = buf.borrow_mut();
            self.pullback_with(beta, theta, n, which, &mut orbit)
        })
    }

    fn pullback_with(&self, beta: f64, theta: &BasePoint, n: usize, which: Which, orbit: &mut Vec<BasePoint>) -> GraphPoint {
        let margin = self.cfg.escape_margin;
        let x = if which == self.attracting() {
            self.system.orbit_into(theta, n, Direction::Backward, orbit);
            let mut x = self.start_value(&orbit[n], which);
            for k in (1..=n).rev() {
                let t = &orbit[k];
                x = self.fam.eval(beta, t, x);
                if self.outside(&orbit[k - 1], x, margin) {
                    return GraphPoint::Escaped;
                }
            }
            x
        } else {
            self.system.orbit_into(theta, n, Direction::Forward, orbit);
            let mut x = self.start_value(&orbit[n], which);
            for k in (0..n).rev() {
                let t = &orbit[k];
                x = match self.fam.inverse(beta, t, x) {
                    Ok(v) => v,
                    Err(_) => return GraphPoint::Escaped,
                };
                if self.outside(t, x, margin) {
                    return GraphPoint::Escaped;
                }
            }
            x
        };
        if self.outside(theta, x, self.cfg.eps_num) {
            GraphPoint::Escaped
        } else {
            GraphPoint::Value(x)
        }
    }

    /// Pullback at a fixed depth for every sample.
    pub fn graph_field(&self, beta: f64, samples: &[BasePoint], n: usize, which: Which) -> GraphField {
        let values = samples
            .par_iter()
            .map(|t| self.pullback_point(beta, t, n, which))
            .collect();
        GraphField {
            samples: samples.to_vec(),
            values,
            depth: n,
            which,
            beta,
        }
    }

    /// Pullback with the adaptive depth schedule. Samples are refined
    /// independently; a sample is frozen once two successive depths agree
    /// within the schedule tolerance. With `stop_on_escape` the computation
    /// returns as soon as one sample has escaped.
    pub fn adaptive_field(&self, beta: f64, samples: &[BasePoint], which: Which, stop_on_escape: bool) -> AdaptiveField {
        let sched = self.cfg.schedule;
        let mut depth = sched.start.max(1).min(sched.max_depth.max(1));
        let mut values: Vec<GraphPoint> = samples
            .par_iter()
            .map(|t| self.pullback_point(beta, t, depth, which))
            .collect();
        let mut converged = vec![false; samples.len()];
        let mut used = depth;
        loop {
            if stop_on_escape && values.iter().any(|v| v.is_escaped()) {
                break;
            }
            let open: Vec<usize> = (0..samples.len())
                .filter(|&i| !converged[i] && !values[i].is_escaped())
                .collect();
            if open.is_empty() || depth.saturating_mul(2) > sched.max_depth {
                break;
            }
            depth *= 2;
            used = depth;
            let next: Vec<GraphPoint> = open
                .par_iter()
                .map(|&i| self.pullback_point(beta, &samples[i], depth, which))
                .collect();
            for (&i, v) in open.iter().zip(next) {
                if let (GraphPoint::Value(a), GraphPoint::Value(b)) = (values[i], v) {
                    if (a - b).abs() < sched.tol {
                        converged[i] = true;
                    }
                }
                values[i] = v;
            }
        }
        AdaptiveField {
            field: GraphField {
                samples: samples.to_vec(),
                values,
                depth: used,
                which,
                beta,
            },
            converged,
        }
    }

    /// The bounding graph on the forward base orbit `θ₀, …, θ_{count−1}`,
    /// each value equal to a pullback of depth at least `depth`.
    ///
    /// The attracting graph is carried forward from a single pullback at
    /// `θ₀`; the repelling graph is pulled back once at `θ_{count}` and carried
    /// backward with fibre inverses. Both directions are the stable ones, and
    /// the value at `θ_k` is exactly the pullback of depth `depth + k`
    /// (respectively `depth + count − k`).
    pub fn graph_along_orbit(&self, beta: f64, theta0: &BasePoint, count: usize, which: Which, depth: usize) -> Result<(Vec<BasePoint>, Vec<f64>)> {
        let margin = self.cfg.escape_margin;
        let orbit = self.system.orbit(theta0, count, Direction::Forward);
        let mut xs = vec![0.0; count];
        if which == self.attracting() {
            let mut x = self
                .pullback_point(beta, theta0, depth, which)
                .value()
                .ok_or(Error::GraphEscaped { theta: *theta0, index: 0 })?;
            for k in 0..count {
                xs[k] = x;
                x = self.fam.eval(beta, &orbit[k], x);
                if self.outside(&orbit[k + 1], x, margin) {
                    return Err(Error::GraphEscaped { theta: *theta0, index: k + 1 });
                }
            }
        } else {
            let mut x = self
                .pullback_point(beta, &orbit[count], depth, which)
                .value()
                .ok_or(Error::GraphEscaped { theta: *theta0, index: count })?;
            for k in (0..count).rev() {
                x = self
                    .fam
                    .inverse(beta, &orbit[k], x)
                    .map_err(|_| Error::GraphEscaped { theta: *theta0, index: k })?;
                if self.outside(&orbit[k], x, margin) {
                    return Err(Error::GraphEscaped { theta: *theta0, index: k });
                }
                xs[k] = x;
            }
        }
        let mut orbit = orbit;
        orbit.truncate(count);
        Ok((orbit, xs))
    }

    /// Birkhoff average `(1/N) Σ log ∂ₓf_{β,θ_k}(φ(θ_k))` along the forward
    /// orbit of `θ₀`, with the graph value at every orbit point coming from a
    /// pullback of depth at least `depth`.
    pub fn lyapunov(&self, beta: f64, theta0: &BasePoint, which: Which, n_avg: usize, depth: usize) -> Result<f64> {
        if n_avg == 0 {
            return Err(Error::Config("Lyapunov average needs N ≥ 1".into()));
        }
        let (orbit, xs) = self.graph_along_orbit(beta, theta0, n_avg, which, depth)?;
        let sum: f64 = orbit
            .iter()
            .zip(&xs)
            .map(|(t, x)| self.fam.deriv_x(beta, t, *x).ln())
            .sum();
        Ok(sum / n_avg as f64)
    }

    /// Both bounding graphs and the fibre sections of `K(β)` between them.
    pub fn bounded_set(&self, beta: f64, samples: &[BasePoint], depth: usize) -> IntervalField {
        let lower = self.graph_field(beta, samples, depth, Which::Lower);
        let upper = self.graph_field(beta, samples, depth, Which::Upper);
        interval_field(&lower, &upper)
    }

    /// Largest residual `|f_{β,θ}(φ(θ)) − φ(ωθ)|` over non-escaped samples,
    /// with `φ(ωθ)` re-derived by pullback of depth `field.depth + 1`.
    pub fn invariance_residual(&self, field: &GraphField) -> f64 {
        let d = field.depth;
        field
            .samples
            .par_iter()
            .zip(&field.values)
            .map(|(t, v)| match v {
                GraphPoint::Value(x) => {
                    let img = self.fam.eval(field.beta, t, *x);
                    match self.pullback_point(field.beta, &self.system.forward(t), d + 1, field.which) {
                        GraphPoint::Value(y) => (img - y).abs(),
                        GraphPoint::Escaped => f64::INFINITY,
                    }
                }
                GraphPoint::Escaped => 0.0,
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Smallest `N ≤ n_max` with `sup (f^N_θ)'(x) < 1` over the given points.
    ///
    /// Points on the attracting side are iterated forward. For the repelling
    /// side the inverse skew product is used, whose `N`-step derivative is the
    /// reciprocal of the forward product along the backward orbit.
    pub fn contraction_check(&self, beta: f64, points: &[(BasePoint, f64)], invert: bool, n_max: usize) -> Contraction {
        if points.is_empty() || n_max == 0 {
            return Contraction::NotContracting;
        }
        let per_point: Vec<Vec<f64>> = points
            .par_iter()
            .map(|(t, x)| {
                let mut out = Vec::with_capacity(n_max);
                let (mut t, mut x) = (*t, *x);
                let mut log_d = 0.0;
                for _ in 0..n_max {
                    if invert {
                        let prev = self.system.backward(&t);
                        match self.fam.inverse(beta, &prev, x) {
                            Ok(px) => {
                                log_d -= self.fam.deriv_x(beta, &prev, px).ln();
                                t = prev;
                                x = px;
                            }
                            Err(_) => log_d = f64::INFINITY,
                        }
                    } else {
                        log_d += self.fam.deriv_x(beta, &t, x).ln();
                        x = self.fam.eval(beta, &t, x);
                        t = self.system.forward(&t);
                    }
                    out.push(log_d);
                }
                out
            })
            .collect();
        for n in 0..n_max {
            let sup = per_point.iter().map(|v| v[n]).fold(f64::NEG_INFINITY, f64::max);
            if sup < 0.0 {
                return Contraction::Contracting {
                    n: n + 1,
                    alpha_bound: sup.exp(),
                };
            }
        }
        Contraction::NotContracting
    }

    /// Contraction diagnostic on a graph field; the repelling graph is
    /// checked for the inverse map.
    pub fn contraction_check_graph(&self, field: &GraphField, n_max: usize) -> Result<Contraction> {
        let pts = field_points(field)?;
        Ok(self.contraction_check(field.beta, &pts, field.which != self.attracting(), n_max))
    }

    /// Contraction diagnostic on the sections of `K(β)`, sampled at five
    /// evenly spaced points per section.
    pub fn contraction_check_interval(&self, field: &IntervalField, invert: bool, n_max: usize) -> Result<Contraction> {
        let mut pts = Vec::new();
        for (t, s) in field.samples.iter().zip(&field.sections) {
            match s {
                Section::Interval { lo, hi } => {
                    for k in 0..5 {
                        pts.push((*t, lo + (hi - lo) * k as f64 / 4.0));
                    }
                }
                Section::Empty => {
                    return Err(Error::PreconditionFailed("interval field has empty sections".into()))
                }
            }
        }
        Ok(self.contraction_check(field.beta, &pts, invert, n_max))
    }
}

fn field_points(field: &GraphField) -> Result<Vec<(BasePoint, f64)>> {
    field
        .samples
        .iter()
        .zip(&field.values)
        .map(|(t, v)| {
            v.value()
                .map(|x| (*t, x))
                .ok_or_else(|| Error::PreconditionFailed("graph field has escaped samples".into()))
        })
        .collect()
}

/// Combines lower and upper fields into fibre sections; a section is empty
/// where either graph escaped or the two have crossed.
pub fn interval_field(lower: &GraphField, upper: &GraphField) -> IntervalField {
    let sections = lower
        .values
        .iter()
        .zip(&upper.values)
        .map(|(l, u)| match (l, u) {
            (GraphPoint::Value(lo), GraphPoint::Value(hi)) if lo <= hi => Section::Interval { lo: *lo, hi: *hi },
            _ => Section::Empty,
        })
        .collect();
    IntervalField {
        samples: lower.samples.clone(),
        sections,
        depth: lower.depth.max(upper.depth),
        beta: lower.beta,
    }
}

pub(crate) fn theta_header(dim: usize) -> &'static str {
    if dim == 2 {
        "theta1,theta2"
    } else {
        "theta1"
    }
}

pub(crate) fn theta_cells(p: &BasePoint) -> String {
    p.coords().iter().map(|c| fmt17(*c)).collect::<Vec<_>>().join(",")
}

/// Formats a double with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{:.16e}", x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibre::{FibreFamily, GammaBoundary};
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> Vec<BasePoint> {
        (0..n).map(|i| BasePoint::new1(i as f64 / n as f64)).collect()
    }

    fn half_affine() -> FibreFamily {
        FibreFamily::Affine {
            slope: 0.5,
            intercept: 0.4,
            beta_coeff: -1.0,
            forcing: 0.1,
            boundary: GammaBoundary::new(0.0, 2.0).unwrap(),
        }
    }

    /// Stable fixed point of `x ↦ arctan(100x) − c` by plain iteration from 2.
    fn fixed_point_1d(c: f64) -> f64 {
        let mut x: f64 = 2.0;
        for _ in 0..10_000 {
            x = (100.0 * x).atan() - c;
        }
        x
    }

    #[test]
    fn depth_zero_returns_boundary() {
        let sys = BaseSystem::golden_rotation();
        let fam = FibreFamily::arctan_1d(100.0, 0.5);
        let e = GraphEngine::new(&sys, &fam);
        let t = BasePoint::new1(0.3);
        assert_eq!(e.pullback_point(0.1, &t, 0, Which::Upper), GraphPoint::Value(2.0));
        assert_eq!(e.pullback_point(0.1, &t, 0, Which::Lower), GraphPoint::Value(0.0));
    }

    #[test]
    fn identity_base_matches_fixed_point_iteration() {
        let sys = BaseSystem::Identity { dim: 1 };
        let fam = FibreFamily::arctan_1d(100.0, 0.5);
        let e = GraphEngine::new(&sys, &fam);
        let v = e.pullback_point(0.0, &BasePoint::new1(0.75), 200, Which::Upper).value().unwrap();
        let oracle = fixed_point_1d(0.0);
        assert_abs_diff_eq!(v, oracle, epsilon = 1e-12);
        assert!((v - 1.5644).abs() < 1e-3);
        let samples = grid(16);
        let field = e.graph_field(0.1, &samples, 500, Which::Upper);
        for (t, v) in samples.iter().zip(&field.values) {
            let c = 0.2 + fam.forcing_offset(t);
            assert_abs_diff_eq!(v.value().unwrap(), fixed_point_1d(c), epsilon = 1e-8);
        }
    }

    #[test]
    fn large_beta_escapes_everywhere() {
        let sys = BaseSystem::golden_rotation();
        let fam = FibreFamily::arctan_1d(100.0, 0.5);
        let e = GraphEngine::new(&sys, &fam);
        let f = e.graph_field(1.0, &grid(50), 20, Which::Upper);
        assert_eq!(f.escaped_count(), 50);
        let f = e.graph_field(1.0, &grid(50), 20, Which::Lower);
        assert_eq!(f.escaped_count(), 50);
    }

    #[test]
    fn pullback_is_monotone_in_depth() {
        let sys = BaseSystem::golden_rotation();
        let fam = FibreFamily::arctan_1d(100.0, 0.5);
        let e = GraphEngine::new(&sys, &fam);
        for t in grid(20) {
            let mut prev_u = f64::INFINITY;
            let mut prev_l = f64::NEG_INFINITY;
            for n in 0..60 {
                let u = e.pullback_point(0.2, &t, n, Which::Upper).value().unwrap();
                let l = e.pullback_point(0.2, &t, n, Which::Lower).value().unwrap();
                assert!(u <= prev_u && l >= prev_l && l <= u);
                prev_u = u;
                prev_l = l;
            }
        }
    }

    #[test]
    fn affine_lyapunov_and_contraction() {
        let sys = BaseSystem::golden_rotation();
        let fam = half_affine();
        let e = GraphEngine::new(&sys, &fam);
        let lam = e.lyapunov(0.0, &BasePoint::new1(0.1), Which::Upper, 1000, 100).unwrap();
        assert_abs_diff_eq!(lam, 0.5f64.ln(), epsilon = 1e-12);
        let field = e.graph_field(0.0, &grid(10), 100, Which::Upper);
        assert_eq!(
            e.contraction_check_graph(&field, 10).unwrap(),
            Contraction::Contracting { n: 1, alpha_bound: 0.5 }
        );
        // the inverse of an affine contraction expands
        let pts: Vec<_> = field.samples.iter().zip(&field.values).map(|(t, v)| (*t, v.value().unwrap())).collect();
        assert_eq!(e.contraction_check(0.0, &pts, true, 10), Contraction::NotContracting);
    }

    #[test]
    fn pinching_report_on_identical_fields_is_collapsed() {
        let sys = BaseSystem::golden_rotation();
        let fam = FibreFamily::arctan_1d(100.0, 0.5);
        let e = GraphEngine::new(&sys, &fam);
        let f = e.graph_field(0.2, &grid(10), 50, Which::Upper);
        let r = pinching_report(&f, &f, PinchThresholds::default()).unwrap();
        assert_eq!(r.min_gap, 0.0);
        assert_eq!(r.classification, PinchClass::Collapsed);
    }

    #[test]
    fn pinching_report_rejects_mismatched_fields() {
        let sys = BaseSystem::golden_rotation();
        let fam = FibreFamily::arctan_1d(100.0, 0.5);
        let e = GraphEngine::new(&sys, &fam);
        let a = e.graph_field(0.2, &grid(10), 50, Which::Upper);
        let b = e.graph_field(0.2, &grid(11), 50, Which::Lower);
        assert!(matches!(pinching_report(&b, &a, PinchThresholds::default()), Err(Error::MismatchedFields(_))));
        let mut c = e.graph_field(0.2, &grid(10), 50, Which::Lower);
        c.values[3] = GraphPoint::Escaped;
        assert!(matches!(pinching_report(&c, &a, PinchThresholds::default()), Err(Error::MismatchedFields(_))));
    }

    #[test]
    fn interval_sections_empty_where_escaped_or_crossed() {
        let s = grid(3);
        let mk = |vals: Vec<GraphPoint>, which| GraphField {
            samples: s.clone(),
            values: vals,
            depth: 1,
            which,
            beta: 0.0,
        };
        let lower = mk(vec![GraphPoint::Value(0.1), GraphPoint::Value(0.9), GraphPoint::Escaped], Which::Lower);
        let upper = mk(vec![GraphPoint::Value(0.5), GraphPoint::Value(0.2), GraphPoint::Value(1.0)], Which::Upper);
        let k = interval_field(&lower, &upper);
        assert_eq!(k.sections[0], Section::Interval { lo: 0.1, hi: 0.5 });
        assert_eq!(k.sections[1], Section::Empty);
        assert_eq!(k.sections[2], Section::Empty);
        assert_abs_diff_eq!(k.fraction_bounded(), 1.0 / 3.0);
    }

    #[test]
    fn csv_headers() {
        let sys = BaseSystem::TorusMap;
        let fam = FibreFamily::arctan_2d(100.0, 0.5);
        let e = GraphEngine::new(&sys, &fam);
        let f = e.graph_field(0.0, &[BasePoint::new2(0.1, 0.2)], 10, Which::Upper);
        let mut out = Vec::new();
        f.write_csv(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.starts_with("theta1,theta2,value,escaped\n"));
        let row: Vec<&str> = s.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row.len(), 4);
        assert_eq!(row[3], "0");
        let v: f64 = row[2].parse().unwrap();
        assert_eq!(v, f.values[0].value().unwrap());
    }

    #[test]
    fn fmt17_round_trips() {
        for &x in &[0.1, 1.0 / 3.0, 1.5607966601082315, -2.5e-300, 0.0] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }
}
