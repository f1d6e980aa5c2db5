//! Critical parameters by monotone bisection on the existence of invariant
//! graphs in `Γ`, and parameter sweeps.
//!
//! Existence is decided on the attracting bounding graph only: if any
//! invariant graph lies in `Γ`, the forward graph transforms of the outer
//! boundary stay in `Γ` for ever, and otherwise they leave it. Since the
//! fibre maps move monotonically with `β`, the verdict is a single step
//! along the parameter axis and bisection applies.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{BasePoint, BaseSystem, Direction};
use crate::error::{Error, Result};
use crate::fibre::FibreMap;
use crate::graph::{fmt17, interval_field, EngineConfig, GraphEngine, GraphPoint, Section, Which};

/// Existence verdict at one parameter value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Existence {
    /// The depth schedule converged at every sample without escape.
    Exists,
    /// Some sample left `Γ`.
    Escaped,
    /// Depth budget exhausted while still converging.
    Undecided,
}

impl Existence {
    /// Bisection reading: undecided counts as existence.
    pub fn counts_as_existing(self) -> bool {
        !matches!(self, Existence::Escaped)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionOptions {
    pub beta_range: (f64, f64),
    pub tol: f64,
    pub engine: EngineConfig,
}

impl BisectionOptions {
    /// Defaults for sampled continuum bases.
    pub fn continuum() -> Self {
        Self {
            beta_range: (0.0, 1.0),
            tol: 1e-4,
            engine: EngineConfig::default(),
        }
    }

    /// Defaults for periodic orbits and other finite bases.
    pub fn finite() -> Self {
        Self {
            tol: 1e-6,
            ..Self::continuum()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bisection,
    ClosedForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifurcationResult {
    pub beta_c: f64,
    pub bracket: [f64; 2],
    pub tol: f64,
    pub restricted_to: Option<String>,
    pub method: Method,
    pub samples: usize,
    pub n_max: usize,
    /// Verdicts at the two bracket ends.
    pub lower_verdict: Existence,
    pub upper_verdict: Existence,
}

/// A compact invariant subset of the base on which a restricted critical
/// parameter is computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InvariantSubset {
    /// A periodic orbit, points listed in orbit order.
    Periodic { label: String, points: Vec<BasePoint> },
    /// An invariant circle or other minimal set, represented by a finite
    /// segment of the orbit of `seed`.
    OrbitSegment { label: String, seed: BasePoint, len: usize },
}

impl InvariantSubset {
    pub fn label(&self) -> &str {
        match self {
            InvariantSubset::Periodic { label, .. } | InvariantSubset::OrbitSegment { label, .. } => label,
        }
    }
}

/// One row of a bifurcation-diagram sweep. Absent values are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub min_gap: Option<f64>,
    pub lambda_upper: Option<f64>,
    pub lambda_lower: Option<f64>,
    pub fraction_bounded: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub engine: EngineConfig,
    /// Birkhoff-average length for the Lyapunov columns.
    pub lyap_n: usize,
    /// Pullback depth of the starting graph value for the Lyapunov columns.
    pub lyap_depth: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            lyap_n: 10_000,
            lyap_depth: 1_000,
        }
    }
}

/// Whether an invariant graph exists in `Γ` at `beta`, judged on the
/// attracting bounding graph over `samples`.
pub fn has_invariant_graph<F: FibreMap + ?Sized>(
    system: &BaseSystem,
    fam: &F,
    beta: f64,
    samples: &[BasePoint],
    cfg: &EngineConfig,
) -> Existence {
    let engine = GraphEngine::with_config(system, fam, *cfg);
    let out = engine.adaptive_field(beta, samples, engine.attracting(), true);
    if out.field.escaped_count() > 0 {
        Existence::Escaped
    } else if out.converged.iter().all(|c| *c) {
        Existence::Exists
    } else {
        Existence::Undecided
    }
}

/// Whether the set of `Γ`-bounded orbits has a non-empty section over at
/// least one sample. Samples still converging when the budget runs out are
/// counted as bounded.
pub fn has_bounded_orbit<F: FibreMap + ?Sized>(
    system: &BaseSystem,
    fam: &F,
    beta: f64,
    samples: &[BasePoint],
    cfg: &EngineConfig,
) -> Existence {
    let engine = GraphEngine::with_config(system, fam, *cfg);
    let att = engine.attracting();
    let first = engine.adaptive_field(beta, samples, att, false);
    let alive: Vec<usize> = (0..samples.len()).filter(|&i| !first.field.values[i].is_escaped()).collect();
    if alive.is_empty() {
        return Existence::Escaped;
    }
    let sub: Vec<BasePoint> = alive.iter().map(|&i| samples[i]).collect();
    let second = engine.adaptive_field(beta, &sub, att.other(), false);
    let mut any_converged = false;
    let mut any_alive = false;
    for (k, &i) in alive.iter().enumerate() {
        let (a, b) = (first.field.values[i], second.field.values[k]);
        if let (GraphPoint::Value(a), GraphPoint::Value(b)) = (a, b) {
            let (lo, hi) = if att == Which::Upper { (b, a) } else { (a, b) };
            if lo <= hi + cfg.eps_num {
                any_alive = true;
                any_converged |= first.converged[i] && second.converged[k];
            }
        }
    }
    match (any_alive, any_converged) {
        (false, _) => Existence::Escaped,
        (true, true) => Existence::Exists,
        (true, false) => Existence::Undecided,
    }
}

fn bisect<V: Fn(f64) -> Existence>(opts: &BisectionOptions, verdict: V) -> Result<([f64; 2], Existence, Existence)> {
    if !(opts.tol > 0.0) {
        return Err(Error::Config(format!("bisection tolerance must be positive, got {}", opts.tol)));
    }
    let (mut lo, mut hi) = opts.beta_range;
    let mut v_lo = verdict(lo);
    let mut v_hi = verdict(hi);
    if !v_lo.counts_as_existing() || v_hi.counts_as_existing() {
        return Err(Error::PreconditionFailed(format!(
            "need an invariant graph at β={lo} and none at β={hi}; got {v_lo:?} and {v_hi:?}"
        )));
    }
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        let v = verdict(mid);
        if v.counts_as_existing() {
            lo = mid;
            v_lo = v;
        } else {
            hi = mid;
            v_hi = v;
        }
    }
    Ok(([lo, hi], v_lo, v_hi))
}

fn result(bracket: [f64; 2], v: (Existence, Existence), opts: &BisectionOptions, samples: usize, restricted_to: Option<String>) -> BifurcationResult {
    BifurcationResult {
        beta_c: 0.5 * (bracket[0] + bracket[1]),
        bracket,
        tol: opts.tol,
        restricted_to,
        method: Method::Bisection,
        samples,
        n_max: opts.engine.schedule.max_depth,
        lower_verdict: v.0,
        upper_verdict: v.1,
    }
}

/// The critical parameter `β_c`: the last parameter at which an invariant
/// graph exists over every sample.
pub fn find_beta_c<F: FibreMap + ?Sized>(
    system: &BaseSystem,
    fam: &F,
    samples: &[BasePoint],
    opts: &BisectionOptions,
) -> Result<BifurcationResult> {
    check_samples(system, samples)?;
    let (bracket, v_lo, v_hi) = bisect(opts, |b| has_invariant_graph(system, fam, b, samples, &opts.engine))?;
    Ok(result(bracket, (v_lo, v_hi), opts, samples.len(), None))
}

/// The last bifurcation parameter `β̂_c`: the last parameter at which some
/// sample still carries a `Γ`-bounded orbit.
pub fn find_beta_hat<F: FibreMap + ?Sized>(
    system: &BaseSystem,
    fam: &F,
    samples: &[BasePoint],
    opts: &BisectionOptions,
) -> Result<BifurcationResult> {
    check_samples(system, samples)?;
    let (bracket, v_lo, v_hi) = bisect(opts, |b| has_bounded_orbit(system, fam, b, samples, &opts.engine))?;
    Ok(result(bracket, (v_lo, v_hi), opts, samples.len(), None))
}

/// `β_c^M` for a compact invariant subset `M` of the base.
pub fn find_beta_c_restricted<F: FibreMap + ?Sized>(
    system: &BaseSystem,
    fam: &F,
    subset: &InvariantSubset,
    opts: &BisectionOptions,
) -> Result<BifurcationResult> {
    let (sub_system, samples) = match subset {
        InvariantSubset::Periodic { points, .. } => {
            check_samples(system, points)?;
            if !system.is_invariant_set(points) {
                return Err(Error::NotInvariant);
            }
            (BaseSystem::periodic(points.clone())?, points.clone())
        }
        InvariantSubset::OrbitSegment { seed, len, .. } => {
            check_samples(system, std::slice::from_ref(seed))?;
            if *len == 0 {
                return Err(Error::Config("orbit segment needs at least one point".into()));
            }
            (system.clone(), system.orbit(seed, len - 1, Direction::Forward))
        }
    };
    let mut out = find_beta_c(&sub_system, fam, &samples, opts)?;
    out.restricted_to = Some(subset.label().to_string());
    Ok(out)
}

fn check_samples(system: &BaseSystem, samples: &[BasePoint]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Config("at least one θ sample is required".into()));
    }
    samples.iter().try_for_each(|p| system.check_point(p))
}

/// One row per `β` of `beta_grid`: minimum gap between the bounding graphs,
/// Lyapunov exponents of both along the orbit of the first sample, and the
/// fraction of samples over which `Γ`-bounded orbits survive.
pub fn sweep<F: FibreMap + ?Sized>(
    system: &BaseSystem,
    fam: &F,
    beta_grid: &[f64],
    samples: &[BasePoint],
    opts: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    check_samples(system, samples)?;
    if beta_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("β grid must be sorted ascending".into()));
    }
    let engine = GraphEngine::with_config(system, fam, opts.engine);
    let theta0 = samples[0];
    beta_grid
        .iter()
        .map(|&beta| {
            let lower = engine.adaptive_field(beta, samples, Which::Lower, false).field;
            let upper = engine.adaptive_field(beta, samples, Which::Upper, false).field;
            let k = interval_field(&lower, &upper);
            let min_gap = if k.sections.iter().all(|s| matches!(s, Section::Interval { .. })) {
                k.sections
                    .iter()
                    .map(|s| match s {
                        Section::Interval { lo, hi } => hi - lo,
                        Section::Empty => f64::INFINITY,
                    })
                    .reduce(f64::min)
            } else {
                None
            };
            let lam = |which| {
                min_gap.and_then(|_| engine.lyapunov(beta, &theta0, which, opts.lyap_n, opts.lyap_depth).ok())
            };
            Ok(SweepRow {
                beta,
                min_gap,
                lambda_upper: lam(Which::Upper),
                lambda_lower: lam(Which::Lower),
                fraction_bounded: k.fraction_bounded(),
            })
        })
        .collect()
}

/// Existence verdicts over a grid of `β`, evaluated in parallel.
pub fn existence_profile<F: FibreMap + ?Sized>(
    system: &BaseSystem,
    fam: &F,
    beta_grid: &[f64],
    samples: &[BasePoint],
    cfg: &EngineConfig,
) -> Vec<Existence> {
    beta_grid
        .par_iter()
        .map(|&b| has_invariant_graph(system, fam, b, samples, cfg))
        .collect()
}

/// Writes `beta,min_gap,lambda_upper,lambda_lower,fraction_bounded` with
/// absent values as empty fields.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    writeln!(w, "beta,min_gap,lambda_upper,lambda_lower,fraction_bounded")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt17(r.beta),
            opt(r.min_gap),
            opt(r.lambda_upper),
            opt(r.lambda_lower),
            fmt17(r.fraction_bounded)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::torus_m1;
    use crate::fibre::FibreFamily;
    use crate::samples::grid;

    #[test]
    fn example_one_endpoints() {
        let sys = BaseSystem::golden_rotation();
        let fam = FibreFamily::arctan_1d(100.0, 0.5);
        let s = grid(1, 200);
        let cfg = EngineConfig::default();
        assert_eq!(has_invariant_graph(&sys, &fam, 0.0, &s, &cfg), Existence::Exists);
        assert_eq!(has_invariant_graph(&sys, &fam, 1.0, &s, &cfg), Existence::Escaped);
    }

    #[test]
    fn precondition_failure_is_reported() {
        let sys = BaseSystem::golden_rotation();
        let fam = FibreFamily::arctan_1d(100.0, 0.5);
        let opts = BisectionOptions {
            beta_range: (0.5, 1.0),
            ..BisectionOptions::continuum()
        };
        let err = find_beta_c(&sys, &fam, &grid(1, 50), &opts).unwrap_err();
        assert!(matches!(err, Error::PreconditionFailed(_)));
    }

    #[test]
    fn restricted_rejects_non_invariant_sets() {
        let sys = BaseSystem::TorusMap;
        let fam = FibreFamily::arctan_2d(100.0, 0.5);
        let bad = InvariantSubset::Periodic {
            label: "bad".into(),
            points: vec![BasePoint::new2(0.1, 0.3), BasePoint::new2(0.6, 0.2)],
        };
        let err = find_beta_c_restricted(&sys, &fam, &bad, &BisectionOptions::finite()).unwrap_err();
        assert!(matches!(err, Error::NotInvariant));
        let m1 = InvariantSubset::Periodic {
            label: "M1".into(),
            points: torus_m1(),
        };
        let r = find_beta_c_restricted(&sys, &fam, &m1, &BisectionOptions::finite()).unwrap();
        assert_eq!(r.restricted_to.as_deref(), Some("M1"));
        assert!(r.bracket[1] - r.bracket[0] <= 1e-6);
        assert_eq!(r.beta_c, 0.5 * (r.bracket[0] + r.bracket[1]));
    }

    #[test]
    fn sweep_csv_leaves_absent_fields_empty() {
        let rows = vec![SweepRow {
            beta: 1.0,
            min_gap: None,
            lambda_upper: None,
            lambda_lower: None,
            fraction_bounded: 0.0,
        }];
        let mut out = Vec::new();
        write_sweep_csv(&rows, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(s.lines().nth(1).unwrap(), format!("{},,,,{}", fmt17(1.0), fmt17(0.0)));
    }

    #[test]
    fn unsorted_grid_is_rejected() {
        let sys = BaseSystem::golden_rotation();
        let fam = FibreFamily::arctan_1d(100.0, 0.5);
        assert!(sweep(&sys, &fam, &[0.2, 0.1], &grid(1, 10), &SweepOptions::default()).is_err());
    }
}
