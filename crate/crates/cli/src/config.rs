//! Run configuration: JSON file plus command-line overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use forced_sn::base::{golden_mean, torus_m1, torus_m2, BasePoint, BaseSystem};
use forced_sn::fibre::{FibreFamily, GammaBoundary};
use forced_sn::flow::{ScalarFlowSystem, VectorField};
use forced_sn::samples::Placement;

use crate::Failure;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    #[default]
    Rotation,
    Torus,
    Identity,
    Periodic,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseConfig {
    #[serde(default)]
    pub kind: BaseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    /// Dimension of the identity base.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FibreKind {
    #[default]
    Arctan1d,
    Arctan2d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FibreConfig {
    #[serde(default)]
    pub kind: FibreKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(rename = "Gamma", default = "default_bounds")]
    pub bounds: [f64; 2],
}

fn default_alpha() -> f64 {
    100.0
}
fn default_gamma() -> f64 {
    0.5
}
fn default_bounds() -> [f64; 2] {
    [0.0, 2.0]
}

impl Default for FibreConfig {
    fn default() -> Self {
        Self {
            kind: FibreKind::default(),
            alpha: default_alpha(),
            gamma: default_gamma(),
            bounds: default_bounds(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Linear,
    QuadraticCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub t0: f64,
    #[serde(default)]
    pub rho_flow: f64,
    pub field: FieldKind,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

/// `count` equally spaced values from `start` to `stop` inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl BetaGrid {
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => vec![],
            1 => vec![self.start],
            n => (0..n)
                .map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

impl std::str::FromStr for BetaGrid {
    type Err = String;

    /// `start:stop:count`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:stop:count, got {s:?}"));
        }
        let f = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"));
        Ok(BetaGrid {
            start: f(parts[0])?,
            stop: f(parts[1])?,
            count: parts[2].trim().parse().map_err(|e| format!("{:?}: {e}", parts[2]))?,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Everything a run depends on. Absent command parameters take their
/// defaults in [`RunConfig::resolve`]; the resolved form is what outputs
/// embed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub base: BaseConfig,
    #[serde(default)]
    pub fibre: FibreConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_grid: Option<BetaGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default)]
    pub seed: u64,
    /// Fixed pullback depth; adaptive when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// `M1` or `M2` on the torus base.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restrict: Option<String>,
    #[serde(default)]
    pub last: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyap_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyap_depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }

    pub fn dim(&self) -> usize {
        if self.flow.is_some() {
            return 1;
        }
        match self.base.kind {
            BaseKind::Rotation => 1,
            BaseKind::Torus => 2,
            BaseKind::Identity => self.base.dim.unwrap_or(match self.fibre.kind {
                FibreKind::Arctan1d => 1,
                FibreKind::Arctan2d => 2,
            }),
            BaseKind::Periodic => self
                .base
                .points
                .as_ref()
                .and_then(|p| p.first())
                .map_or(1, |p| p.len()),
        }
    }

    /// Fills defaults that do not depend on the command and checks
    /// consistency between the parts.
    pub fn resolve(mut self) -> Result<Self, Failure> {
        let dim = self.dim();
        match self.base.kind {
            BaseKind::Rotation => {
                self.base.rho.get_or_insert_with(golden_mean);
            }
            BaseKind::Identity => {
                self.base.dim = Some(dim);
            }
            BaseKind::Periodic if self.base.points.is_none() => {
                return Err(Failure::Config("periodic base needs \"points\"".into()));
            }
            _ => {}
        }
        if self.flow.is_none() {
            let fibre_dim = match self.fibre.kind {
                FibreKind::Arctan1d => 1,
                FibreKind::Arctan2d => 2,
            };
            if fibre_dim != dim {
                return Err(Failure::Config(format!(
                    "fibre kind {:?} needs a {fibre_dim}-dimensional base, base is {dim}-dimensional",
                    self.fibre.kind
                )));
            }
        }
        self.samples.get_or_insert(if dim == 1 { 2000 } else { 10_000 });
        self.beta_range.get_or_insert([0.0, 1.0]);
        if let Some(r) = self.beta_range {
            if !(r[0] < r[1]) {
                return Err(Failure::Config(format!("beta_range must be increasing, got {r:?}")));
            }
        }
        if self.samples == Some(0) {
            return Err(Failure::Config("samples must be positive".into()));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Failure::Config(format!("tol must be positive, got {t}")));
            }
        }
        Ok(self)
    }

    pub fn beta_range(&self) -> (f64, f64) {
        let r = self.beta_range.unwrap_or([0.0, 1.0]);
        (r[0], r[1])
    }

    pub fn boundary(&self) -> Result<GammaBoundary, Failure> {
        GammaBoundary::new(self.fibre.bounds[0], self.fibre.bounds[1]).map_err(|e| Failure::Config(e.to_string()))
    }

    pub fn base_points(&self) -> Result<Vec<BasePoint>, Failure> {
        self.base
            .points
            .iter()
            .flatten()
            .map(|p| BasePoint::from_slice(p).map_err(|e| Failure::Config(e.to_string())))
            .collect()
    }

    pub fn base_system(&self) -> Result<BaseSystem, Failure> {
        if let Some(flow) = &self.flow {
            return Ok(self.flow_system_with(flow)?.base_system());
        }
        Ok(match self.base.kind {
            BaseKind::Rotation => BaseSystem::Rotation {
                rho: self.base.rho.unwrap_or_else(golden_mean),
            },
            BaseKind::Torus => BaseSystem::TorusMap,
            BaseKind::Identity => BaseSystem::Identity { dim: self.dim() },
            BaseKind::Periodic => BaseSystem::periodic(self.base_points()?).map_err(|e| Failure::Config(e.to_string()))?,
        })
    }

    pub fn fibre_family(&self) -> Result<FibreFamily, Failure> {
        let boundary = self.boundary()?;
        let FibreConfig { alpha, gamma, .. } = self.fibre;
        if !(alpha > 1.0) {
            return Err(Failure::Config(format!("alpha must exceed 1, got {alpha}")));
        }
        Ok(match self.fibre.kind {
            FibreKind::Arctan1d => FibreFamily::Arctan1d { alpha, gamma, boundary },
            FibreKind::Arctan2d => FibreFamily::Arctan2d { alpha, gamma, boundary },
        })
    }

    pub fn flow_system(&self) -> Result<ScalarFlowSystem, Failure> {
        let flow = self
            .flow
            .as_ref()
            .ok_or_else(|| Failure::Config("this command needs a \"flow\" section".into()))?;
        self.flow_system_with(flow)
    }

    fn flow_system_with(&self, flow: &FlowConfig) -> Result<ScalarFlowSystem, Failure> {
        let tagged = serde_json::json!({
            "field": flow.field,
            "params": flow.params,
        });
        let field: VectorField =
            serde_json::from_value(tagged).map_err(|e| Failure::Config(format!("flow params: {e}")))?;
        ScalarFlowSystem::new(field, flow.t0, flow.rho_flow, self.boundary()?, self.beta_range()).map_err(Failure::Core)
    }

    pub fn restricted_points(&self) -> Result<Option<(String, Vec<BasePoint>)>, Failure> {
        match self.restrict.as_deref() {
            None => Ok(None),
            Some("M1") => Ok(Some(("M1".into(), torus_m1()))),
            Some("M2") => Ok(Some(("M2".into(), torus_m2()))),
            Some(other) => Err(Failure::Config(format!("unknown invariant subset {other:?}; expected M1 or M2"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_resolves_to_the_golden_arctan_setup() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        let c = c.resolve().unwrap();
        assert_eq!(c.base.rho, Some(golden_mean()));
        assert_eq!(c.samples, Some(2000));
        assert_eq!(c.fibre_family().unwrap(), FibreFamily::arctan_1d(100.0, 0.5));
    }

    #[test]
    fn schema_field_names() {
        let c: RunConfig = serde_json::from_str(
            r#"{"base": {"kind": "torus"}, "fibre": {"kind": "arctan2d", "alpha": 50, "gamma": 0.25, "Gamma": [0, 2]}}"#,
        )
        .unwrap();
        assert_eq!(c.dim(), 2);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let c: RunConfig = serde_json::from_str(r#"{"base": {"kind": "torus"}}"#).unwrap();
        assert!(matches!(c.resolve(), Err(Failure::Config(_))));
    }

    #[test]
    fn beta_grid_parses() {
        let g: BetaGrid = "0.26:0.28:21".parse().unwrap();
        let v = g.values();
        assert_eq!(v.len(), 21);
        assert_eq!(v[20], 0.28);
        assert!("0.1:0.2".parse::<BetaGrid>().is_err());
    }

    #[test]
    fn flow_section_builds_the_vector_field() {
        let c: RunConfig = serde_json::from_str(
            r#"{"flow": {"t0": 1, "rho_flow": 0.1, "field": "quadratic_cap", "params": {"c0": 0.6, "c1": 0.2}}}"#,
        )
        .unwrap();
        let sys = c.resolve().unwrap().flow_system().unwrap();
        assert_eq!(sys.field, VectorField::QuadraticCap { c0: 0.6, c1: 0.2 });
    }
}
