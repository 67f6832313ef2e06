//! Systems built from the `system` section of a config.

use pwlab::characteristics::{condition_c, cosphere_samples, group_roots, BracketReport, ConditionCParams, MatrixSymbol, RootSystem};
use pwlab::geometry::FlowParams;
use pwlab::grid::{Grid, SpectralField, VectorField};
use pwlab::propagator::{PropagatorParams, SystemSpec};
use pwlab::symdsl::{parse, SymbolExpr};
use pwlab::systems::{build_companion, build_second_order, CauchyTerm, CompanionSystem, LowerTerms, SecondOrderSystem};
use serde::Serialize;

use crate::config::{RunConfig, SystemConfig};
use crate::error::{config, CliError};

pub enum Model {
    Explicit { roots: RootSystem, b: MatrixSymbol },
    Companion(Box<CompanionSystem>),
    SecondOrder(Box<SecondOrderSystem>),
}

/// Facts about the generated system echoed into reports.
#[derive(Debug, Serialize)]
pub struct ModelSummary {
    pub kind: &'static str,
    pub size: usize,
    pub roots: Vec<String>,
    pub groups: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub commutator_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discriminant_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<String>,
}

pub fn symbol(text: &str, n: usize) -> Result<SymbolExpr, CliError> {
    parse(text, n).map_err(|e| CliError::Config(format!("symbol `{text}`: {e}")))
}

pub fn condition_params(cfg: &RunConfig) -> ConditionCParams {
    let t = &cfg.tolerances;
    ConditionCParams { cap: t.bracket_cap, resolution: t.resolution, mult_tol: t.mult_tol, bracket_tol: t.bracket_tol }
}

pub fn flow_params(cfg: &RunConfig) -> FlowParams {
    let t = &cfg.tolerances;
    FlowParams { dt: t.dt, event_tol: t.event_tol, time_tol: t.time_tol }
}

pub fn propagator_params(cfg: &RunConfig) -> PropagatorParams {
    let t = &cfg.tolerances;
    PropagatorParams { cfl: t.cfl, energy_tol: t.energy_tol, ref_tol: t.ref_tol, ..PropagatorParams::default() }
}

impl Model {
    pub fn build(cfg: &RunConfig) -> Result<Self, CliError> {
        let n = cfg.dimension;
        let strings = |v: &[String]| v.iter().map(|s| symbol(s, n)).collect::<Result<Vec<_>, _>>();
        match &cfg.system {
            SystemConfig::Explicit { roots, b } => {
                if roots.is_empty() {
                    return Err(CliError::Config("an explicit system needs at least one root".into()));
                }
                let parsed = strings(roots)?;
                let samples = cosphere_samples(n, cfg.tolerances.group_samples);
                let b = match b {
                    Some(m) => MatrixSymbol::parse(&m.re, m.im.as_deref(), n, 0).map_err(config)?,
                    None => MatrixSymbol::zeros(roots.len(), n, 0),
                };
                if b.size() != roots.len() {
                    return Err(CliError::Config(format!("B is {0}×{0} but there are {1} roots", b.size(), roots.len())));
                }
                Ok(Model::Explicit { roots: group_roots(&parsed, &samples), b })
            }
            SystemConfig::Companion { m, roots, c, b, cauchy, factorized_cauchy } => {
                let lambdas = strings(roots)?;
                let mut lower = LowerTerms {
                    b: b.iter().map(|t| Ok((t.seq.clone(), symbol(&t.expr, n)?))).collect::<Result<_, CliError>>()?,
                    c: c.as_deref().map(|s| symbol(s, n)).transpose()?,
                    cauchy: cauchy
                        .iter()
                        .map(|t| Ok(CauchyTerm { seq: t.seq.clone(), j: t.j, expr: symbol(&t.expr, n)? }))
                        .collect::<Result<_, CliError>>()?,
                };
                if *factorized_cauchy {
                    if !cauchy.is_empty() {
                        return Err(CliError::Config("`cauchy` and `factorized_cauchy` are exclusive".into()));
                    }
                    lower.cauchy = CompanionSystem::factorized_cauchy_terms(&lambdas);
                }
                Ok(Model::Companion(Box::new(build_companion(*m, &lambdas, &lower).map_err(config)?)))
            }
            SystemConfig::SecondOrder { b, c, mu } => {
                let mu = mu.as_deref().map(|s| symbol(s, n)).transpose()?;
                let sys = build_second_order(&symbol(b, n)?, &symbol(c, n)?, mu.as_ref(), &condition_params(cfg)).map_err(config)?;
                Ok(Model::SecondOrder(Box::new(sys)))
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Explicit { .. } => "explicit",
            Model::Companion(_) => "companion",
            Model::SecondOrder(_) => "second_order",
        }
    }

    /// Characteristic roots, grouped.
    pub fn roots(&self) -> &RootSystem {
        match self {
            Model::Explicit { roots, .. } => roots,
            Model::Companion(s) => &s.roots,
            Model::SecondOrder(s) => &s.roots,
        }
    }

    pub fn summary(&self) -> ModelSummary {
        let roots = self.roots();
        let (size, commutator_defect, discriminant_min, mu) = match self {
            Model::Explicit { roots, .. } => (roots.roots.len(), None, None, None),
            Model::Companion(s) => (s.size(), Some(s.commutator_defect), None, None),
            Model::SecondOrder(s) => (2, None, Some(s.discriminant_min), Some(s.mu.to_string())),
        };
        ModelSummary {
            kind: self.kind(),
            size,
            roots: roots.roots.iter().map(|r| r.to_string()).collect(),
            groups: roots.groups.clone(),
            commutator_defect,
            discriminant_min,
            mu,
        }
    }

    pub fn condition_c(&self, params: &ConditionCParams) -> BracketReport {
        match self {
            Model::SecondOrder(s) => s.report.clone(),
            _ => condition_c(self.roots(), params),
        }
    }

    /// diag(roots) + B on the grid; second-order systems have no diagonal form here.
    pub fn spec(&self, grid: Grid, horizon: f64, command: &str) -> Result<SystemSpec, CliError> {
        match self {
            Model::Explicit { roots, b } => SystemSpec::new(roots.clone(), b.clone(), grid, horizon).map_err(config),
            Model::Companion(s) => s.spec(grid, horizon).map_err(config),
            Model::SecondOrder(_) => Err(CliError::Config(format!(
                "`{command}` needs a diagonal first-order system; second_order systems support check, flow, wavefront and xi"
            ))),
        }
    }

    /// Coupling B of the diagonal form.
    pub fn coupling(&self, command: &str) -> Result<&MatrixSymbol, CliError> {
        match self {
            Model::Explicit { b, .. } => Ok(b),
            Model::Companion(s) => Ok(&s.b),
            Model::SecondOrder(_) => Err(CliError::Config(format!("`{command}` is not available for second_order systems"))),
        }
    }

    /// Initial state from per-component data; companion systems take Cauchy data g_j.
    pub fn initial_state(&self, data: Vec<SpectralField>) -> Result<VectorField, CliError> {
        match self {
            Model::Companion(s) => s.cauchy_data(&data).map_err(config),
            _ => VectorField::new(data).map_err(config),
        }
    }

    /// Number of independent data components: m for companion systems, the system size otherwise.
    pub fn data_components(&self) -> usize {
        match self {
            Model::Companion(s) => s.m,
            Model::Explicit { roots, .. } => roots.roots.len(),
            Model::SecondOrder(_) => 2,
        }
    }
}
