//! Run configuration: one JSON document, validated against the published schema.
//!
//! Every field has a default except `system`, so a minimal config names only
//! the system. The resolved document (defaults filled in) is what artifacts embed.

use std::path::PathBuf;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 0xC0FFEE;

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Spatial dimension n of the torus.
    #[serde(default = "one_usize")]
    pub dimension: usize,
    /// Grid points per axis; one entry per dimension.
    #[serde(default = "default_grid")]
    pub grid: Vec<usize>,
    pub system: SystemConfig,
    /// Time horizon T.
    #[serde(default = "one_f64")]
    pub horizon: f64,
    /// Seed of every Monte-Carlo generator.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output directory; `--out` takes precedence. Not embedded in artifacts.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub smoothing: SmoothingConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub wavefront: WavefrontConfig,
    #[serde(default)]
    pub sublevel: SublevelConfig,
    #[serde(default)]
    pub xi: XiConfig,
    #[serde(default)]
    pub weyl: WeylConfig,
    #[serde(default)]
    pub lpscan: LpScanConfig,
}

fn one_usize() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

fn default_grid() -> Vec<usize> {
    vec![256]
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    /// P = diag(roots) + B with explicit symbols.
    Explicit {
        roots: Vec<String>,
        /// Order-0 coupling; zero when absent.
        #[serde(default)]
        b: Option<MatrixConfig>,
    },
    /// First-order system of a factorized m-th order operator.
    Companion {
        m: usize,
        /// λ_j of the factors D_t + Op(λ_j).
        roots: Vec<String>,
        #[serde(default)]
        c: Option<String>,
        #[serde(default)]
        b: Vec<LowerTermConfig>,
        /// c_j^J of the Cauchy data map; zero when absent.
        #[serde(default)]
        cauchy: Vec<CauchyTermConfig>,
        /// Use e_{|J|−j}(λ_J) for every c_j^J instead of `cauchy`.
        #[serde(default)]
        factorized_cauchy: bool,
    },
    /// D_t²u + b D_t u + c u = 0 reduced to a 2×2 system.
    SecondOrder {
        b: String,
        c: String,
        #[serde(default)]
        mu: Option<String>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub re: Vec<Vec<String>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LowerTermConfig {
    /// Ascending distinct factor indices K of ∂^K.
    pub seq: Vec<usize>,
    pub expr: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CauchyTermConfig {
    pub seq: Vec<usize>,
    pub j: usize,
    pub expr: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub mult_tol: f64,
    pub bracket_tol: f64,
    pub bracket_cap: u32,
    pub resolution: usize,
    pub event_tol: f64,
    pub time_tol: f64,
    /// RK4 step of the flows; automatic when absent.
    pub dt: Option<f64>,
    pub energy_tol: f64,
    pub ref_tol: f64,
    pub cfl: f64,
    /// Cosphere samples per axis used to group identical roots.
    pub group_samples: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            mult_tol: 1e-6,
            bracket_tol: 1e-8,
            bracket_cap: 8,
            resolution: 64,
            event_tol: 1e-8,
            time_tol: 1e-10,
            dt: None,
            energy_tol: 1e-6,
            ref_tol: 1e-9,
            cfl: 0.0125,
            group_samples: 64,
        }
    }
}

/// A Gaussian packet amplitude·e^{i freq·x}·exp(−|x − center|²/(2 width²)).
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    /// Component of the system (or Cauchy datum g_j for companion systems).
    #[serde(default)]
    pub component: usize,
    pub center: Vec<f64>,
    pub width: f64,
    pub freq: Vec<f64>,
    /// (re, im).
    #[serde(default = "unit_amplitude")]
    pub amplitude: [f64; 2],
}

fn unit_amplitude() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    /// Picard depth N.
    #[serde(rename = "N")]
    pub n: usize,
    /// Quadrature nodes Q.
    pub nodes: usize,
    /// Solution time; the horizon when absent.
    pub t: Option<f64>,
    pub initial: Vec<PacketConfig>,
    /// Compare against the reference solver.
    pub reference: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            n: 8,
            nodes: 128,
            t: None,
            initial: vec![PacketConfig {
                component: 0,
                center: vec![std::f64::consts::PI],
                width: 0.5,
                freq: vec![4.0],
                amplitude: unit_amplitude(),
            }],
            reference: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingConfig {
    pub levels: Vec<usize>,
    pub bands: Vec<u32>,
    pub t: f64,
    pub nodes: usize,
    pub probes: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { levels: vec![1, 2, 3, 4], bands: vec![3, 4, 5, 6], t: 0.5, nodes: 128, probes: 8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

fn default_seeds() -> Vec<SeedConfig> {
    vec![SeedConfig { x: vec![0.5], xi: vec![1.0] }, SeedConfig { x: vec![2.5], xi: vec![-1.0] }]
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    /// Root sequences J; every pair of root groups when empty.
    pub sequences: Vec<Vec<usize>>,
    pub seeds: Vec<SeedConfig>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { sequences: Vec::new(), seeds: default_seeds() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct WavefrontConfig {
    pub seeds: Vec<SeedConfig>,
    pub max_switches: usize,
}

impl Default for WavefrontConfig {
    fn default() -> Self {
        WavefrontConfig { seeds: default_seeds(), max_switches: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    /// Polynomials in t, coefficients ascending.
    Polynomials { coefficients: Vec<Vec<f64>> },
    /// A symbol in t evaluated at fixed phase points.
    Symbol { expr: String, points: Vec<SeedConfig> },
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SublevelConfig {
    pub family: FamilyConfig,
    pub eps: Vec<f64>,
    /// Zero order bound M.
    #[serde(rename = "M")]
    pub m: usize,
    /// The constant of the Σ^p sets.
    #[serde(rename = "C")]
    pub c: f64,
    /// Uniform samples before boundary bisection.
    pub base: usize,
}

impl Default for SublevelConfig {
    fn default() -> Self {
        SublevelConfig {
            family: FamilyConfig::Polynomials { coefficients: vec![vec![0.25, -1.0, 1.0]] },
            eps: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            m: 2,
            c: 1.0,
            base: 1024,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct XiConfig {
    /// Root sequence J, at least two indices.
    pub j: Vec<usize>,
    pub eps: Vec<f64>,
    pub samples: usize,
    #[serde(rename = "C")]
    pub c: f64,
    /// Condition C order used for the target exponent l/(2M).
    #[serde(rename = "M")]
    pub m: usize,
}

impl Default for XiConfig {
    fn default() -> Self {
        XiConfig { j: vec![0, 1, 0], eps: (2..=10).map(|k| 10f64.powf(-0.5 * k as f64)).collect(), samples: 100_000, c: 1.0, m: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct WeylConfig {
    /// Galerkin cutoff K.
    #[serde(rename = "K")]
    pub cutoff: usize,
    /// Fit window; [0.2, 0.5]·(min speed·K) when absent.
    pub window: Option<(f64, f64)>,
    pub points: usize,
    /// Monte-Carlo samples of the Weyl volume.
    pub samples: usize,
    pub period_seeds: usize,
    pub period_window: (f64, f64),
    pub period_tol: f64,
}

impl Default for WeylConfig {
    fn default() -> Self {
        WeylConfig {
            cutoff: 128,
            window: None,
            points: 400,
            samples: 1_000_000,
            period_seeds: 64,
            period_window: (1.0, 20.0),
            period_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LpPacketConfig {
    Plane { angle: f64 },
    Focusing,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct LpScanConfig {
    pub p_values: Vec<f64>,
    pub bands: Vec<u32>,
    pub t: f64,
    /// s in ⟨D⟩^{sα}.
    pub alpha_scale: f64,
    pub packet: LpPacketConfig,
    pub width: f64,
    pub component: usize,
    #[serde(rename = "N")]
    pub levels: usize,
    pub nodes: usize,
}

impl Default for LpScanConfig {
    fn default() -> Self {
        LpScanConfig {
            p_values: vec![4.0, 4.0 / 3.0],
            bands: vec![3, 4, 5],
            t: 0.5,
            alpha_scale: 1.0,
            packet: LpPacketConfig::Plane { angle: 0.3 },
            width: 0.6,
            component: 0,
            levels: 4,
            nodes: 64,
        }
    }
}

/// The published JSON schema of [`RunConfig`].
pub fn schema() -> Value {
    serde_json::to_value(schemars::schema_for!(RunConfig)).expect("schemas serialize")
}

/// Sets `path` (dot separated) in `doc`; the value is JSON, or a bare string when it does not parse.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) =
        assignment.split_once('=').ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key.path=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override path `{path}` has an empty key")));
    }
    let mut node = doc;
    for key in &keys[..keys.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| CliError::Config(format!("override path `{path}` crosses a non-object")))?;
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node.as_object_mut().ok_or_else(|| CliError::Config(format!("override path `{path}` crosses a non-object")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_value(doc: Value) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(1..=2).contains(&self.dimension) {
            return bad(format!("dimension must be 1 or 2, got {}", self.dimension));
        }
        if self.grid.len() != self.dimension {
            return bad(format!("grid has {} sizes for dimension {}", self.grid.len(), self.dimension));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        Ok(())
    }

    /// Seeds must match the dimension; checked per command since defaults are one-dimensional.
    pub fn check_seeds(&self, seeds: &[SeedConfig]) -> Result<(), CliError> {
        if seeds.iter().any(|s| s.x.len() != self.dimension || s.xi.len() != self.dimension) {
            return Err(CliError::Config("seed x and xi need one entry per dimension".into()));
        }
        Ok(())
    }

    pub fn check_packets(&self) -> Result<(), CliError> {
        for p in &self.solve.initial {
            if p.center.len() != self.dimension || p.freq.len() != self.dimension {
                return Err(CliError::Config("packet center and freq need one entry per dimension".into()));
            }
            if !(p.width > 0.0) {
                return Err(CliError::Config(format!("packet width must be positive, got {}", p.width)));
            }
        }
        Ok(())
    }

    /// The resolved document embedded in artifacts.
    pub fn resolved(&self) -> Value {
        serde_json::to_value(self).expect("configs serialize")
    }
}
