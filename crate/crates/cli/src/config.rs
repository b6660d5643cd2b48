//! Config documents, one per subcommand. Unknown keys are rejected and every
//! default is filled in before the config is echoed to the outputs.

use serde::{Deserialize, Serialize};
use sparse_amp::amp::AmpConfig;
use sparse_amp::codes::CodeOperator;
use sparse_amp::operators::{CouplingEnsemble, OperatorKind};
use sparse_amp::priors::PriorSpec;
use sparse_amp::state_evolution::Quadrature;

fn one_million() -> usize {
    1_000_000
}
fn se_tol() -> f64 {
    1e-10
}
fn se_t_max() -> usize {
    10_000
}
fn curve_points() -> usize {
    400
}
fn table_points() -> usize {
    120
}
fn transition_tol() -> f64 {
    1e-4
}
fn trials() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmpRunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Signal length.
    pub n: usize,
    pub prior: PriorSpec,
    pub operator: OperatorChoice,
    /// Noise variance added to the measurements.
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub amp: AmpConfig,
    #[serde(default)]
    pub full_tap: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorChoice {
    pub kind: OperatorKind,
    /// Measurement rate of a dense operator.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Coupling pattern for `gaussian` and `hadamard` kinds; homogeneous at
    /// rate `alpha` when absent.
    #[serde(default)]
    pub ensemble: Option<CouplingEnsemble>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeRunConfig {
    #[serde(default)]
    pub seed: u64,
    pub family: SeFamily,
    #[serde(default = "se_tol")]
    pub tol: f64,
    #[serde(default = "se_t_max")]
    pub t_max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SeFamily {
    Bigaussian {
        rho: f64,
        eps: f64,
        #[serde(default)]
        delta: f64,
        alphas: Vec<f64>,
        #[serde(default)]
        quadrature: Quadrature,
    },
    Sections {
        b: usize,
        snr: f64,
        rates: Vec<f64>,
        #[serde(default = "one_million")]
        samples: usize,
        #[serde(default = "table_points")]
        table_points: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialRunConfig {
    #[serde(default)]
    pub seed: u64,
    pub family: PotentialFamilyConfig,
    /// Measurement rates or code rates at which to draw the curve.
    pub controls: Vec<f64>,
    #[serde(default = "curve_points")]
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialFamilyConfig {
    Bigaussian {
        rho: f64,
        eps: f64,
        #[serde(default)]
        delta: f64,
    },
    Sections {
        b: usize,
        snr: f64,
        #[serde(default = "one_million")]
        samples: usize,
        #[serde(default = "table_points")]
        table_points: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDiagramConfig {
    #[serde(default)]
    pub seed: u64,
    pub family: DiagramFamily,
    #[serde(default = "transition_tol")]
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DiagramFamily {
    /// Rows over `rho`, control `alpha` in `[lo, hi]`.
    Bigaussian {
        rhos: Vec<f64>,
        eps: f64,
        #[serde(default)]
        delta: f64,
        lo: f64,
        hi: f64,
    },
    /// Rows over the section size, control `R` in `[lo, hi]`.
    Sections {
        bs: Vec<usize>,
        snr: f64,
        lo: f64,
        hi: f64,
        #[serde(default = "one_million")]
        samples: usize,
        #[serde(default = "table_points")]
        table_points: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodesConfig {
    #[serde(default)]
    pub seed: u64,
    /// Number of sections.
    pub l: usize,
    pub b: usize,
    pub snr: f64,
    pub rates: Vec<f64>,
    #[serde(default = "trials")]
    pub trials: usize,
    pub variants: Vec<CodeVariant>,
    #[serde(default)]
    pub amp: AmpConfig,
    /// Adds a wall-clock column; the CSV is then no longer reproducible.
    #[serde(default)]
    pub record_time: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeVariant {
    pub name: String,
    pub operator: CodeOperator,
    /// Exponential power allocation over this many groups.
    #[serde(default)]
    pub power_groups: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustEcConfig {
    #[serde(default)]
    pub seed: u64,
    pub n: usize,
    pub gammas: Vec<f64>,
    pub rho: f64,
    pub eps: f64,
    #[serde(default = "trials")]
    pub trials: usize,
}
