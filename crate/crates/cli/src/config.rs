//! Run configuration: one JSON document.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use contactkit::dynamics::{FlowOptions, Method};
use contactkit::scenarios::{self, Potential, Scenario};
use serde::{Deserialize, Serialize};

use crate::suites::{checklist, Suite};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    #[serde(default = "all_suites")]
    pub suites: Vec<Suite>,
    /// Points per pointwise identity.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Starting points for identities that integrate flows.
    #[serde(default = "default_flow_samples")]
    pub flow_samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Half width of the sampling box in every coordinate.
    #[serde(default = "default_sample_half_width")]
    pub sample_half_width: f64,
    /// Equilibria of the zero-set dynamics are searched in this cube.
    #[serde(default = "default_equilibrium_half_width")]
    pub equilibrium_half_width: f64,
    #[serde(default = "default_equilibrium_grid")]
    pub equilibrium_grid: usize,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Overrides of per-identity thresholds, keyed by identity id.
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub trajectories: Vec<TrajectorySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// `dissipative`, `linear-potential`, `harmonic` or `cubic`.
    pub name: String,
    #[serde(default = "one")]
    pub gamma: f64,
    /// Only meaningful for `dissipative`; the other names fix it.
    #[serde(default)]
    pub potential: Option<Potential>,
    /// Half width of the `(q, p)` box of the chart.
    #[serde(default)]
    pub half_width: Option<f64>,
}

/// `{"method": "rk45", "rtol", "atol"}` or `{"method": "rk4", "step"}`,
/// either with an optional `fd_step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "IntegratorRepr", into = "IntegratorRepr")]
pub struct IntegratorConfig {
    pub method: Method,
    pub fd_step: f64,
}

// serde's `flatten` ignores `deny_unknown_fields`, hence the tagged mirror.
#[derive(Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
enum IntegratorRepr {
    Rk4 {
        step: f64,
        #[serde(default = "default_fd_step")]
        fd_step: f64,
    },
    Rk45 {
        rtol: f64,
        atol: f64,
        #[serde(default = "default_fd_step")]
        fd_step: f64,
    },
}

impl From<IntegratorRepr> for IntegratorConfig {
    fn from(r: IntegratorRepr) -> Self {
        match r {
            IntegratorRepr::Rk4 { step, fd_step } => Self { method: Method::Rk4 { step }, fd_step },
            IntegratorRepr::Rk45 { rtol, atol, fd_step } => Self { method: Method::Rk45 { rtol, atol }, fd_step },
        }
    }
}

impl From<IntegratorConfig> for IntegratorRepr {
    fn from(c: IntegratorConfig) -> Self {
        match c.method {
            Method::Rk4 { step } => IntegratorRepr::Rk4 { step, fd_step: c.fd_step },
            Method::Rk45 { rtol, atol } => IntegratorRepr::Rk45 { rtol, atol, fd_step: c.fd_step },
        }
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { method: FlowOptions::default().method, fd_step: default_fd_step() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// Scales `s_i` of the diagonal metric `g_ii = s_i (1 + q_i^2)`.
    #[serde(default = "default_diagonal")]
    pub diagonal: Vec<f64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { diagonal: default_diagonal() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for the report and trajectory CSVs; `--out` overrides it.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_report_name")]
    pub report: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, report: default_report_name() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub name: String,
    pub x0: Vec<f64>,
    pub t: f64,
}

fn all_suites() -> Vec<Suite> {
    Suite::ALL.to_vec()
}
fn default_samples() -> usize {
    100
}
fn default_flow_samples() -> usize {
    20
}
fn default_seed() -> u64 {
    42
}
fn default_sample_half_width() -> f64 {
    1.0
}
fn default_equilibrium_half_width() -> f64 {
    5.0
}
fn default_equilibrium_grid() -> usize {
    3
}
fn default_fd_step() -> f64 {
    1e-5
}
fn default_diagonal() -> Vec<f64> {
    vec![1.0, 2.5]
}
fn default_report_name() -> String {
    "report.json".into()
}
fn one() -> f64 {
    1.0
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.suites.is_empty() {
            return bad("no suites selected".into());
        }
        for (i, s) in self.suites.iter().enumerate() {
            if self.suites[..i].contains(s) {
                return bad(format!("suite {} listed twice", s.name()));
            }
        }
        if self.samples == 0 || self.flow_samples == 0 {
            return bad("samples and flow_samples must be positive".into());
        }
        if !(self.sample_half_width > 0.0) || !(self.equilibrium_half_width > 0.0) {
            return bad("sampling and equilibrium boxes must have positive half width".into());
        }
        if self.equilibrium_grid < 2 {
            return bad("equilibrium_grid must be at least 2".into());
        }
        if !(self.integrator.fd_step > 0.0) {
            return bad("integrator fd_step must be positive".into());
        }
        match self.integrator.method {
            Method::Rk4 { step } if !(step > 0.0) => return bad("rk4 step must be positive".into()),
            Method::Rk45 { rtol, atol } if !(rtol > 0.0 && atol > 0.0) => {
                return bad("rk45 tolerances must be positive".into())
            }
            _ => {}
        }
        if self.output.report.is_empty() {
            return bad("output.report must name a file".into());
        }
        if self.sampler.diagonal.len() != 2 || self.sampler.diagonal.iter().any(|s| !(*s > 0.0)) {
            return bad("sampler.diagonal needs two positive scales".into());
        }
        for (id, value) in &self.thresholds {
            if !checklist().iter().any(|c| c.id == id) {
                return bad(format!("unknown identity in thresholds: {id}"));
            }
            if !(*value >= 0.0) {
                return bad(format!("threshold for {id} must be nonnegative"));
            }
        }
        for t in &self.trajectories {
            if t.x0.len() != 5 {
                return bad(format!("trajectory {} needs a 5-component x0", t.name));
            }
        }
        self.potential()?;
        Ok(())
    }

    pub fn potential(&self) -> Result<Potential, CliError> {
        let fixed = match self.scenario.name.as_str() {
            "dissipative" => return Ok(self.scenario.potential.unwrap_or(Potential::Linear)),
            "linear-potential" => Potential::Linear,
            "harmonic" => Potential::Harmonic,
            "cubic" => Potential::Cubic,
            other => return Err(CliError::Config(format!("unknown scenario: {other}"))),
        };
        match self.scenario.potential {
            Some(p) if p != fixed => Err(CliError::Config(format!(
                "scenario {} fixes the {} potential",
                self.scenario.name,
                fixed.name()
            ))),
            _ => Ok(fixed),
        }
    }

    /// The dissipative system; an invalid `gamma` is a configuration error.
    pub fn build_scenario(&self) -> Result<Scenario, CliError> {
        let potential = self.potential()?;
        let half = self.scenario.half_width.unwrap_or(scenarios::PHASE_HALF_WIDTH);
        scenarios::dissipative_in(self.scenario.gamma, potential, half).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn flow_options(&self) -> FlowOptions {
        FlowOptions { method: self.integrator.method, fd_step: self.integrator.fd_step, ..FlowOptions::default() }
    }

    pub fn threshold(&self, id: &str, default: f64) -> f64 {
        self.thresholds.get(id).copied().unwrap_or(default)
    }
}
