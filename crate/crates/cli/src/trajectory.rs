//! Trajectories of `X_H` as CSV: `t,x0,...,x4,status`, then a `#` trailer
//! row with the conservation probe.

use std::io::Write;
use std::path::Path;

use contactkit::dynamics::{self, FlowOutcome};

use crate::config::RunConfig;
use crate::CliError;

/// Integrates from `x0` for time `t`. Leaving the chart or blowing up ends
/// the CSV early with the matching status; it is not an error.
pub fn integrate(config: &RunConfig, x0: &[f64], t: f64) -> Result<(FlowOutcome, String), CliError> {
    if x0.len() != 5 {
        return Err(CliError::Config(format!("x0 needs 5 components, got {}", x0.len())));
    }
    if !t.is_finite() {
        return Err(CliError::Config("t must be finite".into()));
    }
    let scenario = config.build_scenario()?;
    let system = &scenario.system;
    if !system.chart().contains(x0) {
        return Err(CliError::Config("x0 lies outside the chart".into()));
    }
    let options = config.flow_options().with_escape_box(system.chart().clone());
    let outcome = dynamics::integrate(&system.hamiltonian_vector_field(), x0, t, &options);
    let trailer = match dynamics::probe_samples(system, &outcome.samples) {
        Ok(p) => format!(
            "# probe,h_rate_residual={:e},energy_drift={},samples={}",
            p.h_rate_residual,
            p.energy_drift.map_or("none".into(), |d| format!("{d:e}")),
            p.samples
        ),
        Err(e) => format!("# probe,error={e}"),
    };
    Ok((outcome, trailer))
}

pub fn to_csv(outcome: &FlowOutcome, trailer: &str) -> String {
    let mut buf = Vec::new();
    outcome.write_csv(&mut buf, true).expect("in-memory write");
    writeln!(buf, "{trailer}").expect("in-memory write");
    String::from_utf8(buf).expect("ascii")
}

pub fn write(config: &RunConfig, x0: &[f64], t: f64, path: &Path) -> Result<FlowOutcome, CliError> {
    let (outcome, trailer) = integrate(config, x0, t)?;
    std::fs::write(path, to_csv(&outcome, &trailer)).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    Ok(outcome)
}
