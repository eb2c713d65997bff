//! Batch front end: run verification suites for a configured scenario and
//! write a JSON report, and integrate trajectories to CSV.
//!
//! Exit codes: 0 when every selected suite passes, 2 on an identity failure,
//! 3 on a configuration error.

pub mod config;
pub mod report;
pub mod suites;
pub mod trajectory;

use std::path::{Path, PathBuf};

pub use config::RunConfig;
pub use report::{IdentityEntry, Report, SuiteReport};
pub use suites::{checklist, Suite};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Io { .. } => 1,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

/// Runs the selected suites in order.
pub fn run(config: &RunConfig) -> Result<Report, CliError> {
    config.validate()?;
    let scenario = config.build_scenario()?;
    let suites: Vec<SuiteReport> = config.suites.iter().map(|s| suites::run_suite(*s, config, &scenario)).collect();
    Ok(Report {
        scenario: report::ScenarioSummary {
            name: config.scenario.name.clone(),
            potential: scenario.potential.name().into(),
            gamma: scenario.gamma,
            half_width: scenario.surface.surface_chart().upper()[0],
        },
        seed: config.seed,
        pass: suites.iter().all(|s| s.pass),
        suites,
    })
}

/// Pretty JSON with a trailing newline; identical reports give identical bytes.
pub fn render(report: &Report) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

pub fn exit_code(report: &Report) -> i32 {
    if report.pass {
        0
    } else {
        2
    }
}

/// `run` plus writing the report and any configured trajectories into `out`.
pub fn run_to_dir(config: &RunConfig, out: &Path) -> Result<Report, CliError> {
    let report = run(config)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let path = out.join(&config.output.report);
    std::fs::write(&path, render(&report)).map_err(|e| CliError::io(&path, e))?;
    for spec in &config.trajectories {
        let path = out.join(format!("{}.csv", spec.name));
        trajectory::write(config, &spec.x0, spec.t, &path)?;
    }
    Ok(report)
}
