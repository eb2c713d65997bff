use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use contactkit_cli::{exit_code, run_to_dir, trajectory, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "contactkit", version, about = "Verify contact-geometric identities and integrate trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured suites and write the JSON report.
    Run {
        config: PathBuf,
        /// Output directory; defaults to the config's `output.dir`, then `.`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Integrate X_H from x0 for time t and write `trajectory.csv`.
    Trajectory {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x0: Vec<f64>,
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(config: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| config.output.dir.clone()).unwrap_or_else(|| PathBuf::from("."))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<i32, CliError> = match cli.command {
        Command::Run { config, out, seed } => RunConfig::load(&config).and_then(|mut c| {
            if let Some(seed) = seed {
                c.seed = seed;
            }
            let dir = out_dir(&c, out);
            let report = run_to_dir(&c, &dir)?;
            for suite in &report.suites {
                let failed = suite.identities.iter().filter(|e| !e.pass).count();
                eprintln!("{:<20} {} ({failed} failing identities)", suite.name, if suite.pass { "pass" } else { "FAIL" });
            }
            Ok(exit_code(&report))
        }),
        Command::Trajectory { config, x0, t, out } => RunConfig::load(&config).and_then(|c| {
            let dir = out_dir(&c, out);
            std::fs::create_dir_all(&dir).map_err(|e| CliError::Io { path: dir.clone(), source: e })?;
            let outcome = trajectory::write(&c, &x0, t, &dir.join("trajectory.csv"))?;
            eprintln!("{} rows, status {}", outcome.samples.len(), outcome.status.as_str());
            Ok(0)
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
