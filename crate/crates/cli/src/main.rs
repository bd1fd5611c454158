//! `nlwr`: experiment harness for the nonlocal Lagrangian traffic schemes.
//!
//! Exit status: 0 on success, 1 on runtime or I/O failure, 2 on a bad
//! configuration or command line, 3 when a verification campaign finds
//! violations.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Output};
use config::{ExperimentConfig, Origin, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "nlwr", version, about = "Nonlocal Lagrangian traffic-flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Local, Eulerian and Lagrangian Follow-the-Leaders models from the same start
    CompareFtl(Settings),
    /// L1 distance to the local entropy solution as the filter shrinks
    ZeroFilter(Settings),
    /// Filtered gap Δz Σ|y - w| for several kernels and filter sizes
    FilterStudy {
        #[command(flatten)]
        settings: Settings,
        /// Use ℓ = 1/10000 and α ∈ {1/64, 1/256} instead of the desk-scale schedule
        #[arg(long)]
        paper_scale: bool,
    },
    /// Seeded property campaign over the scheme's discrete estimates
    Verify(Settings),
    /// A single run of the coupled scheme
    Simulate(Settings),
}

/// Every flag mirrors a config key and wins over the file.
#[derive(Args, Default)]
struct Settings {
    /// key = value experiment manifest
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory (also settable with NLWR_OUT_DIR)
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    kernel: Option<String>,
    /// Comma-separated kernel names
    #[arg(long)]
    kernels: Option<String>,
    /// Filter size or comma-separated list; `p/q` fractions accepted
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    ell: Option<String>,
    #[arg(long)]
    velocity: Option<String>,
    /// box:inside,outside,lo,hi | constant:rho | piecewise:v0,b1,v1,...
    #[arg(long, allow_hyphen_values = true)]
    profile: Option<String>,
    /// Position of the first vehicle
    #[arg(long = "a", allow_hyphen_values = true)]
    a: Option<String>,
    /// End of the road window
    #[arg(long = "b", allow_hyphen_values = true)]
    b: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    t_end: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    safety: Option<String>,
    #[arg(long)]
    boundary: Option<String>,
    #[arg(long)]
    record_every: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    /// FtL time step (defaults to ℓ)
    #[arg(long, allow_hyphen_values = true)]
    dt: Option<String>,
    /// Cell width of the Engquist–Osher reference (defaults to ℓ/8)
    #[arg(long, allow_hyphen_values = true)]
    ref_dx: Option<String>,
}

impl Settings {
    fn flags(&self) -> [(&'static str, &Option<String>); 16] {
        [
            ("kernel", &self.kernel),
            ("kernels", &self.kernels),
            ("alpha", &self.alpha),
            ("ell", &self.ell),
            ("velocity", &self.velocity),
            ("profile", &self.profile),
            ("a", &self.a),
            ("b", &self.b),
            ("t_end", &self.t_end),
            ("safety", &self.safety),
            ("boundary", &self.boundary),
            ("record_every", &self.record_every),
            ("seed", &self.seed),
            ("trials", &self.trials),
            ("dt", &self.dt),
            ("ref_dx", &self.ref_dx),
        ]
    }

    /// File, then flags on top; returns the merged config and output directory.
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf), CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let mut flags = ExperimentConfig::default();
        for (key, value) in self.flags() {
            if let Some(v) = value {
                flags.set(key, v, &Origin::Flag)?;
            }
        }
        cfg.overlay(flags);
        let env = std::env::var(OUT_DIR_ENV).ok();
        let dir = cfg.resolve_out_dir(self.out.as_deref(), env.as_deref(), "nlwr-out");
        Ok((cfg, dir))
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let settings = match &command {
        Command::CompareFtl(s) | Command::ZeroFilter(s) | Command::Verify(s) | Command::Simulate(s) => s,
        Command::FilterStudy { settings, .. } => settings,
    };
    let (cfg, dir) = settings.resolve()?;
    let mut out = Output::new(dir)?;
    let result = match &command {
        Command::CompareFtl(_) => commands::cmd_compare_ftl(&cfg, &mut out),
        Command::ZeroFilter(_) => commands::cmd_zero_filter(&cfg, &mut out),
        Command::FilterStudy { paper_scale, .. } => commands::cmd_filter_study(&cfg, *paper_scale, &mut out),
        Command::Verify(_) => commands::cmd_verify(&cfg, &mut out),
        Command::Simulate(_) => commands::cmd_simulate(&cfg, &mut out),
    };
    if !out.written.is_empty() {
        println!("wrote {} files to {}", out.written.len(), out.dir().display());
    }
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
