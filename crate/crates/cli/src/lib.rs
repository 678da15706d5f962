//! `tdm`: pipeline stages as subcommands over a flat artifact directory.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use tdm_core::nextloc::{ModelKind, Resolution};
use tdm_core::synthetic::SyntheticSpec;

use crate::commands::Session;
pub use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "tdm", version, about = "Capacity-aware location recommendation from mobile phone records")]
pub struct Cli {
    /// Pipeline config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config's.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic city and a matching config.json.
    GenSynthetic(SyntheticArgs),
    /// Parse CDR rows into trajectories and visit profiles.
    Ingest,
    /// Extract hourly O-D matrices, split into traveler and background trips.
    Od,
    /// Route O-D trips and scale them to vehicles with traffic counts.
    Assign,
    /// Fit the latent location-preference model.
    FitPref,
    /// Build the preference-only and capacity-constrained plans.
    Recommend,
    /// Simulate one compliance rate.
    Simulate {
        /// Compliance rate; defaults to scenario.compliance_rate.
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Sweep compliance rates and tolerable excess throughput.
    Sweep,
    /// Evaluate next-location predictors with leave-last-out.
    Predict {
        #[arg(long, value_enum)]
        resolution: Option<ResolutionArg>,
        /// Repeatable; defaults to nextloc.models.
        #[arg(long = "model", value_enum)]
        models: Vec<ModelArg>,
    },
    /// Every stage from ingest to predict.
    Run,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ResolutionArg {
    Tower,
    Merged,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ModelArg {
    Naive,
    Markov,
    Rnn,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    /// JSON file with generator settings; flags override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub travelers: Option<usize>,
    #[arg(long)]
    pub residents: Option<usize>,
    /// Rank of the true preference matrix.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub preference_noise: Option<f64>,
    #[arg(long)]
    pub count_noise: Option<f64>,
}

impl SyntheticArgs {
    fn spec(&self, seed: Option<u64>) -> Result<SyntheticSpec, CliError> {
        let mut spec = match &self.spec {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => SyntheticSpec::default(),
        };
        let set = |v: Option<usize>, dst: &mut usize| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(self.nodes, &mut spec.nodes);
        set(self.travelers, &mut spec.travelers);
        set(self.residents, &mut spec.residents);
        set(self.rank, &mut spec.rank);
        if let Some(v) = self.preference_noise {
            spec.preference_noise = v;
        }
        if let Some(v) = self.count_noise {
            spec.count_noise = v;
        }
        match seed {
            Some(s) => spec.seed = s,
            None if self.spec.is_none() => {
                return Err(CliError::Usage("gen-synthetic needs --seed (or a --spec file with a seed)".into()))
            }
            None => {}
        }
        Ok(spec)
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Command::GenSynthetic(args) = &cli.command {
        return commands::gen_synthetic(&args.spec(cli.seed)?, &cli.out);
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required for this subcommand".into()))?;
    let session = Session::new(config::load(path, cli.seed)?, &cli.out)?;
    match &cli.command {
        Command::GenSynthetic(_) => unreachable!(),
        Command::Ingest => commands::ingest(&session),
        Command::Od => commands::od(&session),
        Command::Assign => commands::assign(&session),
        Command::FitPref => commands::fit_pref(&session),
        Command::Recommend => commands::recommend(&session),
        Command::Simulate { rho } => {
            if rho.is_some_and(|r| !(0.0..=1.0).contains(&r)) {
                return Err(CliError::Usage("--rho must be in [0, 1]".into()));
            }
            commands::simulate_cmd(&session, *rho)
        }
        Command::Sweep => commands::sweep(&session),
        Command::Predict { resolution, models } => {
            let resolution = resolution.map(|r| match r {
                ResolutionArg::Tower => Resolution::Tower,
                ResolutionArg::Merged => Resolution::Merged,
            });
            let models: Vec<ModelKind> = models
                .iter()
                .map(|m| match m {
                    ModelArg::Naive => ModelKind::Naive,
                    ModelArg::Markov => ModelKind::Markov,
                    ModelArg::Rnn => ModelKind::Rnn,
                })
                .collect();
            commands::predict(&session, resolution, &models)
        }
        Command::Run => commands::run_all(&session),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
