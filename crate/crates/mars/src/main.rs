use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mars::commands::DumpFormat;
use mars::{
    cmd_ablate, cmd_ablate_checks, cmd_dump_kb, cmd_run, cmd_score, fixtures, load_config, CliError, Overrides,
};
use mars_core::domain::{Condition, Enforcement};

/// Robot-team kernel: run episodes, score traces and compare conditions.
#[derive(Parser)]
#[command(name = "mars", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured seed and write traces, checks and reports.
    Run(RunArgs),
    /// Score trace files (or re-total check files) into a report table.
    Score {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, env = "MARS_OUTPUT", default_value = "out")]
        output: PathBuf,
    },
    /// Paired baseline and with-KB runs, or a report over coded check files.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Number of seeds from the config to run under each condition.
        #[arg(long, env = "MARS_RUNS")]
        runs: Option<usize>,
        /// Check files to compare instead of running episodes.
        #[arg(long, num_args = 1.., conflicts_with = "config")]
        checks: Vec<PathBuf>,
    },
    /// Print the grant matrix, workflow edges and cue map of a knowledge base.
    DumpKb {
        #[arg(long, env = "MARS_KB")]
        kb: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Install the bundled fixtures into a directory.
    Fixtures {
        #[arg(long, default_value = "mars-fixtures")]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, env = "MARS_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "MARS_CONDITION")]
    condition: Option<Condition>,
    #[arg(long, env = "MARS_ENFORCEMENT")]
    enforcement: Option<Enforcement>,
    /// Comma-separated seed list.
    #[arg(long, env = "MARS_SEEDS", value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, env = "MARS_OUTPUT")]
    output: Option<PathBuf>,
    #[arg(long, env = "MARS_JOBS")]
    jobs: Option<usize>,
    #[arg(long, env = "MARS_LLM_ENDPOINT", hide_env_values = true)]
    llm_endpoint: Option<String>,
    #[arg(long, env = "MARS_LLM_MODEL")]
    llm_model: Option<String>,
    #[arg(long, env = "MARS_LLM_API_KEY_VAR")]
    llm_api_key_var: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            condition: self.condition,
            enforcement: self.enforcement,
            seeds: self.seeds.clone(),
            output: self.output.clone(),
            jobs: self.jobs,
            llm_endpoint: self.llm_endpoint.clone(),
            llm_model: self.llm_model.clone(),
            llm_api_key_var: self.llm_api_key_var.clone(),
        }
    }

    fn load(&self) -> Result<mars::RunConfig, CliError> {
        let path = self.config.as_ref().ok_or_else(|| CliError::Usage("--config is required".to_string()))?;
        Ok(load_config(path, &self.overrides())?)
    }
}

fn print(outcome: &mars::Outcome) -> ExitCode {
    for line in &outcome.lines {
        println!("{line}");
    }
    if outcome.aborted() > 0 {
        eprintln!("{} run(s) aborted", outcome.aborted());
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run(args) => Ok(print(&cmd_run(&args.load()?)?)),
        Command::Score { inputs, output } => {
            let outcome = cmd_score(&inputs, &output)?;
            for line in &outcome.lines {
                println!("{line}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Ablate { run, runs, checks } => {
            if checks.is_empty() {
                Ok(print(&cmd_ablate(&run.load()?, runs)?))
            } else {
                let output = run.output.clone().unwrap_or_else(|| PathBuf::from("out"));
                Ok(print(&cmd_ablate_checks(&checks, &output)?))
            }
        }
        Command::DumpKb { kb, format } => {
            let format = match format {
                Format::Text => DumpFormat::Text,
                Format::Json => DumpFormat::Json,
            };
            print!("{}", cmd_dump_kb(kb.as_deref(), format)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Fixtures { output } => {
            let written = fixtures::install(&output)?;
            println!("installed {} files into {}", written.len(), output.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
