//! Batch front end for the agent runtime: run tasks, evaluate suites,
//! inspect traces, and manage tool registries. Settings resolve in a fixed
//! order (defaults, then --config file, then TANDEM_* environment variables,
//! then flags); --show-config prints the result of that resolution and
//! exits, and feeding the printout back through --config reproduces the run.

mod commands;
mod error;
mod out;
mod wiring;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tandem_core::config::{AppConfig, JudgeProviderKind};
use tandem_core::engine::AblationFlags;

use error::CliError;

#[derive(Parser)]
#[command(name = "tandem", version, about = "Agent runtime and evaluation toolkit")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Settings file applied over compiled defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Print the resolved settings as TOML and exit instead of running.
    #[arg(long, global = true)]
    show_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one task and write its execution trace.
    Run(RunFlags),
    /// Evaluate a fixture suite across subsystem variants.
    Eval(EvalFlags),
    /// Render a stored trace for human review.
    Inspect(InspectFlags),
    /// Registry utilities.
    Tools {
        #[command(subcommand)]
        command: ToolsCommand,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantFlag {
    /// Static prompt, full candidate list, no history folding.
    Base,
    /// Adaptive prompts only.
    Bp,
    /// Adaptive prompts plus retrieval-gated tool selection.
    Bpt,
    /// All subsystems on.
    Full,
}

impl VariantFlag {
    fn flags(self) -> AblationFlags {
        match self {
            VariantFlag::Base => AblationFlags::BASE,
            VariantFlag::Bp => AblationFlags::PROMPT_ONLY,
            VariantFlag::Bpt => AblationFlags::PROMPT_AND_RETRIEVAL,
            VariantFlag::Full => AblationFlags::FULL,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum JudgeFlag {
    /// Deterministic lexical-overlap judge; no credentials needed.
    Stub,
    /// Judge endpoint named by the settings (judge.url / TANDEM_JUDGE_URL).
    Remote,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["fixtures", "query"])))]
struct RunFlags {
    /// Fixture file holding the task to run.
    #[arg(long, value_name = "PATH")]
    fixtures: Option<PathBuf>,
    /// Task id within the fixture file; defaults to the first task.
    #[arg(long, value_name = "ID", requires = "fixtures")]
    task: Option<String>,
    /// Ad hoc single-turn request offered every registry tool.
    #[arg(long, value_name = "TEXT")]
    query: Option<String>,
    #[arg(long, value_name = "PATH", default_value = "assets/registry.jsonl")]
    registry: PathBuf,
    #[arg(long, value_name = "PATH", default_value = "assets/profile.toml")]
    profile: PathBuf,
    /// Subsystem variant for this run; overrides the configured one.
    #[arg(long, value_enum, value_name = "VARIANT")]
    ablation: Option<VariantFlag>,
    /// Output file for the executed trace.
    #[arg(long, value_name = "PATH", default_value = "trace.jsonl")]
    trace_out: PathBuf,
}

#[derive(Args)]
struct EvalFlags {
    /// Fixture suite to evaluate.
    #[arg(long, value_name = "PATH")]
    fixtures: PathBuf,
    #[arg(long, value_name = "PATH", default_value = "assets/registry.jsonl")]
    registry: PathBuf,
    #[arg(long, value_name = "PATH", default_value = "assets/profile.toml")]
    profile: PathBuf,
    /// Subsystem variants to compare, in report order.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        value_name = "LIST",
        default_value = "base,bp,bpt,full"
    )]
    variants: Vec<VariantFlag>,
    /// Weight for wrong tool calls; overrides the configured value.
    #[arg(long, value_name = "W")]
    lambda_w: Option<f64>,
    /// Weight for missing tool calls; overrides the configured value.
    #[arg(long, value_name = "M")]
    lambda_m: Option<f64>,
    /// Also score final answers with the named judge.
    #[arg(long, value_enum, value_name = "KIND")]
    judge: Option<JudgeFlag>,
    /// Directory for per-variant reports and the comparison table.
    #[arg(long, value_name = "DIR", default_value = "reports")]
    report_dir: PathBuf,
    /// Concurrent task runs per variant.
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct InspectFlags {
    /// Trace file to render.
    #[arg(value_name = "TRACE")]
    trace: PathBuf,
    /// Only the trace with this task id.
    #[arg(long, value_name = "ID")]
    task: Option<String>,
}

#[derive(Subcommand)]
enum ToolsCommand {
    /// Print every tool a registry (or a running server) offers.
    List {
        #[arg(long, value_name = "PATH", default_value = "assets/registry.jsonl")]
        registry: PathBuf,
        /// Query a running tool server instead of reading a file.
        #[arg(long, value_name = "ADDR")]
        remote: Option<String>,
    },
    /// Check a registry file against the schema rules.
    Validate {
        #[arg(long, value_name = "PATH", default_value = "assets/registry.jsonl")]
        registry: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = dispatch(cli) {
        eprintln!("error: {error}");
        std::process::exit(error.code());
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut config = AppConfig::load(cli.config.as_deref())?;

    // Flags are the last resolution layer; fold them into the settings tree
    // before anything runs so --show-config captures them too.
    match &cli.command {
        Some(Command::Run(flags)) => {
            if let Some(variant) = flags.ablation {
                config.engine.ablation = variant.flags();
            }
        }
        Some(Command::Eval(flags)) => {
            if let Some(w) = flags.lambda_w {
                config.eval.lambda_w = w;
            }
            if let Some(m) = flags.lambda_m {
                config.eval.lambda_m = m;
            }
            match flags.judge {
                Some(JudgeFlag::Stub) => config.judge.provider = JudgeProviderKind::Stub,
                Some(JudgeFlag::Remote) => config.judge.provider = JudgeProviderKind::Remote,
                None => {}
            }
        }
        Some(Command::Inspect(_)) | Some(Command::Tools { .. }) | None => {}
    }
    config.validate()?;

    if cli.show_config {
        out::emit(&config.to_toml());
        return Ok(());
    }

    let command = match cli.command {
        Some(command) => command,
        // arg_required_else_help catches the bare invocation; reaching here
        // means flags were given without a subcommand or --show-config.
        None => {
            let mut cmd = <Cli as clap::CommandFactory>::command();
            cmd.print_help().ok();
            std::process::exit(2);
        }
    };

    match command {
        Command::Run(flags) => commands::run::execute(
            &config,
            commands::run::RunArgs {
                fixtures: flags.fixtures,
                task: flags.task,
                query: flags.query,
                registry: flags.registry,
                profile: flags.profile,
                trace_out: flags.trace_out,
            },
        ),
        Command::Eval(flags) => {
            let mut variants: Vec<AblationFlags> = Vec::new();
            for variant in &flags.variants {
                let resolved = variant.flags();
                if !variants.contains(&resolved) {
                    variants.push(resolved);
                }
            }
            commands::eval::execute(
                &config,
                commands::eval::EvalArgs {
                    fixtures: flags.fixtures,
                    registry: flags.registry,
                    profile: flags.profile,
                    variants,
                    judge: flags.judge.is_some(),
                    report_dir: flags.report_dir,
                    jobs: flags.jobs,
                },
            )
        }
        Command::Inspect(flags) => commands::inspect::execute(commands::inspect::InspectArgs {
            trace: flags.trace,
            task: flags.task,
        }),
        Command::Tools { command } => match command {
            ToolsCommand::List { registry, remote } => {
                commands::tools::list(commands::tools::ListArgs { registry, remote })
            }
            ToolsCommand::Validate { registry } => {
                commands::tools::validate(commands::tools::ValidateArgs { registry })
            }
        },
    }
}
