mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use testmap_core::classify::ScopeLevel;
use testmap_core::treemap::MapMode;

/// Unit-testability maps for JVM bytecode.
#[derive(Debug, Parser)]
#[command(name = "testmap", version, about)]
struct Cli {
    /// Knowledge-base config (TOML) appended to the builtin entries.
    #[arg(long, global = true, env = "TESTMAP_KB", value_name = "FILE")]
    kb: Option<PathBuf>,

    /// Worker threads for parsing and analysis (default: all cores).
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze class files and write report.json plus a console summary.
    Analyze(AnalyzeArgs),
    /// Render SVG treemaps from a report.
    Map(MapArgs),
    /// Show why a method is (not) testable.
    Explain(ExplainArgs),
    /// Compare two reports.
    Diff(DiffArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Application classes: directory, jar or class file. Repeatable.
    #[arg(long = "app", value_name = "PATH")]
    app: Vec<PathBuf>,

    /// Dependency classes, used for type resolution only. Repeatable.
    #[arg(long = "dep", value_name = "PATH")]
    dep: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scope {
    Repo,
    Module,
    Package,
}

impl From<Scope> for ScopeLevel {
    fn from(s: Scope) -> Self {
        match s {
            Scope::Repo => ScopeLevel::Repo,
            Scope::Module => ScopeLevel::Module,
            Scope::Package => ScopeLevel::Package,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Testability,
    Complexity,
    Coverage,
}

impl From<Mode> for MapMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Testability => MapMode::Testability,
            Mode::Complexity => MapMode::Complexity,
            Mode::Coverage => MapMode::Coverage,
        }
    }
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    inputs: InputArgs,

    /// Output directory.
    #[arg(long, default_value = "testmap-out", value_name = "DIR")]
    out: PathBuf,

    /// Granularity of the segmentation.
    #[arg(long, value_enum, default_value = "module")]
    scope: Scope,
}

#[derive(Debug, Args)]
struct MapArgs {
    #[arg(long, value_name = "FILE")]
    report: PathBuf,

    /// Map to render. Repeatable.
    #[arg(long, value_enum, default_values = ["testability"])]
    mode: Vec<Mode>,

    /// Coverage XML; required for the coverage map.
    #[arg(long, value_name = "FILE")]
    coverage: Option<PathBuf>,

    /// Output directory (default: the report's directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Grouping of the map (default: the report's scope).
    #[arg(long, value_enum)]
    scope: Option<Scope>,

    #[arg(long, default_value_t = 1200.0)]
    width: f64,

    #[arg(long, default_value_t = 800.0)]
    height: f64,

    #[arg(long)]
    no_legend: bool,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    /// Method id, e.g. `com/example/App.send(Lcom/example/Message;)V`.
    method: String,

    /// Explain from an existing report instead of analyzing.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["app", "dep"])]
    report: Option<PathBuf>,

    #[command(flatten)]
    inputs: InputArgs,
}

#[derive(Debug, Args)]
struct DiffArgs {
    before: PathBuf,
    after: PathBuf,

    /// Directory for diff.json.
    #[arg(long, default_value = "testmap-out", value_name = "DIR")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Analyze(a) => commands::analyze(a, cli.kb.as_deref()),
        Command::Map(m) => commands::map(m),
        Command::Explain(e) => commands::explain(e, cli.kb.as_deref()),
        Command::Diff(d) => commands::diff(d),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
