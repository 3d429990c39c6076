use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spinjunction::pipeline::{run, Mode, RunSpec};
use spinjunction::Error;

#[derive(Parser)]
#[command(name = "spinjunction", version, about = "Spin transport through a two-spin junction between XXZ leads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lead correlation functions.
    Correlations(Common),
    /// Time-nonlocal Born dynamics and current.
    Born(Common),
    /// Linear-response current.
    Kubo(Common),
    /// Redfield and Lindblad steady states.
    Steady(Common),
    /// Stationary current kernel and its spectral function.
    Spectral(Common),
    /// Paired runs with opposite staggered field.
    Rectify(Common),
    /// Exact state-vector simulation of a finite chain.
    Oracle(Common),
    /// Parameter sweep described by the `sweep` section of the config.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults are used for anything missing.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 makes every output bitwise reproducible.
    #[arg(long, env = "SPINJUNCTION_THREADS")]
    threads: Option<usize>,
    /// `key=value` with a dotted key, e.g. `left.jz=0.9`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dry_run: bool,
}

impl Command {
    fn split(self) -> (Mode, Common) {
        match self {
            Command::Correlations(c) => (Mode::Correlations, c),
            Command::Born(c) => (Mode::Born, c),
            Command::Kubo(c) => (Mode::Kubo, c),
            Command::Steady(c) => (Mode::Steady, c),
            Command::Spectral(c) => (Mode::Spectral, c),
            Command::Rectify(c) => (Mode::Rectify, c),
            Command::Oracle(c) => (Mode::Oracle, c),
            Command::Sweep(c) => (Mode::Sweep, c),
        }
    }
}

fn effective_spec(mode: Mode, args: &Common) -> Result<RunSpec, Error> {
    let mut spec = match &args.config {
        Some(path) => RunSpec::load(path)?,
        None => RunSpec::new(mode),
    };
    spec.mode = mode;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    for o in &args.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Error::Validation(vec![format!("override `{o}` is not of the form key=value")]))?;
        spec = spec.with_override(key.trim(), value.trim())?;
    }
    spec.validate()?;
    Ok(spec)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (mode, args) = cli.command.split();
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    let result = effective_spec(mode, &args).and_then(|spec| {
        if args.dry_run {
            println!("{}", spec.to_json());
            return Ok(());
        }
        let bundle = run(&spec, &args.out)?;
        let summary = serde_json::to_string_pretty(&bundle.summary).map_err(Error::from)?;
        println!("{summary}");
        eprintln!(
            "wrote {} files to {} ({} warnings)",
            bundle.artifacts.len() + 1,
            args.out.display(),
            bundle.warnings.len()
        );
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
