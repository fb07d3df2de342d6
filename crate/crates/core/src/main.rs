use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use irs_noma::harness::{self, check, Access, Beamformer, ExperimentSpec, Method, Problem};
use irs_noma::scenario::ScenarioConfig;
use irs_noma::Result;

/// IRS-assisted uplink NOMA: power minimization and energy efficiency.
#[derive(Debug, Parser)]
#[command(name = "irs-noma", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment from a spec file or a named preset.
    Run(RunArgs),
    /// List the built-in presets.
    Presets,
    /// Run the quick solver self-check.
    Check {
        /// Scenario TOML file (defaults to the 2-user setup).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Channel draws per check.
        #[arg(long, default_value_t = 5)]
        draws: u64,
        #[arg(long = "L")]
        l: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment spec file (TOML).
    #[arg(conflicts_with = "preset", required_unless_present = "preset")]
    spec: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Reflector counts to sweep, comma separated.
    #[arg(long = "L", value_delimiter = ',')]
    l: Option<Vec<usize>>,
    /// CSV output path; the spec is written next to it as `<out>.json`.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Restrict to NOMA methods with this beamformer.
    #[arg(long)]
    beamformer: Option<Beamformer>,
    /// Restrict to methods for this problem.
    #[arg(long)]
    problem: Option<Problem>,
    /// Restrict to methods with this access scheme.
    #[arg(long)]
    access: Option<Access>,
    /// Record per-trial wall time.
    #[arg(long)]
    timing: bool,
}

fn build_spec(args: &RunArgs) -> Result<ExperimentSpec> {
    let mut spec = match (&args.spec, &args.preset) {
        (Some(path), _) => ExperimentSpec::load(path)?,
        (None, Some(name)) => harness::preset(name)?,
        (None, None) => unreachable!("clap requires a spec or a preset"),
    };
    if let Some(seed) = args.seed {
        spec.scenario.seed = seed;
    }
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(l) = &args.l {
        spec.l_sweep = l.clone();
    }
    spec.timing |= args.timing;
    let keep = |m: &Method| {
        args.problem.is_none_or(|p| p == m.problem)
            && args.access.is_none_or(|a| a == m.access)
            && args
                .beamformer
                .is_none_or(|b| m.access != Access::Noma || b == m.beamformer)
    };
    let mut methods: Vec<Method> = spec.methods.iter().copied().filter(keep).collect();
    if methods.is_empty() {
        // Filters that match no preset method name one directly.
        if let (Some(problem), Some(access)) = (args.problem, args.access) {
            let bf = args.beamformer.unwrap_or(Beamformer::Manifold);
            methods.push(Method::new(problem, access, bf));
        }
    }
    spec.methods = methods;
    spec.validate()?;
    Ok(spec)
}

fn run(args: RunArgs) -> Result<()> {
    let spec = build_spec(&args)?;
    let table = harness::run_experiment(&spec)?;
    harness::write_outputs(&spec, &table, &args.out)?;
    let failed = table
        .rows
        .iter()
        .filter(|r| r.kind == "trial" && r.status != "ok")
        .count();
    eprintln!(
        "wrote {} rows to {} ({} failed trials)",
        table.rows.len(),
        args.out.display(),
        failed
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args).map(|_| true),
        Command::Presets => {
            for name in harness::PRESETS {
                println!("{name}\t{}", harness::preset_description(name).unwrap_or(""));
            }
            Ok(true)
        }
        Command::Check { scenario, draws, l } => (|| {
            let mut cfg = match scenario {
                Some(p) => ScenarioConfig::load(&p)?,
                None => ScenarioConfig::default(),
            };
            if let Some(l) = l {
                cfg.reflectors = l;
            }
            cfg.validate()?;
            let results = check::run_checks(&cfg, draws);
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            Ok(results.iter().all(|r| r.passed))
        })(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
