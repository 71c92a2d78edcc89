use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nnkrylov::harness::{
    emit_outputs, preset, run_experiment, ExperimentConfig, SolverSpec, PRESETS,
};
use nnkrylov::noise::NoiseSpec;
use nnkrylov::Error;

#[derive(Parser)]
#[command(
    name = "nnkrylov",
    version,
    about = "Nonnegative flexible Krylov solvers: experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV histories, summary.json and report.md.
    Run(RunArgs),
    /// List the built-in presets.
    Presets,
    /// Print a preset as a TOML config file.
    ShowConfig {
        #[arg(long)]
        preset: String,
    },
    /// Write the problem of a preset, with one noise realization, to a directory.
    Generate {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Built-in setup to start from.
    #[arg(long, required_unless_present = "config")]
    preset: Option<String>,
    /// TOML config file; replaces the preset when both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Total iterations per run.
    #[arg(long)]
    budget: Option<usize>,
    /// Comma-separated noise seeds, one run per seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated solver names.
    #[arg(long)]
    solvers: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Noise level for the discrepancy rule; defaults to the realized level.
    /// For Gaussian-only presets this also sets the simulated noise level.
    #[arg(long)]
    noise_level: Option<f64>,
    #[arg(long)]
    m_hat: Option<usize>,
    #[arg(long)]
    m_max_in: Option<usize>,
    #[arg(long)]
    k_max_out: Option<usize>,
    /// Keep iterating after a stop rule fires (the preset default).
    #[arg(long, conflicts_with = "stop_at_rule")]
    continue_past_stop: bool,
    /// End each run when its stop rule fires.
    #[arg(long)]
    stop_at_rule: bool,
}

impl RunArgs {
    fn config(&self) -> nnkrylov::Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => {
                return Err(Error::Config(
                    "either --preset or --config is required".into(),
                ))
            }
        };
        if let Some(b) = self.budget {
            cfg.budget = b;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
            cfg.repetitions = None;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
        if let Some(list) = &self.solvers {
            cfg.solvers = SolverSpec::parse_list(list)?;
        }
        if let Some(t) = self.tau {
            cfg.solver.tau = t;
        }
        if let Some(t) = self.theta {
            cfg.solver.theta = t;
        }
        if let Some(e) = self.noise_level {
            cfg.solver.noise_level = Some(e);
            if cfg.noise.target_level.is_some() {
                cfg.noise.target_level = Some(e);
            }
        }
        if let Some(m) = self.m_hat {
            cfg.solver.m_hat = m;
        }
        if let Some(m) = self.m_max_in {
            cfg.solver.m_max_in = m;
        }
        if let Some(k) = self.k_max_out {
            cfg.solver.k_max_out = k;
        }
        if self.continue_past_stop {
            cfg.continue_past_stop = true;
        }
        if self.stop_at_rule {
            cfg.continue_past_stop = false;
        }
        Ok(cfg)
    }
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) | Error::Parse { .. } => ExitCode::from(2),
        _ => ExitCode::from(3),
    }
}

fn run(args: &RunArgs) -> ExitCode {
    let cfg = match args.config() {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    let out = cfg.output_dir.clone().unwrap_or_else(|| {
        PathBuf::from(format!(
            "results/{}",
            if cfg.name.is_empty() {
                "experiment"
            } else {
                &cfg.name
            }
        ))
    });
    let report = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => return exit_for(&e),
    };
    if let Err(e) = emit_outputs(&report, &out) {
        eprintln!("error: {e}");
        return ExitCode::from(3);
    }
    for a in &report.aggregates {
        match (a.min_rel_error, a.iterations) {
            (Some(e), Some(m)) => {
                println!("{:<16} rel.error {e:.4e} at iteration {m:.2}", a.solver)
            }
            _ => println!("{:<16} all runs failed", a.solver),
        }
    }
    println!("results written to {}", out.display());
    let failed = report.failed_runs().count();
    if failed > 0 {
        eprintln!("{failed} run(s) failed; see summary.json");
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(&args),
        Command::Presets => {
            for p in PRESETS {
                println!("{p}");
            }
            ExitCode::SUCCESS
        }
        Command::ShowConfig { preset: name } => match preset(&name) {
            Ok(cfg) => {
                print!("{}", cfg.to_toml());
                ExitCode::SUCCESS
            }
            Err(e) => exit_for(&e),
        },
        Command::Generate {
            preset: name,
            seed,
            out,
        } => {
            let result = preset(&name).and_then(|cfg| {
                cfg.problem
                    .build(&NoiseSpec { seed, ..cfg.noise })
                    .and_then(|p| p.save(&out))
            });
            match result {
                Ok(()) => {
                    println!("problem written to {}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => exit_for(&e),
            }
        }
    }
}
