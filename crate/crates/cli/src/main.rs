use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use pilotwave::{scenarios, write_summary, RunError, Scenario, Summary};

/// Stochastic pilot-wave trajectories, Fokker–Planck oracles and
/// discrete jump processes, driven by scenario files.
#[derive(Parser)]
#[command(name = "pilotwave", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, or a bundled scenario by name.
    Run {
        config: String,
        /// Output directory [default: $PILOTWAVE_OUT, else ./pilotwave-out]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the bundled scenarios.
    List,
    /// Show a bundled scenario.
    Describe { name: String },
}

fn load(config: &str) -> Result<Scenario, RunError> {
    let path = Path::new(config);
    if path.exists() {
        Scenario::from_path(path)
    } else {
        scenarios::load(config)
    }
}

fn run(config: &str, out: Option<PathBuf>, seed: Option<u64>, threads: Option<usize>) -> i32 {
    let out = out
        .or_else(|| std::env::var_os("PILOTWAVE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("pilotwave-out"));
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return 3;
        }
    }
    let scenario = match load(config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            let _ = write_summary(&out, &Summary::failed(config, "", seed.unwrap_or(0), &e));
            return e.exit_code();
        }
    };
    let seed_used = seed.unwrap_or(scenario.run.master_seed);
    let result = std::fs::create_dir_all(&out)
        .map_err(|e| RunError::Output(format!("{}: {e}", out.display())))
        .and_then(|_| pilotwave::execute(&scenario, seed))
        .and_then(|report| report.write(&out).map(|_| report));
    match result {
        Ok(report) => {
            for a in &report.summary.assertions {
                let value = a.value.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
                println!(
                    "[{}] {} ({} = {value}, threshold {})",
                    if a.passed { "PASS" } else { "FAIL" },
                    a.name,
                    a.metric,
                    a.threshold
                );
            }
            println!(
                "{}: {} -> {}",
                scenario.name,
                report.summary.status,
                out.display()
            );
            if report.summary.passed() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            let _ = write_summary(
                &out,
                &Summary::failed(&scenario.name, &scenario.description, seed_used, &e),
            );
            e.exit_code()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => run(&config, out, seed, threads),
        Command::List => {
            for b in scenarios::BUNDLED {
                let s = Scenario::from_toml(b.toml).expect("bundled scenarios parse");
                println!("{:<32} {}", b.name, scenarios::headline(&s));
            }
            0
        }
        Command::Describe { name } => match scenarios::describe(&name) {
            Ok(text) => {
                print!("{text}");
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code as u8)
}
