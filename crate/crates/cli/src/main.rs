//! `fvwave`: run elastic wave scenarios and probe their snapshots.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fvwave::linear_system::SolverKind;
use fvwave::mesh::Point;
use fvwave::scenario::{self, RunOptions, ScenarioConfig, VtkSnapshot};
use fvwave::{Error, Result};

#[derive(Parser)]
#[command(name = "fvwave", version, about = "Finite-volume elastic wave simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, or a shipped scenario by name.
    Run {
        scenario: String,
        /// Output directory (default: the configured one, then out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a snapshot every N steps.
        #[arg(long)]
        snapshot_stride: Option<usize>,
        #[arg(long, value_enum)]
        solver: Option<Solver>,
    },
    /// Print the names of the shipped scenarios.
    ListScenarios,
    /// Sample displacement magnitude along a segment of a VTK snapshot.
    Probe {
        #[arg(long)]
        snapshot: PathBuf,
        /// Start point `x,y[,z]`.
        #[arg(long, value_parser = parse_point)]
        from: Point,
        /// End point `x,y[,z]`.
        #[arg(long, value_parser = parse_point)]
        to: Point,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Direct,
    Iterative,
}

impl From<Solver> for SolverKind {
    fn from(s: Solver) -> Self {
        match s {
            Solver::Direct => SolverKind::Direct,
            Solver::Iterative => SolverKind::Iterative,
        }
    }
}

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad coordinate `{t}`")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if !(2..=3).contains(&v.len()) {
        return Err(format!("expected 2 or 3 coordinates, got {}", v.len()));
    }
    Ok(Point::new(v[0], v[1], v.get(2).copied().unwrap_or(0.0)))
}

fn load(scenario: &str) -> Result<ScenarioConfig> {
    let path = Path::new(scenario);
    if path.exists() {
        return ScenarioConfig::from_toml(&std::fs::read_to_string(path)?);
    }
    scenario::builtin(scenario)
        .map_err(|_| Error::Config { path: scenario.into(), msg: "no such file or shipped scenario".into() })
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { scenario, out, snapshot_stride, solver } => {
            let cfg = load(&scenario)?;
            let opts = RunOptions { out_dir: out, snapshot_stride, solver: solver.map(Into::into), no_files: false };
            let dir = scenario::output_dir(&cfg, &opts);
            let summary = scenario::run_scenario(&cfg, &opts)?;
            for l in &summary.levels {
                let mut line = format!("cells {:>8}  dt {:.4e}  steps {:>5}", l.cells, l.dt, l.steps);
                if let (Some(u), Some(t)) = (l.err_u, l.err_t) {
                    line += &format!("  err_u {u:.4e}  err_T {t:.4e}");
                }
                if let Some(r) = l.final_energy_ratio {
                    line += &format!("  E/E0 {r:.4e}");
                }
                println!("{line}");
            }
            if let Some(c) = &summary.convergence {
                println!("finest-pair rates: u {:.3}  T {:.3}", c.last_rate_u(), c.last_rate_t());
            }
            println!("wrote {} in {:.1} s", dir.display(), summary.wall_time_s);
        }
        Command::ListScenarios => {
            for name in scenario::list_scenarios() {
                println!("{name}");
            }
        }
        Command::Probe { snapshot, from, to, samples } => {
            let snap = VtkSnapshot::read(&snapshot)?;
            let p = snap.probe(&from, &to, samples)?;
            scenario::write_probe_csv(&p, std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
