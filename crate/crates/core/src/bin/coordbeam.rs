use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use coordbeam::harness::{oracle_1d_power, report, run_experiment, run_scheme, ExperimentSpec, Scheme};
use coordbeam::metrics::evaluate;
use coordbeam::network::{ComplexityCharge, Network};
use coordbeam::power::PowerModelParams;
use coordbeam::scenario::{build_layout, generate_drop, ScenarioConfig};
use coordbeam::solver::SolverConfig;
use coordbeam::baselines::BaselineConfig;
use coordbeam::{Error, Result};

/// Energy-efficient coordinated beamforming experiments.
#[derive(Parser)]
#[command(name = "coordbeam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a JSON experiment file.
    Run {
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        drops: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict to these schemes (repeatable).
        #[arg(long = "scheme")]
        schemes: Vec<String>,
        /// Worker threads, 0 for all cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Compare solvers against the brute-force power sweep on random
    /// single-cell single-user instances; one JSON line per instance.
    Oracle {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        drops: usize,
        #[arg(long, default_value_t = 10_000)]
        grid: usize,
        /// Schemes to compare (repeatable).
        #[arg(long = "scheme")]
        schemes: Vec<String>,
    },
    /// Average a results directory over drops into summary.csv.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}

fn parse_schemes(names: &[String]) -> Result<Vec<Scheme>> {
    names.iter().map(|s| s.parse()).collect()
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { spec, seed, drops, out, schemes, jobs } => {
            let mut spec = ExperimentSpec::from_file(&spec)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            if let Some(drops) = drops {
                spec.drops = drops;
            }
            if let Some(out) = out {
                spec.out = out;
            }
            if !schemes.is_empty() {
                spec.schemes = parse_schemes(&schemes)?;
            }
            let manifest = run_experiment(&spec, jobs)?;
            println!(
                "{}",
                json!({
                    "out": spec.out,
                    "rows_written": manifest.rows_written,
                    "rows_skipped": manifest.rows_skipped,
                    "wall_clock_s": manifest.wall_clock_s,
                })
            );
            Ok(())
        }
        Command::Oracle { seed, drops, grid, schemes } => {
            let schemes = if schemes.is_empty() {
                vec![Scheme::Netee, Scheme::Wsum, Scheme::MmseMulti]
            } else {
                parse_schemes(&schemes)?
            };
            let scen = ScenarioConfig { cells: 1, wrap_around: false, users_per_cell: 1, seed, ..Default::default() };
            let layout = build_layout(&scen)?;
            let power = PowerModelParams::default();
            for i in 0..drops as u64 {
                let drop = generate_drop(&scen, &layout, i)?;
                let net = Network::new(drop.channels, &scen, &power, ComplexityCharge::coordinated(power.q))?;
                let best = oracle_1d_power(&net, grid)?;
                let mut line = json!({ "drop": i, "oracle_ee": best.ee, "oracle_power": best.power });
                for &s in &schemes {
                    let out = run_scheme(s, &net, &BaselineConfig::default(), &SolverConfig::default())?;
                    let ee = evaluate(&net, &out.beamformers)?.network_ee;
                    line[s.name()] = json!(ee);
                }
                println!("{line}");
            }
            Ok(())
        }
        Command::Report { dir } => {
            if !dir.is_dir() {
                return Err(Error::InvalidConfig(format!("{} is not a directory", dir.display())));
            }
            for row in report(&dir)? {
                println!("{}", serde_json::to_string(&row)?);
            }
            Ok(())
        }
    }
}
