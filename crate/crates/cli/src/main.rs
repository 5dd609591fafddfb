use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};

use mrx::harness::{
    ablation, bench_grid, policy_by_name, policy_from_config, run_experiment, train, write_ablation_csv,
    write_bench_csv, write_curve_csv, write_experiment, ExperimentConfig,
};
use mrx::mapgen::{generate_map, MapKind, MapSpec};
use mrx::policy::{gradcheck, PolicyNet, GRADCHECK_STEP};
use mrx::Error;

#[derive(Parser)]
#[command(name = "mrx", version, about = "Multi-robot exploration simulator, planners and trainer")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write generated maps in the ASCII map format.
    Genmaps {
        #[arg(long, default_value = "corridor")]
        kind: MapKind,
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Width in cells (default: the kind's standard extent).
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
    },
    /// Run an experiment from a config file.
    Run {
        /// Override `run.policy`.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Curriculum training.
    Train {
        /// Total training episodes (default: the sum over stages).
        #[arg(long)]
        episodes: Option<usize>,
        /// Also train without the map-surplus field on the same seeds and
        /// write the comparison table.
        #[arg(long)]
        ablation: bool,
    },
    /// Baseline comparison grid.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "greedy,nearest,pursuit,preplanned,random")]
        policies: Vec<String>,
        /// Map kinds (default: the config's kind).
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<MapKind>,
    },
    /// Compare analytic policy gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        graphs: usize,
        #[arg(long, default_value_t = GRADCHECK_STEP)]
        step: f64,
    },
}

const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            match e {
                Error::Config(_) | Error::Json(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn load_config(cli: &Cli, required: bool) -> Result<ExperimentConfig, Error> {
    match &cli.config {
        Some(path) => {
            if !path.exists() {
                Cli::command().error(ErrorKind::ValueValidation, format!("config file {} not found", path.display())).exit();
            }
            ExperimentConfig::load(path)
        }
        None if required => {
            Cli::command().error(ErrorKind::MissingRequiredArgument, "this subcommand needs --config <FILE>").exit()
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn out_dir(cli: &Cli, default: &str) -> Result<PathBuf, Error> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), Error> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn dispatch(cli: &Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::Genmaps { kind, count, width, height } => {
            let dir = out_dir(cli, "maps")?;
            let base = cli.seed.unwrap_or(0);
            for seed in base..base + count {
                let mut spec = MapSpec::with_default_size(*kind, seed);
                spec.width = width.unwrap_or(spec.width);
                spec.height = height.unwrap_or(spec.height);
                let map = generate_map(&spec)?;
                let path = dir.join(format!("{kind}_{seed}.map"));
                fs::write(&path, map.to_map_string()).map_err(|e| Error::io(&path, e))?;
                println!("{}", path.display());
            }
        }
        Command::Run { policy, repetitions } => {
            let mut cfg = load_config(cli, true)?;
            if let Some(s) = cli.seed {
                cfg.run.seed = s;
            }
            if let Some(p) = policy {
                cfg.run.policy = p.clone();
            }
            if let Some(r) = repetitions {
                cfg.run.repetitions = *r;
            }
            cfg.validate()?;
            let spec = policy_from_config(&cfg)?;
            let exp = run_experiment(&cfg, &spec)?;
            let dir = out_dir(cli, "out")?;
            write_experiment(&cfg, &exp, &dir)?;
            let s = &exp.summary;
            println!(
                "{} on {} ({} robots, {} runs): success {:.2}, steps {:.1} ± {:.1}, eta_d {:.3}, sigma {:.2}%",
                spec.label(),
                cfg.world.kind,
                cfg.run.n_robots,
                s.runs,
                s.success.mean,
                s.steps.mean,
                s.steps.stdev,
                s.eta_d.mean,
                s.sigma_pct.mean
            );
        }
        Command::Train { episodes, ablation: paired } => {
            let cfg = load_config(cli, false)?;
            let seed = cli.seed.unwrap_or(cfg.run.seed);
            let budget = episodes.unwrap_or_else(|| cfg.train.stages.iter().map(|s| s.episodes).sum());
            let dir = out_dir(cli, "train")?;
            if *paired {
                let ab = ablation(&cfg, budget, seed)?;
                for (row, (curve, net)) in ab.rows.iter().zip(ab.curves.iter().zip(&ab.nets)) {
                    write_file(&dir.join(format!("curve_{}.csv", row.variant)), |w| write_curve_csv(curve, w))?;
                    net.save(&dir.join(format!("weights_{}.bin", row.variant)))?;
                }
                write_file(&dir.join("ablation.csv"), |w| write_ablation_csv(&ab.rows, w))?;
                println!("{:<18}{:>8}{:>10}{:>10}", "variant", "S(%)", "Steps", "D(m)");
                for r in &ab.rows {
                    println!("{:<18}{:>8.1}{:>10.1}{:>10.1}", r.variant, r.success_pct, r.steps, r.distance_m);
                }
            } else {
                let net = PolicyNet::new(cfg.train.policy, seed)?;
                let out = train(&cfg, net, budget, seed)?;
                write_file(&dir.join("curve.csv"), |w| write_curve_csv(&out.curve, w))?;
                out.net.save(&dir.join("weights.bin"))?;
                if let Some(last) = out.curve.last() {
                    println!(
                        "{} episodes; last window: success {:.2}, steps {:.1}, distance {:.1} m",
                        out.episodes.len(),
                        last.success_rate,
                        last.mean_steps,
                        last.mean_distance
                    );
                }
            }
        }
        Command::Bench { policies, kinds } => {
            let mut cfg = load_config(cli, false)?;
            if let Some(s) = cli.seed {
                cfg.run.seed = s;
            }
            let specs = policies
                .iter()
                .map(|p| policy_by_name(p, cfg.run.weights.as_deref()))
                .collect::<Result<Vec<_>, _>>()?;
            let kinds = if kinds.is_empty() { vec![cfg.world.kind] } else { kinds.clone() };
            let rows = bench_grid(&cfg, &specs, &kinds)?;
            let dir = out_dir(cli, "bench")?;
            write_file(&dir.join("bench.csv"), |w| write_bench_csv(&rows, w))?;
            write_bench_csv(&rows, std::io::stdout().lock()).map_err(|e| Error::io("<stdout>", e))?;
        }
        Command::Gradcheck { graphs, step } => {
            let r = gradcheck(cli.seed.unwrap_or(0), *graphs, *step)?;
            println!(
                "graphs {} parameters {} max_rel_error {:.3e} max_abs_error {:.3e}",
                r.graphs, r.parameters_checked, r.max_rel_error, r.max_abs_error
            );
            if !(r.max_rel_error < GRADCHECK_TOLERANCE) {
                eprintln!("gradient check failed: {:.3e} >= {GRADCHECK_TOLERANCE:e}", r.max_rel_error);
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
