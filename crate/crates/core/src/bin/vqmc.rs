use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use vqmc::analysis::{error_statistics, extrapolate_csv, ReactionTable};
use vqmc::config::RunConfig;
use vqmc::features::FeatureKind;
use vqmc::network::WavefunctionParams;
use vqmc::trainer::{curve_energy, Trainer};

#[derive(Parser)]
#[command(name = "vqmc", version, about = "Variational Monte Carlo with neural wavefunctions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a wavefunction and write curve.csv, checkpoint.bin and summary.toml.
    Run(RunArgs),
    /// Extrapolate pairs of energies from a CSV file.
    Extrapolate(ExtrapolateArgs),
    /// Error statistics of a reaction table.
    Stats(StatsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file with a [molecule] table and optional [network] and [train]
    /// tables. A summary.toml from an earlier run is accepted.
    #[arg(long)]
    molecule: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    features: Option<FeatureKind>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "vqmc-out")]
    out: PathBuf,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    ndet: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    width_one: Option<usize>,
    #[arg(long)]
    width_two: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    steps_per_update: Option<usize>,
    /// Number of final curve entries averaged for the reported energy
    /// (default: the convergence window, capped at the curve length).
    #[arg(long)]
    window: Option<usize>,
    /// Stop once convergence is detected.
    #[arg(long)]
    early_stop: bool,
    /// Suppress per-iteration progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct ExtrapolateArgs {
    /// CSV with columns label,n1,i1_ha,n2,i2_ha.
    input: PathBuf,
    /// Output CSV (stdout when omitted).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Reaction table (TOML).
    table: PathBuf,
}

fn parse_kind(s: &str) -> Result<FeatureKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

#[derive(Serialize)]
struct RunResult {
    seed: u64,
    iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    energy_ha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stderr_ha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged_at: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

type Failure = Box<dyn std::error::Error>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()).into())
}

fn effective_config(a: &RunArgs) -> Result<RunConfig, Failure> {
    let mut c = RunConfig::from_toml(&read(&a.molecule)?).map_err(|e| format!("{}: {e}", a.molecule.display()))?;
    let (n, t) = (&mut c.network, &mut c.train);
    if let Some(v) = a.features {
        n.feature_kind = v;
    }
    if let Some(v) = a.ndet {
        n.n_det = v;
    }
    if let Some(v) = a.layers {
        n.n_layers = v;
    }
    if let Some(v) = a.width_one {
        n.width_one = v;
    }
    if let Some(v) = a.width_two {
        n.width_two = v;
    }
    if let Some(v) = a.batch {
        t.batch_size = v;
    }
    if let Some(v) = a.iters {
        t.n_iterations = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.burn_in {
        t.burn_in_steps = v;
    }
    if let Some(v) = a.steps_per_update {
        t.mcmc_steps_per_update = v;
    }
    if a.early_stop {
        t.early_stop = true;
    }
    n.validate()?;
    t.validate()?;
    Ok(c)
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let cfg = effective_config(&a)?;
    fs::create_dir_all(&a.out).map_err(|e| format!("cannot create {}: {e}", a.out.display()))?;
    let params = WavefunctionParams::init(&cfg.molecule, cfg.network, cfg.train.seed)?;
    let mut trainer = Trainer::new(&cfg.molecule, params, cfg.train)?.with_checkpoint(a.out.join("checkpoint.bin"));

    let total = cfg.train.n_iterations;
    let every = (total / 20).max(1);
    let quiet = a.quiet;
    let outcome = trainer.run_with(|r| {
        if !quiet && (r.step % every == 0 || r.step + 1 == total) {
            eprintln!(
                "step {:>7}  E = {:.6} Ha  var = {:.3e}  acc = {:.2}",
                r.step, r.energy, r.variance, r.acceptance
            );
        }
    });
    let (converged_at, failure) = match outcome {
        Ok(c) => (c, None),
        Err(e) => (None, Some(e)),
    };

    let mut csv = io::BufWriter::new(fs::File::create(a.out.join("curve.csv"))?);
    trainer.curve.write_csv(&mut csv)?;
    csv.flush()?;

    let n = trainer.curve.len();
    let window = a.window.unwrap_or(cfg.train.convergence_window).min(n);
    let (energy, stderr) = if window > 0 {
        let (e, s) = curve_energy(&trainer.curve, window)?;
        (Some(e), Some(s))
    } else {
        (None, None)
    };
    let result = RunResult {
        seed: cfg.train.seed,
        iterations: n,
        energy_ha: energy,
        stderr_ha: stderr,
        window: (window > 0).then_some(window),
        converged_at,
        error: failure.as_ref().map(|e| e.to_string()),
    };
    fs::write(a.out.join("summary.toml"), cfg.to_toml_with(Some(&result)))?;

    if let Some(e) = failure {
        return Err(e.into());
    }
    match (energy, stderr) {
        (Some(e), Some(s)) => println!("energy {e:.6} +/- {s:.6} Ha (last {window} of {n} iterations)"),
        _ => println!("no iterations run"),
    }
    Ok(())
}

fn cmd_extrapolate(a: ExtrapolateArgs) -> Result<(), Failure> {
    let input = fs::File::open(&a.input).map_err(|e| format!("cannot read {}: {e}", a.input.display()))?;
    let failed = match &a.output {
        Some(p) => extrapolate_csv(input, io::BufWriter::new(fs::File::create(p)?))?,
        None => extrapolate_csv(input, io::stdout().lock())?,
    };
    if failed > 0 {
        return Err(format!("{failed} row(s) could not be extrapolated (need 0 < n1 < n2 and finite energies)").into());
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<(), Failure> {
    let table = ReactionTable::from_toml(&read(&a.table)?)?;
    let s = error_statistics(&table)?;
    println!("delta_max_abs {:.4}", s.delta_max_abs);
    println!("mean_abs {:.4}", s.mean_abs);
    println!("std {:.4}", s.std);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Extrapolate(a) => cmd_extrapolate(a),
        Command::Stats(a) => cmd_stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
