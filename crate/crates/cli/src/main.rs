use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bsn_core::detection::DetectorKind;
use bsn_core::experiment::{
    convergence_summary_csv, convergence_to_csv, load_spec, preset_text, records_to_csv, run_convergence_study,
    run_oracle_check, run_sweep, run_timing_comparison, write_outputs, ExperimentSpec, OBJECTIVE_TOL,
};

#[derive(Parser)]
#[command(name = "bsn", version, about = "Backscatter sensor network simulation and subchannel allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sum of average SINR versus transmit power for every method.
    Sweep(RunArgs),
    /// Per-core Max-Sum convergence traces against the exact optimum.
    Converge(RunArgs),
    /// Mean solver wall time of Max-Sum and the exact solver.
    Timing(RunArgs),
    /// Max-Sum against the exact solver on random instances.
    OracleCheck(OracleArgs),
    /// Print a shipped experiment spec.
    Preset(PresetArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (TOML); the `paper` preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides both the topology and the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the spec's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict the run to one detector.
    #[arg(long)]
    detector: Option<DetectorKind>,
    /// Measurement frames per table (J).
    #[arg(long)]
    frames: Option<usize>,
    /// Number of independent topologies.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 500)]
    instances: usize,
    #[arg(long, default_value_t = 8)]
    subchannels: usize,
    /// Solver settings are read from this spec when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct PresetArgs {
    #[arg(long)]
    paper: bool,
    #[arg(long)]
    desk: bool,
}

impl RunArgs {
    fn spec(&self) -> Result<(ExperimentSpec, PathBuf)> {
        let mut spec = match &self.config {
            Some(path) => load_spec(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentSpec::paper(),
        };
        if let Some(seed) = self.seed {
            spec = spec.with_seed(seed);
        }
        if let Some(d) = self.detector {
            spec.experiment.detectors = vec![d];
        }
        if let Some(j) = self.frames {
            spec.experiment.frames = j;
        }
        if let Some(t) = self.trials {
            spec.experiment.trials = t;
        }
        spec.validate()?;
        let out = self.out.clone().unwrap_or_else(|| spec.experiment.output_dir.clone());
        Ok((spec, out))
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sweep(args) => {
            let (spec, out) = args.spec()?;
            let records = run_sweep(&spec)?;
            write_outputs(&out, &spec, "sweep", &[("sweep.csv", records_to_csv(&records))])?;
            println!("wrote {} records to {}", records.len(), out.join("sweep.csv").display());
        }
        Command::Converge(args) => {
            let (spec, out) = args.spec()?;
            let runs = run_convergence_study(&spec)?;
            write_outputs(
                &out,
                &spec,
                "converge",
                &[
                    ("convergence.csv", convergence_to_csv(&runs)),
                    ("convergence_summary.csv", convergence_summary_csv(&runs)),
                ],
            )?;
            let optimal = runs.iter().filter(|r| r.optimal_at(OBJECTIVE_TOL).is_some()).count();
            let terminated = runs.iter().filter(|r| r.trace.terminated_by_nmae).count();
            println!(
                "{} core runs: {optimal} reached the optimum, {terminated} met the NMAE criterion",
                runs.len()
            );
        }
        Command::Timing(args) => {
            let (spec, out) = args.spec()?;
            let report = run_timing_comparison(&spec)?;
            write_outputs(&out, &spec, "timing", &[("timing.csv", report.to_csv())])?;
            for (d, ratio) in &report.ratios {
                println!("{d}: max_sum/exact time ratio {ratio:.3}");
            }
        }
        Command::OracleCheck(args) => {
            let spec = match &args.config {
                Some(path) => load_spec(path).with_context(|| format!("loading {}", path.display()))?,
                None => ExperimentSpec::paper(),
            };
            if args.subchannels < 2 {
                bail!("--subchannels must be at least 2");
            }
            let report = run_oracle_check(args.instances, args.subchannels, args.seed, &spec.solver)?;
            if let Some(out) = &args.out {
                write_outputs(out, &spec, "oracle-check", &[("oracle.csv", report.to_csv())])?;
            }
            println!(
                "{}/{} objectives and {}/{} assignments match (max relative error {:.3e}, {} repaired, {:.2} s)",
                report.objective_matches,
                report.instances,
                report.assignment_matches,
                report.instances,
                report.max_relative_error,
                report.repaired,
                report.seconds
            );
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Preset(args) => {
            let name = if args.paper { "paper" } else { "desk" };
            print!("{}", preset_text(name).expect("shipped preset"));
        }
    }
    Ok(ExitCode::SUCCESS)
}
