use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use limitdrive::dynamics::VehicleParams;
use limitdrive::envelope::{self, AccelSample};
use limitdrive::harness::{self, Completion, RunOutput, ScenarioConfig};
use limitdrive::track::RefPath;

#[derive(Parser)]
#[command(name = "limitdrive", version, about = "Envelope identification, planning and closed-loop simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Acceleration envelope identification.
    Envelope {
        #[command(subcommand)]
        command: EnvelopeCommand,
    },
    /// Run one closed-loop scenario.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run two scenarios on the same track and obstacles and compare them.
    Compare {
        #[arg(long)]
        scenario_a: PathBuf,
        #[arg(long)]
        scenario_b: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Reference path utilities.
    Track {
        #[command(subcommand)]
        command: TrackCommand,
    },
}

#[derive(Subcommand)]
enum EnvelopeCommand {
    /// Run the open-loop sampling campaign and write the samples.
    Sample {
        #[arg(long, default_value = "configs/vehicle.toml")]
        params: PathBuf,
        /// Initial speeds (m/s), comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = envelope::SPEED_GRID)]
        vx: Vec<f64>,
        /// Samples per speed.
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "samples.csv")]
        out: PathBuf,
    },
    /// Fit the convex envelope to a samples file.
    Fit {
        #[arg(long = "in", default_value = "samples.csv")]
        input: PathBuf,
        #[arg(long, default_value = "envelope.cfg")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum TrackCommand {
    /// Write the scenario's reference path as CSV.
    Export {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "path.csv")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns `false` when a run was aborted.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Envelope { command } => run_envelope(command).map(|_| true),
        Command::Simulate { scenario, out_dir } => {
            let config = load_scenario(&scenario)?;
            let out = harness::run_scenario(&config)?;
            harness::write_run(&out, &out_dir)?;
            report(&out);
            println!("wrote {}", out_dir.display());
            Ok(out.metrics.completion != Completion::Aborted)
        }
        Command::Compare {
            scenario_a,
            scenario_b,
            out_dir,
        } => {
            let a = load_scenario(&scenario_a)?;
            let b = load_scenario(&scenario_b)?;
            let cmp = harness::compare(&a, &b)?;
            harness::write_comparison(&cmp, &out_dir)?;
            println!("{:<24} {:>14} {:>14} {:>14}", "metric", cmp.a.name, cmp.b.name, "delta");
            for (name, va, vb, d) in cmp.deltas() {
                println!("{name:<24} {va:>14.4} {vb:>14.4} {d:>14.4}");
            }
            let order = if cmp.a.metrics.average_speed >= cmp.b.metrics.average_speed {
                ">="
            } else {
                "<"
            };
            println!("average speed: {} {order} {}", cmp.a.name, cmp.b.name);
            println!("wrote {}", out_dir.display());
            Ok(cmp.a.metrics.completion != Completion::Aborted && cmp.b.metrics.completion != Completion::Aborted)
        }
        Command::Track {
            command: TrackCommand::Export { scenario, out },
        } => {
            let config = load_scenario(&scenario)?;
            let path = RefPath::from_segments(&config.segments(), 0.0, 0.0, 0.0)?;
            path.write_csv(&out)?;
            println!("track length {:.2} m, wrote {}", path.track_length(), out.display());
            Ok(true)
        }
    }
}

fn load_scenario(path: &PathBuf) -> Result<ScenarioConfig> {
    ScenarioConfig::from_file(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn report(out: &RunOutput) {
    println!("{}: {:?}", out.name, out.metrics.completion);
    if let Some(d) = &out.diagnostic {
        println!("  {d}");
    }
    for (name, value) in out.metrics.entries() {
        println!("  {name:<24} {value:.4}");
    }
}

fn run_envelope(command: EnvelopeCommand) -> Result<()> {
    match command {
        EnvelopeCommand::Sample {
            params,
            vx,
            n,
            seed,
            out,
        } => {
            let params = VehicleParams::from_file(&params).with_context(|| format!("loading {}", params.display()))?;
            let mut all: Vec<AccelSample> = Vec::new();
            for v in vx {
                let set = envelope::sample_envelope(&params, v, n, seed)?;
                println!("vx0 {v:5.1} m/s: {} samples, rejection rate {:.4}", set.samples.len(), set.rejection_rate());
                all.extend(set.samples);
            }
            envelope::write_samples(&out, &all)?;
            println!("wrote {}", out.display());
        }
        EnvelopeCommand::Fit { input, out } => {
            let data = envelope::read_samples(&input)?;
            let groups = envelope::group_by_speed(&data);
            let (fit, report) = envelope::fit_envelope(&groups)?;
            for (v, lo, hi) in &report.ax_extremes {
                println!("vx0 {v:5.1}: a_X in [{lo:.3}, {hi:.3}]");
            }
            println!(
                "alpha {:.4} beta {:.4} gamma {:.4} shrink {:.4} yaw residual ratio {:.4}",
                fit.alpha, fit.beta, fit.gamma, report.shrink, report.gamma_residual_ratio
            );
            fit.to_file(&out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
