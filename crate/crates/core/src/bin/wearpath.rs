use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wearpath::canvas::Canvas;
use wearpath::experiment::{
    run_calibration, run_comparison, run_iterations, write_iterations_csv, ArmRun, ExperimentConfig,
};
use wearpath::planner::Plan;
use wearpath::{Error, Result};

/// Deposition planning and simulation for a wearing conical tool tip.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the ground-truth force sensor and fit the linear force model.
    Calibrate,
    /// Plan the first stroke of one arm with its calibrated model.
    Plan {
        #[arg(long, default_value = "tilted")]
        arm: String,
    },
    /// Execute a plan on the simulated ground truth with a fresh tip.
    Execute {
        #[arg(long, default_value = "tilted")]
        arm: String,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Measure the width profile of a canvas against the reference stroke.
    Measure {
        #[arg(long)]
        canvas: PathBuf,
    },
    /// Run the plan/execute/measure/refit loop for one arm.
    Iterate {
        #[arg(long, default_value = "tilted")]
        arm: String,
    },
    /// Run both arms and report the per-iteration improvement.
    Compare,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let out = cli.out.clone().unwrap_or_else(|| config.output_path());
    std::fs::create_dir_all(&out)?;

    match cli.command {
        Command::Calibrate => {
            let params = run_calibration(&config, &out)?;
            println!("theta {:.9e} theta0 {:.9e}", params.theta, params.theta0);
        }
        Command::Plan { arm } => {
            let arm = config.arm(&arm)?;
            let run = ArmRun::new(&config, arm)?;
            let plan = run.plan()?;
            let path = arm_dir(&out, &arm.name)?.join("plan.csv");
            plan.write_csv(&path)?;
            println!(
                "predicted cost {:.6e} (warm start {:.6e}) -> {}",
                plan.predicted_cost,
                plan.warm_start_cost,
                path.display()
            );
        }
        Command::Execute { arm, plan } => {
            let arm = config.arm(&arm)?;
            let run = ArmRun::new(&config, arm)?;
            let plan = Plan::read_csv(&plan, config.dt)?;
            if plan.inputs.len() + 1 != run.stroke().samples().len() {
                return Err(Error::LengthMismatch {
                    expected: run.stroke().samples().len(),
                    actual: plan.inputs.len() + 1,
                });
            }
            let (canvas, execution) = run.execute(&plan)?;
            let dir = arm_dir(&out, &arm.name)?;
            canvas.write_pgm(&dir.join("canvas.pgm"))?;
            execution.write_csv(&dir.join("trace.csv"))?;
            println!(
                "{} pixels deposited, final offset {:.6e} m -> {}",
                canvas.filled_count(),
                execution.final_offset().unwrap_or(arm.d0_m),
                dir.display()
            );
        }
        Command::Measure { canvas } => {
            let canvas = Canvas::read_pgm(&canvas)?;
            // the stroke and threshold come from the config; the arm is irrelevant here
            let run = ArmRun::new(&config, &config.tilted)?;
            let (profile, v) = run.measure(&canvas)?;
            profile.write_csv(&out.join("profile.csv"))?;
            println!("V {v:.9e} m ({} invalid samples)", profile.invalid_count());
        }
        Command::Iterate { arm } => {
            let arm = config.arm(&arm)?;
            let details = run_iterations(&config, arm, Some(&out))?;
            write_iterations_csv(
                &arm_dir(&out, &arm.name)?.join("iterations.csv"),
                details.iter().map(|d| &d.record),
            )?;
            for d in &details {
                println!(
                    "{:3} {} V {:.6e} kd {:.6e}",
                    d.record.iteration, d.record.arm, d.record.v_m, d.record.kd
                );
            }
        }
        Command::Compare => {
            let (summary, _, _) = run_comparison(&config, Some(&out))?;
            println!("iter  baseline_V      tilted_V        improvement");
            for (i, ((b, t), p)) in summary
                .baseline_v_m
                .iter()
                .zip(&summary.tilted_v_m)
                .zip(&summary.improvement_pct)
                .enumerate()
            {
                println!("{:4}  {b:.6e}  {t:.6e}  {p:6.1}%", i + 1);
            }
            println!(
                "tilted better every iteration: {}; final improvement {:.1}%",
                summary.tilted_better_every_iteration, summary.final_improvement_pct
            );
        }
    }
    Ok(())
}

fn arm_dir(out: &Path, arm: &str) -> Result<PathBuf> {
    let dir = out.join(arm);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
