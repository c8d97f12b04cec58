use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sdf_volume::harness::{cmd_ablate, cmd_certify, cmd_render, RunOptions};
use sdf_volume::oracle::DEFAULT_RESOLUTION;

/// Volume rendering of signed-distance scenes with certified opacity sampling.
#[derive(Parser)]
#[command(name = "sdfvol", version)]
struct Cli {
    /// Seed for all random streams (overrides the scene file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the scene's camera view to a PPM image.
    Render { scene: PathBuf },
    /// Check sampled opacity against the reference on random rays.
    Certify {
        scene: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long = "oracle-res", default_value_t = DEFAULT_RESOLUTION)]
        oracle_res: usize,
    },
    /// Compare sampling strategies on random rays.
    Ablate {
        scene: PathBuf,
        #[arg(long, default_value_t = 200)]
        rays: usize,
        #[arg(long = "oracle-res", default_value_t = 1 << 14)]
        oracle_res: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions {
        seed: cli.seed,
        threads: cli.threads,
        out_dir: cli.out_dir,
    };
    let result = match &cli.command {
        Command::Render { scene } => cmd_render(scene, &opts).map(|out| {
            println!(
                "wrote {} ({}x{})",
                out.image_path.display(),
                out.image.width,
                out.image.height
            );
            if let Some(csv) = out.csv_path {
                println!("wrote {}", csv.display());
            }
            ExitCode::SUCCESS
        }),
        Command::Certify {
            scene,
            trials,
            oracle_res,
        } => cmd_certify(scene, *trials, *oracle_res, &opts).map(|(report, path)| {
            let converged = report.rows.iter().filter(|r| r.converged).count();
            println!(
                "{} rays, {} violations, {} oracle failures (excluded), {} converged to beta",
                report.rows.len(),
                report.violations(),
                report.oracle_failures(),
                converged
            );
            println!("wrote {}", path.display());
            if report.violations() == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }),
        Command::Ablate {
            scene,
            rays,
            oracle_res,
        } => cmd_ablate(scene, *rays, *oracle_res, &opts).map(|(result, path)| {
            print!("{}", result.summary());
            println!("wrote {}", path.display());
            ExitCode::SUCCESS
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
