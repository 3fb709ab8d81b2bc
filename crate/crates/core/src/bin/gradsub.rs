use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gradsub::matcore::RankTolerance;
use gradsub::psscli::{self, report::fmt_float};

#[derive(Parser)]
#[command(name = "gradsub", version, about = "Gradient-subspace similarity and co-training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Projection-space similarity of two GRDM gradient dumps, as JSON.
    Pss {
        file_a: PathBuf,
        file_b: PathBuf,
        /// Relative singular-value cutoff for rank decisions.
        #[arg(long, default_value_t = RankTolerance::DEFAULT)]
        tol: f64,
    },
    /// Stage-1 pretraining followed by the configured strategy.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// All three strategies over several seeds.
    Study {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "1-5")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spatially guided runs over grounding:action loss ratios.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "1:1,1:5,1:10,1:15,1:20")]
        ratios: String,
        /// Defaults to the configured seed.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probe gradients of a checkpoint as two GRDM files.
    DumpProbeGrads {
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> gradsub::Result<()> {
    match cli.command {
        Command::Pss { file_a, file_b, tol } => {
            let r = psscli::cmd_pss(&file_a, &file_b, RankTolerance::new(tol)?)?;
            println!("{}", psscli::pss_json(&r));
        }
        Command::Train { config, out } => {
            let cfg = psscli::load_config(config.as_deref())?;
            let o = psscli::cmd_train(&cfg, &out)?;
            let last = o.report.last();
            println!(
                "{} seed {}: final-window pss {}, grounding mse {}, action mse {}",
                o.report.strategy.kind,
                o.report.seed,
                fmt_float(o.report.final_window_pss()),
                fmt_float(last.grounding_eval_mse),
                fmt_float(last.action_eval_mse)
            );
        }
        Command::Study { config, seeds, out } => {
            let cfg = psscli::load_config(config.as_deref())?;
            let seeds = psscli::parse_seeds(&seeds)?;
            let study = psscli::cmd_study(&cfg, &seeds, &out)?;
            print!("{}", psscli::report::summary_csv(&study.summary));
        }
        Command::Sweep {
            config,
            ratios,
            seeds,
            out,
        } => {
            let cfg = psscli::load_config(config.as_deref())?;
            let ratios = psscli::parse_ratios(&ratios)?;
            let seeds = match seeds {
                Some(s) => psscli::parse_seeds(&s)?,
                None => vec![cfg.train.master_seed],
            };
            let rows = psscli::cmd_sweep(&cfg, &ratios, &seeds, &out)?;
            print!("{}", psscli::report::sweep_csv(&rows));
        }
        Command::DumpProbeGrads { checkpoint, config, out } => {
            let cfg = psscli::load_config(config.as_deref())?;
            let d = psscli::cmd_dump_probe_grads(&checkpoint, &cfg, &out)?;
            println!("{}\n{}", d.paths.0.display(), d.paths.1.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
