//! All three strategies from a shared pretrained model, written to a
//! directory as CSV reports and an SVG of PSS against step.
//!
//!     GRADSUB_THREADS=3 cargo run --release --example strategy_study -- 1-3 study_out

use std::path::PathBuf;

use gradsub::psscli::{self, ExperimentConfig};

fn main() -> gradsub::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds = psscli::parse_seeds(&args.next().unwrap_or_else(|| "1-2".into()))?;
    let out = PathBuf::from(args.next().unwrap_or_else(|| "study_out".into()));

    let study = psscli::cmd_study(&ExperimentConfig::default(), &seeds, &out)?;
    for s in &study.summary {
        println!(
            "{:<16} final pss {:.4} ± {:.4}  grounding mse {:.3e}  action mse {:.3e}",
            s.kind.name(),
            s.final_pss_mean,
            s.final_pss_std,
            s.grounding_mse_mean,
            s.action_mse_mean
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
