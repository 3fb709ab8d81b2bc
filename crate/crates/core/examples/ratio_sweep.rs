//! Spatially guided training across grounding:action loss ratios.
//!
//!     cargo run --release --example ratio_sweep -- 1:1,1:10,1:20

use gradsub::cotrainer::{run_ratio_sweep, TrainConfig};
use gradsub::psscli;

fn main() -> gradsub::Result<()> {
    let ratios = psscli::parse_ratios(&std::env::args().nth(1).unwrap_or_else(|| "1:1,1:5,1:10,1:15,1:20".into()))?;
    let config = TrainConfig::default();
    let rows = run_ratio_sweep(&ratios, &[config.master_seed], &config)?;
    println!("ratio  grounding mse  action mse  final pss");
    for r in rows {
        println!(
            "{:<5}  {:>13.3e}  {:>10.3e}  {:>9.4}",
            r.ratio.to_string(),
            r.grounding_mse,
            r.action_mse,
            r.final_pss
        );
    }
    Ok(())
}
