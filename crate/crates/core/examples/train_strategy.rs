//! One training run. Pass a strategy name (vanilla, cotrain or
//! spatially_guided) and optionally a step count.
//!
//!     cargo run --release --example train_strategy -- cotrain 1000

use gradsub::cotrainer::{run_single, LossRatio, StrategyConfig, StrategyKind, TrainConfig};

fn main() -> gradsub::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind = args
        .next()
        .and_then(|s| StrategyKind::parse(&s))
        .unwrap_or(StrategyKind::SpatiallyGuided);
    let mut config = TrainConfig::default();
    if let Some(steps) = args.next().and_then(|s| s.parse().ok()) {
        config.total_steps = steps;
    }

    let strategy = StrategyConfig::preset(kind, LossRatio::default());
    let (_, report) = run_single(&strategy, &config)?;
    println!("step      pss  ranks   grounding mse  action mse");
    for s in &report.samples {
        println!(
            "{:>4}  {:>7.4}  {:>2}/{:<2}  {:>13.3e}  {:>10.3e}",
            s.step, s.pss, s.rank_spat, s.rank_act, s.grounding_eval_mse, s.action_eval_mse
        );
    }
    println!("{kind}: final-window pss {:.4}", report.final_window_pss());
    Ok(())
}
