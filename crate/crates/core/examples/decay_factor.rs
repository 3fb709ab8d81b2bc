//! The decay factor scales action gradients reaching the planner and
//! leaves every other gradient alone.

use gradsub::cotrainer::TrainConfig;
use gradsub::gradnet::{is_planner_param, Objective, ToyModel};
use gradsub::synthtasks::{encode, SceneStream};

fn main() -> gradsub::Result<()> {
    let config = TrainConfig::default();
    let codec = config.task.codec();
    let mut scenes = SceneStream::new(1, 9, config.task.clone());
    let batch: Vec<_> = scenes
        .take(8)?
        .iter()
        .map(|s| encode(s, false, &codec, config.model.horizon))
        .collect();

    let model = ToyModel::init(config.model.clone(), 1)?.with_decay(1.0)?;
    let full = model.gradients(&batch, Objective::Action)?;
    for decay in [0.5, 0.1, 0.0] {
        let g = model.with_decay(decay)?.gradients(&batch, Objective::Action)?;
        let (mut planner, mut rest) = (0.0, 0.0);
        for (i, name) in model.names().iter().enumerate() {
            let ratio = g[i].frobenius_norm() / full[i].frobenius_norm().max(f64::MIN_POSITIVE);
            if is_planner_param(name) {
                planner = ratio;
            } else if full[i].frobenius_norm() > 0.0 {
                rest = ratio;
            }
        }
        println!("decay {decay}: planner gradient x{planner:.3}, others x{rest:.3}");
    }
    Ok(())
}
