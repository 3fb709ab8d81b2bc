//! Learnable queries read any planner sequence into a fixed number of
//! slots, independent of token order.

use gradsub::cotrainer::TrainConfig;
use gradsub::gradnet::ToyModel;

fn main() -> gradsub::Result<()> {
    let cfg = TrainConfig::default().model;
    let model = ToyModel::init(cfg.clone(), 2)?;
    for len in [1, 7, 40] {
        let ids: Vec<usize> = (0..len).map(|i| (3 * i + 1) % cfg.vocab_size).collect();
        let hidden = model.planner_forward(&ids)?;
        let q = model.querying_transformer_forward(&hidden)?;
        println!("{len:>3} tokens -> query output {:?}", q.shape());
    }

    let hidden = model.planner_forward(&[4, 9, 2, 30])?;
    let reversed: Vec<_> = hidden
        .iter()
        .map(|h| {
            let rows: Vec<&[f64]> = (0..h.rows()).rev().map(|r| h.row(r)).collect();
            gradsub::matcore::Matrix::from_rows(&rows).unwrap()
        })
        .collect();
    let a = model.querying_transformer_forward(&hidden)?;
    let b = model.querying_transformer_forward(&reversed)?;
    println!("reversing the planner states changes the output by {:.1e}", a.sub(&b)?.frobenius_norm());

    let chunk = model.action_forward(&a)?;
    println!("action chunk {:?}", chunk.shape());
    Ok(())
}
