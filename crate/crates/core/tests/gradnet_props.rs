use gradsub::gradnet::{ModelConfig, Objective, ToyModel};
use gradsub::synthtasks::{encode, EncodedExample, SceneStream, TaskConfig};
use gradsub::Error;

fn small_task() -> TaskConfig {
    TaskConfig {
        objects: 2,
        classes: 3,
        bins: 4,
        min_dist: 0.05,
    }
}

fn small_config(layers: usize, k: usize, decay: f64) -> ModelConfig {
    let codec = small_task().codec();
    ModelConfig {
        d: 8,
        layers,
        queries: 2,
        k,
        horizon: 3,
        vocab_size: codec.vocab_size(),
        prompt_id: codec.prompt_id(),
        decay,
    }
}

fn batch(seed: u64, n: usize, mixed_prompt: bool) -> Vec<EncodedExample> {
    let task = small_task();
    let codec = task.codec();
    let mut s = SceneStream::new(seed, 9, task);
    (0..n)
        .map(|i| encode(&s.next_scene().unwrap(), mixed_prompt && i % 2 == 0, &codec, 3))
        .collect()
}

fn fd_check(model: &ToyModel, data: &[EncodedExample], objective: Objective) {
    let analytic = model.gradients(data, objective).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (pi, name) in model.names().iter().enumerate() {
        for e in 0..model.params()[pi].as_slice().len() {
            let mut plus = model.clone();
            plus.params_mut()[pi].as_mut_slice()[e] += h;
            let mut minus = model.clone();
            minus.params_mut()[pi].as_mut_slice()[e] -= h;
            let fd = (plus.eval_loss(data, objective).unwrap() - minus.eval_loss(data, objective).unwrap()) / (2.0 * h);
            let an = analytic[pi].as_slice()[e];
            // Decay only scales the backward pass, so planner entries of the
            // action gradient are compared against the undecayed difference.
            let an = if objective == Objective::Action && gradsub::gradnet::is_planner_param(name) {
                an / model.config.decay
            } else {
                an
            };
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
            worst = worst.max(err);
            assert!(err < 1e-4, "{name}[{e}]: analytic {an:e} vs numeric {fd:e}");
        }
    }
    assert!(worst < 1e-4);
}

#[test]
fn finite_differences_grounding_every_parameter() {
    let model = ToyModel::init(small_config(1, 1, 1.0), 3).unwrap();
    fd_check(&model, &batch(5, 3, true), Objective::Grounding);
    let model = ToyModel::init(small_config(2, 2, 1.0), 4).unwrap();
    fd_check(&model, &batch(6, 3, true), Objective::Grounding);
}

#[test]
fn finite_differences_action_every_parameter() {
    let model = ToyModel::init(small_config(1, 1, 1.0), 7).unwrap();
    fd_check(&model, &batch(8, 3, true), Objective::Action);
    let model = ToyModel::init(small_config(2, 2, 0.5), 9).unwrap();
    fd_check(&model, &batch(10, 3, true), Objective::Action);
}

#[test]
fn decay_scales_planner_gradients_only() {
    let data = batch(11, 4, false);
    let base = ToyModel::init(small_config(2, 1, 1.0), 12).unwrap();
    let g1 = base.gradients(&data, Objective::Action).unwrap();
    let g_half = base.with_decay(0.5).unwrap().gradients(&data, Objective::Action).unwrap();
    let g0 = base.with_decay(0.0).unwrap().gradients(&data, Objective::Action).unwrap();
    for (i, name) in base.names().iter().enumerate() {
        let (a, b, z) = (g1[i].as_slice(), g_half[i].as_slice(), g0[i].as_slice());
        if gradsub::gradnet::is_planner_param(name) {
            for ((x, y), w) in a.iter().zip(b).zip(z) {
                assert_eq!(*y, 0.5 * x, "{name}");
                assert_eq!(*w, 0.0, "{name}");
            }
        } else {
            assert_eq!(a, b, "{name}");
            assert_eq!(a, z, "{name}");
        }
    }
    // The forward pass does not depend on the decay factor.
    let l1 = base.eval_loss(&data, Objective::Action).unwrap();
    let l0 = base.with_decay(0.0).unwrap().eval_loss(&data, Objective::Action).unwrap();
    assert_eq!(l1, l0);
}

#[test]
fn invalid_decay_is_rejected() {
    let m = ToyModel::init(small_config(1, 1, 0.5), 1).unwrap();
    assert!(matches!(m.with_decay(1.5), Err(Error::InvalidDecay(_))));
    assert!(matches!(m.with_decay(-0.1), Err(Error::InvalidDecay(_))));
}

#[test]
fn batch_mean_equals_mean_of_singles() {
    let model = ToyModel::init(small_config(2, 2, 0.5), 13).unwrap();
    let data = batch(14, 6, true);
    for obj in [Objective::Grounding, Objective::Action] {
        let full = model.gradients(&data, obj).unwrap();
        let singles: Vec<_> = data.iter().map(|e| model.gradients(std::slice::from_ref(e), obj).unwrap()).collect();
        for p in 0..full.len() {
            for e in 0..full[p].as_slice().len() {
                let m = singles.iter().map(|g| g[p].as_slice()[e]).sum::<f64>() / data.len() as f64;
                assert!((m - full[p].as_slice()[e]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn querying_output_shape_is_independent_of_length() {
    let cfg = small_config(2, 2, 0.5);
    let model = ToyModel::init(cfg.clone(), 15).unwrap();
    for len in [1usize, 2, 7, 33, 128] {
        let ids: Vec<usize> = (0..len).map(|i| i % cfg.vocab_size).collect();
        let hidden = model.planner_forward(&ids).unwrap();
        let q = model.querying_transformer_forward(&hidden).unwrap();
        assert_eq!(q.shape(), (cfg.queries, cfg.d));
        let a = model.action_forward(&q).unwrap();
        assert_eq!(a.shape(), (cfg.horizon, 2));
    }
}

#[test]
fn querying_is_permutation_invariant_over_planner_positions() {
    let cfg = small_config(1, 1, 0.5);
    let model = ToyModel::init(cfg.clone(), 16).unwrap();
    let hidden = model.planner_forward(&[0, 3, 5, 7, 2]).unwrap();
    let perm = [3usize, 0, 4, 1, 2];
    let permuted: Vec<_> = hidden
        .iter()
        .map(|h| {
            let rows: Vec<&[f64]> = perm.iter().map(|&i| h.row(i)).collect();
            gradsub::matcore::Matrix::from_rows(&rows).unwrap()
        })
        .collect();
    let a = model.querying_transformer_forward(&hidden).unwrap();
    let b = model.querying_transformer_forward(&permuted).unwrap();
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn uniform_values_pass_through_attention() {
    // Identical planner rows make every softmax weighting return that row.
    let cfg = small_config(1, 1, 0.5);
    let mut model = ToyModel::init(cfg.clone(), 17).unwrap();
    *model.param_mut("xattn.0.wo").unwrap() = gradsub::matcore::Matrix::identity(cfg.d);
    *model.param_mut("xattn.0.wv").unwrap() = gradsub::matcore::Matrix::identity(cfg.d);
    let row: Vec<f64> = (0..cfg.d).map(|i| i as f64 * 0.1 - 0.3).collect();
    let h = gradsub::matcore::Matrix::from_rows(&vec![row.as_slice(); 6]).unwrap();
    let q = model.querying_transformer_forward(&[h]).unwrap();
    for r in 0..cfg.queries {
        for (x, y) in q.row(r).iter().zip(&row) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_model_ignores_input() {
    let model = ToyModel::zeros(small_config(2, 1, 0.5)).unwrap();
    let a = model.planner_forward(&[0, 1, 2]).unwrap();
    let b = model.planner_forward(&[5, 4, 3]).unwrap();
    // With zero parameters only the positional code remains.
    assert_eq!(a, b);
}

#[test]
fn forward_is_deterministic() {
    let model = ToyModel::init(small_config(2, 2, 0.5), 18).unwrap();
    let ids = [1usize, 4, 6, 2, 9];
    assert_eq!(model.planner_forward(&ids).unwrap(), model.planner_forward(&ids).unwrap());
    let again = ToyModel::init(small_config(2, 2, 0.5), 18).unwrap();
    assert_eq!(model, again);
}

#[test]
fn out_of_vocabulary_is_an_error() {
    let cfg = small_config(1, 1, 0.5);
    let model = ToyModel::init(cfg.clone(), 19).unwrap();
    assert!(matches!(
        model.planner_forward(&[cfg.vocab_size]),
        Err(Error::OutOfVocabulary { .. })
    ));
}

#[test]
fn softmax_rows_sum_to_one() {
    let model = ToyModel::init(small_config(2, 1, 0.5), 20).unwrap();
    let data = batch(21, 2, false);
    let mut f = model.begin();
    f.loss(&data, Objective::Action).unwrap();
    let seq = data[0].token_ids.len();
    assert!(!f.attention.is_empty());
    for a in f.attention.clone() {
        let w = f.tape.attention_weights(a).unwrap();
        for row in w.chunks(seq) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|p| *p >= 0.0));
        }
    }
}
