use gradsub::rng::SeededRng;
use gradsub::synthtasks::{encode, gen_scene, probe_batches, SceneStream, TaskConfig};

#[test]
fn ten_thousand_scenes_respect_min_distance_and_distinct_classes() {
    let cfg = TaskConfig::default();
    let mut rng = SeededRng::new(123);
    let mut worst = f64::INFINITY;
    for _ in 0..10_000 {
        let s = gen_scene(&mut rng, &cfg).unwrap();
        assert_eq!(s.objects.len(), cfg.objects);
        let mut classes: Vec<usize> = s.objects.iter().map(|o| o.class_id).collect();
        classes.sort_unstable();
        classes.dedup();
        assert_eq!(classes.len(), cfg.objects);
        for (i, a) in s.objects.iter().enumerate() {
            assert!(a.position.iter().all(|p| (0.0..1.0).contains(p)));
            for b in &s.objects[i + 1..] {
                let d = ((a.position[0] - b.position[0]).powi(2) + (a.position[1] - b.position[1]).powi(2)).sqrt();
                worst = worst.min(d);
            }
        }
    }
    assert!(worst >= cfg.min_dist, "closest pair {worst}");
}

#[test]
fn target_class_is_roughly_uniform() {
    let cfg = TaskConfig::default();
    let mut rng = SeededRng::new(7);
    let n = 10_000;
    let mut counts = vec![0usize; cfg.classes];
    for _ in 0..n {
        counts[gen_scene(&mut rng, &cfg).unwrap().target().class_id] += 1;
    }
    // Chi-square with 4 degrees of freedom, far beyond the 0.1% point.
    let expected = n as f64 / cfg.classes as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 18.5, "{counts:?}");
}

#[test]
fn probe_sets_are_disjoint_from_training_streams() {
    let cfg = TaskConfig::default();
    let probes = probe_batches(1_000_003, &cfg, 16, true).unwrap();
    let mut train = SceneStream::new(1, gradsub::rng::stream::TRAIN, cfg.clone());
    let train_scenes = train.take(2000).unwrap();
    for p in probes.grounding_scenes.iter().chain(&probes.action_scenes) {
        assert!(!train_scenes.contains(p));
    }
    for g in &probes.grounding_scenes {
        assert!(!probes.action_scenes.contains(g));
    }
}

#[test]
fn encoded_objects_decode_to_their_bin_centres() {
    let cfg = TaskConfig::default();
    let codec = cfg.codec();
    let half_bin = 0.5 / cfg.bins as f64;
    let mut s = SceneStream::new(5, 9, cfg.clone());
    for _ in 0..500 {
        let scene = s.next_scene().unwrap();
        let ex = encode(&scene, false, &codec, 16);
        let decoded = codec.decode_objects(&ex.token_ids);
        assert_eq!(decoded.len(), scene.objects.len());
        for (class, centre) in decoded {
            let o = scene.objects.iter().find(|o| o.class_id == class).unwrap();
            for k in 0..2 {
                assert!((o.position[k] - centre[k]).abs() <= half_bin + 1e-12);
            }
        }
    }
}
