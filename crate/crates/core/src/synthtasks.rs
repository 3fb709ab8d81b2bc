//! Seeded synthetic tabletop scenes and their token encodings.
//!
//! A scene holds `K` objects of distinct classes at positions in the unit
//! square. The grounding target is the position of the instructed object;
//! the action target is the constant-velocity chunk that moves the gripper
//! from [`ORIGIN`] to it in `H` equal steps.

use crate::error::{Error, Result};
use crate::rng::{stream, SeededRng};

/// Gripper start position.
pub const ORIGIN: [f64; 2] = [0.5, 0.0];

/// Probe batch size per data type.
pub const PROBE_BATCH: usize = 64;

const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub objects: usize,
    pub classes: usize,
    pub bins: usize,
    pub min_dist: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            objects: 5,
            classes: 5,
            bins: 16,
            min_dist: 0.05,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                key: key.into(),
                msg: msg.into(),
            })
        };
        if self.objects == 0 {
            return bad("task.objects", "must be positive");
        }
        if self.classes < self.objects {
            return bad("task.classes", "must be at least task.objects");
        }
        if self.bins < 2 {
            return bad("task.bins", "must be at least 2");
        }
        if !(self.min_dist >= 0.0 && self.min_dist < 1.0) {
            return bad("task.min_dist", "must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn codec(&self) -> TokenCodec {
        TokenCodec {
            bins: self.bins,
            classes: self.classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub position: [f64; 2],
    pub class_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub target_index: usize,
}

impl Scene {
    pub fn target(&self) -> &SceneObject {
        &self.objects[self.target_index]
    }
}

/// Vocabulary layout: x-bin tokens, y-bin tokens, class tokens, one
/// instruction token per class, the prompt token, the readout token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenCodec {
    pub bins: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token {
    X(usize),
    Y(usize),
    Class(usize),
    Instruction(usize),
    Prompt,
    Readout,
}

impl TokenCodec {
    pub fn vocab_size(&self) -> usize {
        2 * self.bins + 2 * self.classes + 2
    }

    pub fn prompt_id(&self) -> usize {
        2 * self.bins + 2 * self.classes
    }

    pub fn readout_id(&self) -> usize {
        self.prompt_id() + 1
    }

    /// Bin index of a coordinate in `[0, 1]`.
    pub fn quantize(&self, p: f64) -> usize {
        ((p * self.bins as f64).floor().max(0.0) as usize).min(self.bins - 1)
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) / self.bins as f64
    }

    pub fn encode_token(&self, t: Token) -> usize {
        match t {
            Token::X(b) => b,
            Token::Y(b) => self.bins + b,
            Token::Class(c) => 2 * self.bins + c,
            Token::Instruction(c) => 2 * self.bins + self.classes + c,
            Token::Prompt => self.prompt_id(),
            Token::Readout => self.readout_id(),
        }
    }

    pub fn decode_token(&self, id: usize) -> Option<Token> {
        let (b, c) = (self.bins, self.classes);
        Some(match id {
            i if i < b => Token::X(i),
            i if i < 2 * b => Token::Y(i - b),
            i if i < 2 * b + c => Token::Class(i - 2 * b),
            i if i < 2 * b + 2 * c => Token::Instruction(i - 2 * b - c),
            i if i == self.prompt_id() => Token::Prompt,
            i if i == self.readout_id() => Token::Readout,
            _ => return None,
        })
    }

    /// Recovers `(class, bin centers)` for every object token triple.
    pub fn decode_objects(&self, token_ids: &[usize]) -> Vec<(usize, [f64; 2])> {
        token_ids
            .chunks_exact(3)
            .map_while(|tri| match tri.iter().map(|t| self.decode_token(*t)).collect::<Vec<_>>()[..] {
                [Some(Token::Class(c)), Some(Token::X(x)), Some(Token::Y(y))] => {
                    Some((c, [self.bin_center(x), self.bin_center(y)]))
                }
                _ => None,
            })
            .collect()
    }
}

/// One training or probing example.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub token_ids: Vec<usize>,
    pub grounding_target: [f64; 2],
    /// `H x 2` row-major per-step deltas.
    pub action_target: Vec<f64>,
}

/// Samples a scene. Classes are distinct, positions pairwise at least
/// `min_dist` apart.
pub fn gen_scene(rng: &mut SeededRng, cfg: &TaskConfig) -> Result<Scene> {
    let mut classes: Vec<usize> = (0..cfg.classes).collect();
    for i in 0..cfg.objects {
        let j = i + rng.below(cfg.classes - i);
        classes.swap(i, j);
    }
    let mut objects: Vec<SceneObject> = Vec::with_capacity(cfg.objects);
    let min2 = cfg.min_dist * cfg.min_dist;
    for &class_id in &classes[..cfg.objects] {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let p = [rng.next_f64(), rng.next_f64()];
            let clear = objects.iter().all(|o| {
                let dx = o.position[0] - p[0];
                let dy = o.position[1] - p[1];
                dx * dx + dy * dy >= min2
            });
            if clear {
                placed = Some(p);
                break;
            }
        }
        let position = placed.ok_or(Error::PlacementFailure(MAX_PLACEMENT_ATTEMPTS))?;
        objects.push(SceneObject { position, class_id });
    }
    let target_index = rng.below(cfg.objects);
    Ok(Scene {
        objects,
        target_index,
    })
}

/// `[class, x, y]` per object in ascending class order, the instruction token, the optional prompt
/// token, then the readout token.
pub fn encode(scene: &Scene, with_prompt: bool, codec: &TokenCodec, horizon: usize) -> EncodedExample {
    let mut token_ids = Vec::with_capacity(3 * scene.objects.len() + 3);
    let mut objs: Vec<&SceneObject> = scene.objects.iter().collect();
    objs.sort_by_key(|o| o.class_id);
    for o in objs {
        token_ids.push(codec.encode_token(Token::Class(o.class_id)));
        token_ids.push(codec.encode_token(Token::X(codec.quantize(o.position[0]))));
        token_ids.push(codec.encode_token(Token::Y(codec.quantize(o.position[1]))));
    }
    token_ids.push(codec.encode_token(Token::Instruction(scene.target().class_id)));
    if with_prompt {
        token_ids.push(codec.prompt_id());
    }
    token_ids.push(codec.readout_id());

    let target = scene.target().position;
    let step = [
        (target[0] - ORIGIN[0]) / horizon as f64,
        (target[1] - ORIGIN[1]) / horizon as f64,
    ];
    EncodedExample {
        token_ids,
        grounding_target: target,
        action_target: step.repeat(horizon),
    }
}

/// Endless scene source for one stream of a master seed.
#[derive(Debug, Clone)]
pub struct SceneStream {
    rng: SeededRng,
    cfg: TaskConfig,
}

impl SceneStream {
    pub fn new(seed: u64, stream_id: u64, cfg: TaskConfig) -> Self {
        Self {
            rng: SeededRng::stream(seed, stream_id),
            cfg,
        }
    }

    pub fn next_scene(&mut self) -> Result<Scene> {
        gen_scene(&mut self.rng, &self.cfg)
    }

    pub fn take(&mut self, n: usize) -> Result<Vec<Scene>> {
        (0..n).map(|_| self.next_scene()).collect()
    }
}

/// The two fixed probing sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeBatches {
    pub grounding_scenes: Vec<Scene>,
    pub action_scenes: Vec<Scene>,
    /// Grounding probe, encoded without the prompt token.
    pub grounding: Vec<EncodedExample>,
    pub action: Vec<EncodedExample>,
}

/// 64 grounding and 64 action examples that depend only on `probe_seed`.
/// The action batch carries the prompt token when `action_prompt` is set.
pub fn probe_batches(
    probe_seed: u64,
    cfg: &TaskConfig,
    horizon: usize,
    action_prompt: bool,
) -> Result<ProbeBatches> {
    let mut src = SceneStream::new(probe_seed, stream::PROBE, cfg.clone());
    let grounding_scenes = src.take(PROBE_BATCH)?;
    let action_scenes = src.take(PROBE_BATCH)?;
    let codec = cfg.codec();
    let grounding = grounding_scenes
        .iter()
        .map(|s| encode(s, false, &codec, horizon))
        .collect();
    let action = action_scenes
        .iter()
        .map(|s| encode(s, action_prompt, &codec, horizon))
        .collect();
    Ok(ProbeBatches {
        grounding_scenes,
        action_scenes,
        grounding,
        action,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let cfg = TaskConfig::default();
        let a = gen_scene(&mut SeededRng::new(42), &cfg).unwrap();
        let b = gen_scene(&mut SeededRng::new(42), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_object_is_always_the_target() {
        let cfg = TaskConfig {
            objects: 1,
            ..TaskConfig::default()
        };
        let mut rng = SeededRng::new(9);
        for _ in 0..100 {
            assert_eq!(gen_scene(&mut rng, &cfg).unwrap().target_index, 0);
        }
    }

    #[test]
    fn crowded_scene_fails_placement() {
        let cfg = TaskConfig {
            objects: 5,
            classes: 5,
            bins: 16,
            min_dist: 0.99,
        };
        assert_eq!(
            gen_scene(&mut SeededRng::new(1), &cfg),
            Err(Error::PlacementFailure(1000))
        );
    }

    #[test]
    fn prompt_adds_one_token_before_readout() {
        let cfg = TaskConfig::default();
        let codec = cfg.codec();
        let scene = gen_scene(&mut SeededRng::new(5), &cfg).unwrap();
        let plain = encode(&scene, false, &codec, 16);
        let prompted = encode(&scene, true, &codec, 16);
        assert_eq!(prompted.token_ids.len(), plain.token_ids.len() + 1);
        let n = plain.token_ids.len();
        assert_eq!(prompted.token_ids[n - 1], codec.prompt_id());
        assert_eq!(prompted.token_ids[n], codec.readout_id());
        assert_eq!(&prompted.token_ids[..n - 1], &plain.token_ids[..n - 1]);
    }

    #[test]
    fn action_rows_are_constant_velocity() {
        let codec = TaskConfig::default().codec();
        let scene = Scene {
            objects: vec![SceneObject {
                position: [0.25, 0.75],
                class_id: 2,
            }],
            target_index: 0,
        };
        let h = 16;
        let ex = encode(&scene, false, &codec, h);
        for row in ex.action_target.chunks_exact(2) {
            assert_eq!(row, &[(0.25 - 0.5) / 16.0, 0.75 / 16.0]);
        }
        assert_eq!(ex.grounding_target, [0.25, 0.75]);
    }

    #[test]
    fn quantization_edges() {
        let codec = TaskConfig::default().codec();
        assert_eq!(codec.quantize(0.999), 15);
        assert_eq!(codec.quantize(0.0), 0);
        assert_eq!(codec.quantize(1.0), 15);
        for id in 0..codec.vocab_size() {
            let t = codec.decode_token(id).unwrap();
            assert_eq!(codec.encode_token(t), id);
        }
        assert_eq!(codec.decode_token(codec.vocab_size()), None);
    }

    #[test]
    fn probe_batches_are_fixed_size_and_seeded() {
        let p = probe_batches(11, &TaskConfig::default(), 16, true).unwrap();
        assert_eq!(p.grounding.len(), 64);
        assert_eq!(p.action.len(), 64);
        let q = probe_batches(11, &TaskConfig::default(), 16, true).unwrap();
        assert_eq!(p, q);
    }
}
