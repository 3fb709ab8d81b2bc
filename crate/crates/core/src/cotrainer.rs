//! Training strategies, the optimizer, periodic PSS probing and run
//! reports.
//!
//! Three strategies share one Stage-1 checkpoint (grounding-only
//! pre-training) and differ in Stage 2:
//!
//! | strategy           | grounding co-training | prompt token on action data |
//! |--------------------|-----------------------|-----------------------------|
//! | `Vanilla`          | no                    | no                          |
//! | `Cotrain`          | yes                   | no                          |
//! | `SpatiallyGuided`  | yes                   | yes                         |

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gradnet::{ModelConfig, Objective, ToyModel};
use crate::matcore::{Matrix, RankTolerance};
use crate::rng::stream;
use crate::subspace::{pss_trace, PssResult};
use crate::synthtasks::{encode, probe_batches, EncodedExample, ProbeBatches, SceneStream, TaskConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Vanilla,
    Cotrain,
    SpatiallyGuided,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::Vanilla,
        StrategyKind::Cotrain,
        StrategyKind::SpatiallyGuided,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Vanilla => "Vanilla",
            StrategyKind::Cotrain => "Cotrain",
            StrategyKind::SpatiallyGuided => "SpatiallyGuided",
        }
    }

    pub fn config_name(self) -> &'static str {
        match self {
            StrategyKind::Vanilla => "vanilla",
            StrategyKind::Cotrain => "cotrain",
            StrategyKind::SpatiallyGuided => "spatially_guided",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "vanilla" => Some(StrategyKind::Vanilla),
            "cotrain" => Some(StrategyKind::Cotrain),
            "spatially_guided" | "spatiallyguided" => Some(StrategyKind::SpatiallyGuided),
            _ => None,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `grounding : action` loss weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRatio {
    pub grounding: f64,
    pub action: f64,
}

impl LossRatio {
    pub fn new(grounding: f64, action: f64) -> Result<Self> {
        if !(grounding > 0.0 && action > 0.0 && grounding.is_finite() && action.is_finite()) {
            return Err(Error::Config {
                key: "strategy.loss_ratio".into(),
                msg: format!("weights must be positive, got {grounding}:{action}"),
            });
        }
        Ok(Self { grounding, action })
    }

    /// Parses `a:b`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config {
            key: "strategy.loss_ratio".into(),
            msg: format!("expected a:b, got {s:?}"),
        };
        let (a, b) = s.trim().split_once(':').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        Self::new(a, b)
    }

    /// Grounding weight once the action weight is normalized to 1.
    pub fn grounding_weight(&self) -> f64 {
        self.grounding / self.action
    }
}

impl Default for LossRatio {
    fn default() -> Self {
        Self {
            grounding: 1.0,
            action: 10.0,
        }
    }
}

impl fmt::Display for LossRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.grounding, self.action)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub use_prompt: bool,
    pub cotrain: bool,
    pub loss_ratio: LossRatio,
}

impl StrategyConfig {
    pub fn preset(kind: StrategyKind, loss_ratio: LossRatio) -> Self {
        let (cotrain, use_prompt) = match kind {
            StrategyKind::Vanilla => (false, false),
            StrategyKind::Cotrain => (true, false),
            StrategyKind::SpatiallyGuided => (true, true),
        };
        Self {
            kind,
            use_prompt,
            cotrain,
            loss_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction and no weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.as_slice().len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((x, gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *x -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    /// Parameter whose gradients are compared; `None` means the final
    /// planner block's q-projection.
    pub param: Option<String>,
    pub rank_tol: RankTolerance,
    /// Subtract each gradient's mean column before comparing.
    pub center: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            param: None,
            rank_tol: RankTolerance::new(DEFAULT_PROBE_RANK_TOL).expect("valid"),
            center: false,
        }
    }
}

/// Relative singular-value cutoff used when probing. See the crate README
/// for why this is larger than the matrix-level default.
pub const DEFAULT_PROBE_RANK_TOL: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub master_seed: u64,
    pub probe_seed: u64,
    pub pretrain_steps: usize,
    pub total_steps: usize,
    pub probe_every: usize,
    pub batch_action: usize,
    pub batch_grounding: usize,
    pub optimizer: AdamConfig,
    pub model: ModelConfig,
    pub task: TaskConfig,
    pub probe: ProbeConfig,
}

impl TrainConfig {
    pub fn with_defaults(task: TaskConfig) -> Self {
        let codec = task.codec();
        Self {
            master_seed: 1,
            probe_seed: 1_000_003,
            pretrain_steps: 2000,
            total_steps: 3000,
            probe_every: 100,
            batch_action: 16,
            batch_grounding: 4,
            optimizer: AdamConfig::default(),
            model: ModelConfig {
                d: 32,
                layers: 2,
                queries: 4,
                k: 1,
                horizon: 16,
                vocab_size: codec.vocab_size(),
                prompt_id: codec.prompt_id(),
                decay: 0.5,
            },
            task,
            probe: ProbeConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                key: key.into(),
                msg: msg.into(),
            })
        };
        self.task.validate()?;
        self.model.validate()?;
        if self.probe_every == 0 {
            return bad("probe_every", "must be positive");
        }
        if self.batch_action == 0 {
            return bad("batch_action", "must be positive");
        }
        if self.batch_grounding == 0 {
            return bad("batch_grounding", "must be positive");
        }
        let codec = self.task.codec();
        if self.model.vocab_size != codec.vocab_size() || self.model.prompt_id != codec.prompt_id() {
            return bad("model.vocab_size", "does not match the task vocabulary");
        }
        Ok(())
    }

    pub fn probe_param(&self) -> String {
        self.probe
            .param
            .clone()
            .unwrap_or_else(|| self.model.default_probe_param())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::with_defaults(TaskConfig::default())
    }
}

/// One probe measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct PssSample {
    pub step: usize,
    /// NaN when `degenerate`.
    pub pss: f64,
    pub rank_spat: usize,
    pub rank_act: usize,
    pub principal_cosines: Vec<f64>,
    pub grounding_eval_mse: f64,
    pub action_eval_mse: f64,
    /// A probe gradient vanished; the similarity is undefined.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLoss {
    pub step: usize,
    pub total: f64,
    pub action: f64,
    /// NaN when grounding data is not used.
    pub grounding: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub strategy: StrategyConfig,
    pub config: TrainConfig,
    pub seed: u64,
    pub samples: Vec<PssSample>,
    pub losses: Vec<StepLoss>,
    pub final_model: ToyModel,
}

/// Number of trailing samples averaged into the final-window PSS.
pub const FINAL_WINDOW: usize = 5;

impl RunReport {
    /// Mean PSS over the last [`FINAL_WINDOW`] non-degenerate samples.
    pub fn final_window_pss(&self) -> f64 {
        let vals: Vec<f64> = self
            .samples
            .iter()
            .rev()
            .filter(|s| !s.degenerate)
            .take(FINAL_WINDOW)
            .map(|s| s.pss)
            .collect();
        mean(&vals)
    }

    /// Mean PSS over every non-degenerate sample.
    pub fn time_average_pss(&self) -> f64 {
        let vals: Vec<f64> = self.samples.iter().filter(|s| !s.degenerate).map(|s| s.pss).collect();
        mean(&vals)
    }

    pub fn first(&self) -> &PssSample {
        &self.samples[0]
    }

    pub fn last(&self) -> &PssSample {
        self.samples.last().expect("at least the step-0 sample")
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn check_finite(loss: f64, what: &str, step: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence(format!("{what} loss is {loss} at step {step}")))
    }
}

fn encode_all(scenes: &[crate::synthtasks::Scene], prompt: bool, config: &TrainConfig) -> Vec<EncodedExample> {
    let codec = config.task.codec();
    scenes
        .iter()
        .map(|s| encode(s, prompt, &codec, config.model.horizon))
        .collect()
}

/// Stage 1: grounding-only training of the planner and grounding head.
/// Each step uses `batch_action` scenes, half encoded with the prompt token
/// and half without.
pub fn pretrain_grounding(config: &TrainConfig, init: ToyModel) -> Result<ToyModel> {
    config.validate()?;
    let mut model = init;
    if config.pretrain_steps == 0 {
        return Ok(model);
    }
    let mut scenes = SceneStream::new(config.master_seed, stream::PRETRAIN, config.task.clone());
    let mut opt = Adam::new(config.optimizer);
    let half = (config.batch_action / 2).max(1);
    for step in 0..config.pretrain_steps {
        let with = encode_all(&scenes.take(half)?, true, config);
        let without = encode_all(&scenes.take(half)?, false, config);
        let mut f = model.begin();
        let a = f.loss(&with, Objective::Grounding)?;
        let b = f.loss(&without, Objective::Grounding)?;
        let loss = f.tape.weighted_sum(vec![(a, 0.5), (b, 0.5)])?;
        check_finite(f.tape.value(loss)[0], "grounding", step)?;
        f.tape.backward(loss)?;
        let grads = f.param_grads()?;
        drop(f);
        opt.step(model.params_mut(), &grads);
    }
    Ok(model)
}

fn centered(g: Matrix) -> Matrix {
    let (r, c) = g.shape();
    let mut out = g;
    for i in 0..r {
        let row_mean = out.row(i).iter().sum::<f64>() / c as f64;
        for j in 0..c {
            let v = out.get(i, j) - row_mean;
            out.set(i, j, v);
        }
    }
    out
}

/// Probe-set losses and the gradients of both objectives for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGradients {
    pub g_spat: Matrix,
    pub g_act: Matrix,
    pub grounding_mse: f64,
    pub action_mse: f64,
}

/// Gradients of both objectives for the probe parameter on the fixed probe
/// batches, as compared by [`probe_pss`]. The action gradient is taken
/// through the model's own decay factor. The model is not modified.
pub fn probe_gradients(model: &ToyModel, probes: &ProbeBatches, probe: &ProbeConfig) -> Result<ProbeGradients> {
    let param = probe
        .param
        .clone()
        .unwrap_or_else(|| model.config.default_probe_param());
    let idx = model.index_of(&param)?;
    let (grounding_mse, gs) = model.loss_and_gradients(&probes.grounding, Objective::Grounding)?;
    let (action_mse, ga) = model.loss_and_gradients(&probes.action, Objective::Action)?;
    let mut g_spat = gs.into_iter().nth(idx).expect("index in range");
    let mut g_act = ga.into_iter().nth(idx).expect("index in range");
    if probe.center {
        g_spat = centered(g_spat);
        g_act = centered(g_act);
    }
    Ok(ProbeGradients {
        g_spat,
        g_act,
        grounding_mse,
        action_mse,
    })
}

/// One probe measurement. A vanished probe gradient is an
/// [`Error::EmptySubspace`].
pub fn probe_pss(model: &ToyModel, probes: &ProbeBatches, probe: &ProbeConfig, step: usize) -> Result<PssSample> {
    let pg = probe_gradients(model, probes, probe)?;
    let PssResult {
        value,
        rank_a,
        rank_b,
        principal_cosines,
    } = pss_trace(&pg.g_spat, &pg.g_act, probe.rank_tol)?;
    Ok(PssSample {
        step,
        pss: value,
        rank_spat: rank_a,
        rank_act: rank_b,
        principal_cosines,
        grounding_eval_mse: pg.grounding_mse,
        action_eval_mse: pg.action_mse,
        degenerate: false,
    })
}

/// Like [`probe_pss`], but a vanished gradient yields a flagged sample so a
/// run can continue.
fn probe_or_flag(model: &ToyModel, probes: &ProbeBatches, probe: &ProbeConfig, step: usize) -> Result<PssSample> {
    match probe_pss(model, probes, probe, step) {
        Err(Error::EmptySubspace(_)) => {
            let pg = probe_gradients(model, probes, probe)?;
            Ok(PssSample {
                step,
                pss: f64::NAN,
                rank_spat: 0,
                rank_act: 0,
                principal_cosines: Vec::new(),
                grounding_eval_mse: pg.grounding_mse,
                action_eval_mse: pg.action_mse,
                degenerate: true,
            })
        }
        other => other,
    }
}

/// Stage 2 for one strategy, starting from `init`.
pub fn train(strategy: &StrategyConfig, config: &TrainConfig, init: ToyModel) -> Result<RunReport> {
    config.validate()?;
    let mut model = init;
    let probes = probe_batches(config.probe_seed, &config.task, config.model.horizon, strategy.use_prompt)?;
    let mut scenes = SceneStream::new(config.master_seed, stream::TRAIN, config.task.clone());
    let mut opt = Adam::new(config.optimizer);
    let g_weight = strategy.loss_ratio.grounding_weight();
    let mut samples = Vec::new();
    let mut losses = Vec::with_capacity(config.total_steps);

    for step in 0..=config.total_steps {
        if step % config.probe_every == 0 {
            samples.push(probe_or_flag(&model, &probes, &config.probe, step)?);
        }
        if step == config.total_steps {
            break;
        }
        // Both batches are drawn every step, cotrain or not.
        let action_scenes = scenes.take(config.batch_action)?;
        let grounding_scenes = scenes.take(config.batch_grounding)?;
        let action_batch = encode_all(&action_scenes, strategy.use_prompt, config);

        let mut f = model.begin();
        let l_act = f.loss(&action_batch, Objective::Action)?;
        let act_value = f.tape.value(l_act)[0];
        check_finite(act_value, "action", step)?;
        let (total, spat_value) = if strategy.cotrain {
            let grounding_batch = encode_all(&grounding_scenes, false, config);
            let l_spat = f.loss(&grounding_batch, Objective::Grounding)?;
            let v = f.tape.value(l_spat)[0];
            check_finite(v, "grounding", step)?;
            (f.tape.weighted_sum(vec![(l_act, 1.0), (l_spat, g_weight)])?, v)
        } else {
            (l_act, f64::NAN)
        };
        losses.push(StepLoss {
            step,
            total: f.tape.value(total)[0],
            action: act_value,
            grounding: spat_value,
        });
        f.tape.backward(total)?;
        let grads = f.param_grads()?;
        drop(f);
        opt.step(model.params_mut(), &grads);
        if !model.all_finite() {
            return Err(Error::Divergence(format!("non-finite parameter after step {step}")));
        }
    }

    Ok(RunReport {
        strategy: strategy.clone(),
        config: config.clone(),
        seed: config.master_seed,
        samples,
        losses,
        final_model: model,
    })
}

/// Stage 1 then Stage 2 for a single strategy.
pub fn run_single(strategy: &StrategyConfig, config: &TrainConfig) -> Result<(ToyModel, RunReport)> {
    let init = ToyModel::init(config.model.clone(), config.master_seed)?;
    let stage1 = pretrain_grounding(config, init)?;
    let report = train(strategy, config, stage1.clone())?;
    Ok((stage1, report))
}

/// Worker count for independent runs, from `GRADSUB_THREADS` (default 1).
pub fn thread_budget() -> usize {
    std::env::var("GRADSUB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or(1)
}

fn run_jobs<T: Send, J: Sync>(jobs: &[J], threads: usize, f: impl Fn(&J) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    if threads <= 1 {
        return jobs.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    // `collect` keeps job order, so output is independent of scheduling.
    pool.install(|| jobs.par_iter().map(&f).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub kind: StrategyKind,
    pub seeds: usize,
    pub final_pss_mean: f64,
    pub final_pss_std: f64,
    pub avg_pss_mean: f64,
    pub grounding_mse_mean: f64,
    pub grounding_mse_std: f64,
    pub action_mse_mean: f64,
    pub action_mse_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    /// Runs ordered by seed, then strategy in [`StrategyKind::ALL`] order.
    pub runs: Vec<RunReport>,
    pub summary: Vec<StrategySummary>,
}

/// Reference values measured on a billion-parameter backbone; the toy
/// model is not expected to reproduce them.
pub const REFERENCE_PSS_COTRAIN: f64 = 0.25;
pub const REFERENCE_PSS_SPATIALLY_GUIDED: f64 = 0.42;

impl StudyReport {
    pub fn runs_for(&self, kind: StrategyKind) -> impl Iterator<Item = &RunReport> {
        self.runs.iter().filter(move |r| r.strategy.kind == kind)
    }
}

/// Every strategy for every seed, each seed's three runs starting from one
/// shared Stage-1 checkpoint.
pub fn run_strategy_study(seeds: &[u64], config: &TrainConfig, loss_ratio: LossRatio) -> Result<StudyReport> {
    if seeds.is_empty() {
        return Err(Error::Config {
            key: "seeds".into(),
            msg: "at least one seed is required".into(),
        });
    }
    let threads = thread_budget();
    let stage1: Vec<ToyModel> = run_jobs(seeds, threads, |seed| {
        let mut c = config.clone();
        c.master_seed = *seed;
        let init = ToyModel::init(c.model.clone(), *seed)?;
        pretrain_grounding(&c, init)
    })?;
    let jobs: Vec<(usize, StrategyKind)> = (0..seeds.len())
        .flat_map(|i| StrategyKind::ALL.into_iter().map(move |k| (i, k)))
        .collect();
    let runs = run_jobs(&jobs, threads, |(i, kind)| {
        let mut c = config.clone();
        c.master_seed = seeds[*i];
        train(&StrategyConfig::preset(*kind, loss_ratio), &c, stage1[*i].clone())
    })?;
    let summary = StrategyKind::ALL
        .iter()
        .map(|kind| summarize(*kind, runs.iter().filter(|r| r.strategy.kind == *kind)))
        .collect();
    Ok(StudyReport { runs, summary })
}

fn summarize<'a>(kind: StrategyKind, runs: impl Iterator<Item = &'a RunReport>) -> StrategySummary {
    let runs: Vec<&RunReport> = runs.collect();
    let fin: Vec<f64> = runs.iter().map(|r| r.final_window_pss()).collect();
    let avg: Vec<f64> = runs.iter().map(|r| r.time_average_pss()).collect();
    let gm: Vec<f64> = runs.iter().map(|r| r.last().grounding_eval_mse).collect();
    let am: Vec<f64> = runs.iter().map(|r| r.last().action_eval_mse).collect();
    StrategySummary {
        kind,
        seeds: runs.len(),
        final_pss_mean: mean(&fin),
        final_pss_std: std_dev(&fin),
        avg_pss_mean: mean(&avg),
        grounding_mse_mean: mean(&gm),
        grounding_mse_std: std_dev(&gm),
        action_mse_mean: mean(&am),
        action_mse_std: std_dev(&am),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub ratio: LossRatio,
    pub seed: u64,
    pub grounding_mse: f64,
    pub action_mse: f64,
    pub final_pss: f64,
}

/// One spatially guided run per ratio per seed, sharing each seed's Stage-1
/// checkpoint. Rows are ordered by seed, then ratio as given.
pub fn run_ratio_sweep(ratios: &[LossRatio], seeds: &[u64], config: &TrainConfig) -> Result<Vec<SweepRow>> {
    if ratios.is_empty() || seeds.is_empty() {
        return Err(Error::Config {
            key: "ratios".into(),
            msg: "at least one ratio and one seed are required".into(),
        });
    }
    let threads = thread_budget();
    let stage1: Vec<ToyModel> = run_jobs(seeds, threads, |seed| {
        let mut c = config.clone();
        c.master_seed = *seed;
        let init = ToyModel::init(c.model.clone(), *seed)?;
        pretrain_grounding(&c, init)
    })?;
    let jobs: Vec<(usize, LossRatio)> = (0..seeds.len())
        .flat_map(|i| ratios.iter().map(move |r| (i, *r)))
        .collect();
    run_jobs(&jobs, threads, |(i, ratio)| {
        let mut c = config.clone();
        c.master_seed = seeds[*i];
        let r = train(
            &StrategyConfig::preset(StrategyKind::SpatiallyGuided, *ratio),
            &c,
            stage1[*i].clone(),
        )?;
        Ok(SweepRow {
            ratio: *ratio,
            seed: seeds[*i],
            grounding_mse: r.last().grounding_eval_mse,
            action_mse: r.last().action_eval_mse,
            final_pss: r.final_window_pss(),
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_single_step_matches_hand_computation() {
        // L = ½θ², so g = θ; after one step m̂ = θ and v̂ = θ².
        let theta = 0.7;
        let mut p = vec![Matrix::new(1, 1, vec![theta]).unwrap()];
        let g = vec![Matrix::new(1, 1, vec![theta]).unwrap()];
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut p, &g);
        let want = theta - 1e-3 * theta / (theta.abs() + 1e-8);
        assert!((p[0].get(0, 0) - want).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_parameter_bits() {
        let mut p = vec![Matrix::new(1, 2, vec![0.3, -1.25]).unwrap()];
        let g = vec![Matrix::zeros(1, 2)];
        let mut opt = Adam::new(AdamConfig::default());
        for _ in 0..5 {
            opt.step(&mut p, &g);
        }
        assert_eq!(p[0].as_slice(), &[0.3, -1.25]);
    }

    #[test]
    fn ratio_parsing() {
        let r = LossRatio::parse("1:10").unwrap();
        assert_eq!(r.grounding_weight(), 0.1);
        assert!(LossRatio::parse("0:1").is_err());
        assert!(LossRatio::parse("1-10").is_err());
        assert!(LossRatio::parse("a:b").is_err());
        assert_eq!(
            LossRatio::parse("2:20").unwrap().grounding_weight(),
            LossRatio::parse("1:10").unwrap().grounding_weight()
        );
    }

    #[test]
    fn strategy_presets() {
        let v = StrategyConfig::preset(StrategyKind::Vanilla, LossRatio::default());
        assert!(!v.cotrain && !v.use_prompt);
        let s = StrategyConfig::preset(StrategyKind::SpatiallyGuided, LossRatio::default());
        assert!(s.cotrain && s.use_prompt);
        assert_eq!(StrategyKind::parse("spatially-guided"), Some(StrategyKind::SpatiallyGuided));
    }
}
