//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment; keys are dotted
//! (`model.d`, `strategy.use_prompt`). Unknown or repeated keys are errors.
//! [`ExperimentConfig::to_canonical_text`] writes every key, resolved and
//! sorted, so the output re-parses to the same configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::cotrainer::{LossRatio, StrategyConfig, StrategyKind, TrainConfig};
use crate::error::{Error, Result};
use crate::matcore::RankTolerance;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub strategy: StrategyConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyConfig::preset(StrategyKind::SpatiallyGuided, LossRatio::default()),
            train: TrainConfig::default(),
        }
    }
}

fn err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| err(key, format!("cannot parse {v:?}")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(key, format!("expected true or false, got {v:?}"))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(line, format!("line {} is not `key = value`", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(err("", format!("line {} has an empty key", lineno + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(err(k, "key given twice"));
            }
        }

        let mut cfg = Self::default();
        let kind = match entries.remove("strategy") {
            Some(v) => StrategyKind::parse(&v).ok_or_else(|| err("strategy", format!("unknown strategy {v:?}")))?,
            None => cfg.strategy.kind,
        };
        let ratio = match entries.remove("strategy.loss_ratio") {
            Some(v) => LossRatio::parse(&v)?,
            None => LossRatio::default(),
        };
        cfg.strategy = StrategyConfig::preset(kind, ratio);

        let t = &mut cfg.train;
        for (k, v) in &entries {
            let (k, v) = (k.as_str(), v.as_str());
            match k {
                "seed" => t.master_seed = num(k, v)?,
                "probe_seed" => t.probe_seed = num(k, v)?,
                "strategy.use_prompt" => cfg.strategy.use_prompt = boolean(k, v)?,
                "strategy.cotrain" => cfg.strategy.cotrain = boolean(k, v)?,
                "strategy.pretrain_steps" => t.pretrain_steps = num(k, v)?,
                "train.total_steps" => t.total_steps = num(k, v)?,
                "train.probe_every" => t.probe_every = num(k, v)?,
                "train.batch_action" => t.batch_action = num(k, v)?,
                "train.batch_grounding" => t.batch_grounding = num(k, v)?,
                "optimizer.lr" => t.optimizer.lr = num(k, v)?,
                "optimizer.beta1" => t.optimizer.beta1 = num(k, v)?,
                "optimizer.beta2" => t.optimizer.beta2 = num(k, v)?,
                "optimizer.eps" => t.optimizer.eps = num(k, v)?,
                "model.d" => t.model.d = num(k, v)?,
                "model.layers" => t.model.layers = num(k, v)?,
                "model.queries" => t.model.queries = num(k, v)?,
                "model.k" => t.model.k = num(k, v)?,
                "model.horizon" => t.model.horizon = num(k, v)?,
                "model.decay" => t.model.decay = num(k, v)?,
                "task.objects" => t.task.objects = num(k, v)?,
                "task.classes" => t.task.classes = num(k, v)?,
                "task.bins" => t.task.bins = num(k, v)?,
                "task.min_dist" => t.task.min_dist = num(k, v)?,
                "probe.param" => t.probe.param = Some(v.to_string()),
                "probe.rank_tol" => {
                    t.probe.rank_tol = RankTolerance::new(num(k, v)?).map_err(|e| err(k, e.to_string()))?
                }
                "probe.center" => t.probe.center = boolean(k, v)?,
                _ => return Err(err(k, "unknown key")),
            }
        }

        let codec = t.task.codec();
        t.model.vocab_size = codec.vocab_size();
        t.model.prompt_id = codec.prompt_id();
        for (key, value) in [
            ("optimizer.lr", t.optimizer.lr),
            ("optimizer.eps", t.optimizer.eps),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(err(key, "must be positive"));
            }
        }
        for (key, value) in [("optimizer.beta1", t.optimizer.beta1), ("optimizer.beta2", t.optimizer.beta2)] {
            if !(0.0..1.0).contains(&value) {
                return Err(err(key, "must lie in [0, 1)"));
            }
        }
        t.validate().map_err(|e| match e {
            Error::Config { key, msg } => Error::Config {
                key: canonical_key(&key),
                msg,
            },
            other => err("config", other.to_string()),
        })?;
        if let Some(p) = &t.probe.param {
            let names = t.model.param_layout();
            match names.iter().find(|(n, _, _)| n == p) {
                None => return Err(err("probe.param", format!("no parameter named {p:?}"))),
                Some((_, r, _)) if *r != t.model.d => {
                    return Err(err("probe.param", format!("{p:?} does not have d rows")))
                }
                _ => {}
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Every key with its resolved value.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let t = &self.train;
        let s = &self.strategy;
        let mut m = BTreeMap::new();
        m.insert("seed", t.master_seed.to_string());
        m.insert("probe_seed", t.probe_seed.to_string());
        m.insert("strategy", s.kind.config_name().to_string());
        m.insert("strategy.use_prompt", s.use_prompt.to_string());
        m.insert("strategy.cotrain", s.cotrain.to_string());
        m.insert("strategy.loss_ratio", s.loss_ratio.to_string());
        m.insert("strategy.pretrain_steps", t.pretrain_steps.to_string());
        m.insert("train.total_steps", t.total_steps.to_string());
        m.insert("train.probe_every", t.probe_every.to_string());
        m.insert("train.batch_action", t.batch_action.to_string());
        m.insert("train.batch_grounding", t.batch_grounding.to_string());
        m.insert("optimizer.lr", t.optimizer.lr.to_string());
        m.insert("optimizer.beta1", t.optimizer.beta1.to_string());
        m.insert("optimizer.beta2", t.optimizer.beta2.to_string());
        m.insert("optimizer.eps", t.optimizer.eps.to_string());
        m.insert("model.d", t.model.d.to_string());
        m.insert("model.layers", t.model.layers.to_string());
        m.insert("model.queries", t.model.queries.to_string());
        m.insert("model.k", t.model.k.to_string());
        m.insert("model.horizon", t.model.horizon.to_string());
        m.insert("model.decay", t.model.decay.to_string());
        m.insert("task.objects", t.task.objects.to_string());
        m.insert("task.classes", t.task.classes.to_string());
        m.insert("task.bins", t.task.bins.to_string());
        m.insert("task.min_dist", t.task.min_dist.to_string());
        m.insert("probe.param", t.probe_param());
        m.insert("probe.rank_tol", t.probe.rank_tol.relative_threshold().to_string());
        m.insert("probe.center", t.probe.center.to_string());
        m
    }

    /// Sorted `key = value` lines, newline-terminated.
    pub fn to_canonical_text(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

fn canonical_key(k: &str) -> String {
    match k {
        "probe_every" | "batch_action" | "batch_grounding" => format!("train.{k}"),
        "task" => "task.objects".into(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let text = c.to_canonical_text();
        let back = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(back.to_canonical_text(), text);
        assert_eq!(back.train.model, c.train.model);
        let mut keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        let sorted = {
            let mut k = keys.clone();
            k.sort();
            k
        };
        assert_eq!(keys, sorted);
        keys.dedup();
        assert_eq!(keys.len(), text.lines().count());
    }

    #[test]
    fn overrides_and_comments() {
        let c = ExperimentConfig::parse(
            "# toy\nstrategy = vanilla\nmodel.d = 16 # narrower\nstrategy.loss_ratio = 1:5\ntrain.total_steps=10\n",
        )
        .unwrap();
        assert_eq!(c.strategy.kind, StrategyKind::Vanilla);
        assert!(!c.strategy.cotrain);
        assert_eq!(c.train.model.d, 16);
        assert_eq!(c.train.total_steps, 10);
        assert_eq!(c.strategy.loss_ratio.grounding_weight(), 0.2);
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            ("model.dd = 3", "model.dd"),
            ("model.d = x", "model.d"),
            ("strategy = fancy", "strategy"),
            ("strategy.loss_ratio = 0:1", "strategy.loss_ratio"),
            ("model.k = 5", "model.k"),
            ("train.probe_every = 0", "train.probe_every"),
            ("probe.param = nope", "probe.param"),
            ("seed = 1\nseed = 2", "seed"),
            ("model.decay = 2", "model.decay"),
        ];
        for (text, key) in cases {
            match ExperimentConfig::parse(text) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }
}
