//! Command implementations behind the `gradsub` binary, plus the file
//! formats they read and write.
//!
//! | command            | writes                                                  |
//! |--------------------|---------------------------------------------------------|
//! | `pss`              | JSON on stdout                                          |
//! | `train`            | `report.csv`, `init.ckpt`, `final.ckpt`, `config-echo.txt` |
//! | `study`            | `report_<strategy>_seed<n>.csv`, `summary.csv`, `pss_curves.svg` |
//! | `sweep`            | `sweep.csv`                                             |
//! | `dump-probe-grads` | `g_spat.grdm`, `g_act.grdm`                             |

pub mod config;
pub mod formats;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::cotrainer::{self, LossRatio, StrategyConfig, StrategyKind};
use crate::error::{Error, Result};
use crate::gradnet::ToyModel;
use crate::matcore::{Matrix, RankTolerance};
use crate::subspace::{pss_trace, PssResult};
use crate::synthtasks::probe_batches;

pub use config::ExperimentConfig;
pub use formats::Checkpoint;

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{}: not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

/// `1,2,5` or `1-5` (inclusive), or a mix.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = |part: &str| Error::Config {
        key: "seeds".into(),
        msg: format!("cannot parse {part:?}"),
    };
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad(part))?;
                let b: u64 = b.trim().parse().map_err(|_| bad(part))?;
                if b < a {
                    return Err(bad(part));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad(part))?),
        }
    }
    if out.is_empty() {
        return Err(bad(s));
    }
    Ok(out)
}

/// Comma-separated `a:b` pairs.
pub fn parse_ratios(s: &str) -> Result<Vec<LossRatio>> {
    let ratios: Vec<LossRatio> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            LossRatio::parse(p).map_err(|e| match e {
                Error::Config { msg, .. } => Error::Config {
                    key: "ratios".into(),
                    msg,
                },
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    if ratios.is_empty() {
        return Err(Error::Config {
            key: "ratios".into(),
            msg: "no ratios given".into(),
        });
    }
    Ok(ratios)
}

pub fn pss_json(r: &PssResult) -> String {
    serde_json::json!({
        "value": r.value,
        "rank_a": r.rank_a,
        "rank_b": r.rank_b,
        "principal_cosines": r.principal_cosines,
    })
    .to_string()
}

/// PSS of two gradient dumps.
pub fn cmd_pss(file_a: &Path, file_b: &Path, tol: RankTolerance) -> Result<PssResult> {
    let a = formats::read_grdm(file_a)?;
    let b = formats::read_grdm(file_b)?;
    pss_trace(&a, &b, tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutputs {
    pub report: cotrainer::RunReport,
    pub init: ToyModel,
}

/// One Stage-1 plus Stage-2 run of the configured strategy.
pub fn cmd_train(config: &ExperimentConfig, out_dir: &Path) -> Result<TrainOutputs> {
    ensure_dir(out_dir)?;
    let (init, report) = cotrainer::run_single(&config.strategy, &config.train)?;
    write_atomic(&out_dir.join("report.csv"), report::report_csv(&report).as_bytes())?;
    formats::write_ckpt(
        &out_dir.join("init.ckpt"),
        &Checkpoint {
            config: config.clone(),
            model: init.clone(),
        },
    )?;
    formats::write_ckpt(
        &out_dir.join("final.ckpt"),
        &Checkpoint {
            config: config.clone(),
            model: report.final_model.clone(),
        },
    )?;
    write_atomic(&out_dir.join("config-echo.txt"), config.to_canonical_text().as_bytes())?;
    Ok(TrainOutputs { report, init })
}

pub fn study_report_name(kind: StrategyKind, seed: u64) -> String {
    format!("report_{}_seed{}.csv", kind.config_name(), seed)
}

/// Every strategy for every seed.
pub fn cmd_study(config: &ExperimentConfig, seeds: &[u64], out_dir: &Path) -> Result<cotrainer::StudyReport> {
    ensure_dir(out_dir)?;
    let study = cotrainer::run_strategy_study(seeds, &config.train, config.strategy.loss_ratio)?;
    for r in &study.runs {
        write_atomic(
            &out_dir.join(study_report_name(r.strategy.kind, r.seed)),
            report::report_csv(r).as_bytes(),
        )?;
    }
    write_atomic(&out_dir.join("summary.csv"), report::summary_csv(&study.summary).as_bytes())?;
    write_atomic(&out_dir.join("pss_curves.svg"), report::pss_svg(&study).as_bytes())?;
    Ok(study)
}

/// Spatially guided runs across loss ratios.
pub fn cmd_sweep(
    config: &ExperimentConfig,
    ratios: &[LossRatio],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<cotrainer::SweepRow>> {
    ensure_dir(out_dir)?;
    let rows = cotrainer::run_ratio_sweep(ratios, seeds, &config.train)?;
    write_atomic(&out_dir.join("sweep.csv"), report::sweep_csv(&rows).as_bytes())?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDump {
    pub g_spat: Matrix,
    pub g_act: Matrix,
    pub paths: (PathBuf, PathBuf),
}

/// Probe gradients of a checkpoint, as the training loop would compute
/// them, written as two GRDM files. Probe settings and the action-batch
/// encoding come from `config`; the model comes from the checkpoint.
pub fn cmd_dump_probe_grads(checkpoint: &Path, config: &ExperimentConfig, out_dir: &Path) -> Result<ProbeDump> {
    let ckpt = formats::read_ckpt(checkpoint)?;
    let model = ckpt.model;
    let task = &ckpt.config.train.task;
    if task.codec().vocab_size() != config.train.task.codec().vocab_size() {
        return Err(Error::DimensionMismatch(
            "checkpoint and config use different task vocabularies".into(),
        ));
    }
    let probes = probe_batches(
        config.train.probe_seed,
        task,
        model.config.horizon,
        config.strategy.use_prompt,
    )?;
    let pg = cotrainer::probe_gradients(&model, &probes, &config.train.probe)?;
    ensure_dir(out_dir)?;
    let paths = (out_dir.join("g_spat.grdm"), out_dir.join("g_act.grdm"));
    formats::write_grdm(&paths.0, &pg.g_spat)?;
    formats::write_grdm(&paths.1, &pg.g_act)?;
    Ok(ProbeDump {
        g_spat: pg.g_spat,
        g_act: pg.g_act,
        paths,
    })
}

/// Resolved configuration for a command: the file if given, otherwise the
/// defaults.
pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

/// Preset for `kind` with the configured ratio.
pub fn strategy_for(config: &ExperimentConfig, kind: StrategyKind) -> StrategyConfig {
    StrategyConfig::preset(kind, config.strategy.loss_ratio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_and_ratios() {
        assert_eq!(parse_seeds("1-3,7").unwrap(), vec![1, 2, 3, 7]);
        assert!(parse_seeds("3-1").is_err());
        assert!(parse_seeds("").is_err());
        assert_eq!(parse_ratios("1:1, 1:5").unwrap().len(), 2);
        match parse_ratios("0:1") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "ratios"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"first version").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"second");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
