//! Train briefly, dump the probe gradients of the final checkpoint as GRDM
//! files, and score them the way `gradsub pss` does.

use gradsub::matcore::RankTolerance;
use gradsub::psscli::{self, ExperimentConfig};

fn main() -> gradsub::Result<()> {
    let dir = std::env::temp_dir().join(format!("gradsub-dump-{}", std::process::id()));
    let config = ExperimentConfig::parse(
        "strategy = cotrain\nstrategy.pretrain_steps = 300\ntrain.total_steps = 200\ntrain.probe_every = 50\n",
    )?;
    psscli::cmd_train(&config, &dir)?;

    let dump = psscli::cmd_dump_probe_grads(&dir.join("final.ckpt"), &config, &dir)?;
    println!("g_spat {:?}, g_act {:?}", dump.g_spat.shape(), dump.g_act.shape());

    let tol = RankTolerance::new(config.train.probe.rank_tol.relative_threshold())?;
    let r = psscli::cmd_pss(&dump.paths.0, &dump.paths.1, tol)?;
    println!("{}", psscli::pss_json(&r));
    println!("files in {}", dir.display());
    Ok(())
}
