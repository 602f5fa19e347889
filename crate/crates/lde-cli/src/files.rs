//! Checkpoint and config file I/O; all writes are atomic (temp + rename).

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use lde_core::checkpoint::{configs_from_text, Checkpoint};
use lde_core::model::ModelConfig;
use lde_core::train::TrainConfig;

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = ck.encode();
    let tmp = path.with_extension("ldec.tmp");
    fs::write(&tmp, &bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Checkpoint::decode(&bytes)?)
}

/// Load `[model]` / `[train]` sections from a config file; either section
/// may be absent and defaults fill the rest.
pub fn load_configs(path: &Path) -> Result<(ModelConfig, TrainConfig)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(configs_from_text(&text)?)
}

/// Config file with section presence preserved, so callers can tell an
/// explicit setting apart from a default.
pub struct ConfigFile {
    pub model: Option<ModelConfig>,
    pub train: Option<TrainConfig>,
}

pub fn load_config_file(path: &Path) -> Result<ConfigFile> {
    use lde_core::checkpoint::{model_config_from_kv, parse_kv_text, train_config_from_kv};
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let sections = parse_kv_text(&text)?;
    let mut model = None;
    let mut train = None;
    for (name, kv) in &sections {
        match name.as_str() {
            "model" => model = Some(model_config_from_kv(kv)?),
            "train" => train = Some(train_config_from_kv(kv)?),
            other => anyhow::bail!("unknown section [{other}] in {}", path.display()),
        }
    }
    Ok(ConfigFile { model, train })
}
