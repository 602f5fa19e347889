//! Bit-exact checkpoint container and the structured key-value text format
//! shared by checkpoint headers and config files.
//!
//! Layout: magic `LDEC`, version u32 LE, header length u32 LE, a UTF-8
//! key-value header (configs, training state, tensor directory with names,
//! shapes and byte offsets, and an FNV-1a64 payload checksum), then the raw
//! tensor payloads as 32-bit IEEE-754 little-endian in directory order.
//! Save -> load -> save is byte-identical.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::model::{LdeModel, ModelConfig, ENHANCER_LEVELS};
use crate::optim::Adam;
use crate::rng::{fnv1a64, Rng};
use crate::tensor::Tensor;
use crate::train::{TrainConfig, TrainState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LDEC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Which training stage produced this: `none`, `dis`, `enh-full`,
    /// `enh-light`.
    pub stage: String,
    pub step: u64,
    pub adam_step: u64,
    pub rng_patch: u64,
    pub rng_aug: u64,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    /// Snapshot a model plus its training state: every parameter under its
    /// own name, optimizer moments under `opt.m.` / `opt.v.` prefixes.
    pub fn capture(
        model: &LdeModel<f32>,
        cfg: &TrainConfig,
        state: &TrainState,
        stage: &str,
    ) -> Self {
        let mut tensors = Vec::with_capacity(model.store.len() * 3);
        for (_, p) in model.store.iter() {
            tensors.push(NamedTensor {
                name: p.name.clone(),
                shape: p.value.shape.clone(),
                data: p.value.data.clone(),
            });
        }
        for (id, p) in model.store.iter() {
            tensors.push(NamedTensor {
                name: format!("opt.m.{}", p.name),
                shape: p.value.shape.clone(),
                data: state.optimizer.m[id.index()].clone(),
            });
        }
        for (id, p) in model.store.iter() {
            tensors.push(NamedTensor {
                name: format!("opt.v.{}", p.name),
                shape: p.value.shape.clone(),
                data: state.optimizer.v[id.index()].clone(),
            });
        }
        Checkpoint {
            model: model.config.clone(),
            train: cfg.clone(),
            stage: stage.into(),
            step: state.step as u64,
            adam_step: state.optimizer.step as u64,
            rng_patch: state.rng_patch.state(),
            rng_aug: state.rng_aug.state(),
            tensors,
        }
    }

    /// Container for standalone tensor collections (the fixed perceptual
    /// weights ship this way under the reserved `theta.` names).
    pub fn for_tensors(tensors: Vec<NamedTensor>) -> Self {
        Checkpoint {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            stage: "none".into(),
            step: 0,
            adam_step: 0,
            rng_patch: 0,
            rng_aug: 0,
            tensors,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        let mut directory = String::new();
        for t in &self.tensors {
            let offset = payload.len();
            for v in &t.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            let dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            directory.push_str(&format!("{} = {} | {}\n", t.name, offset, dims.join(" ")));
        }
        let checksum = fnv1a64(&payload);

        let mut header = String::new();
        header.push_str("[checkpoint]\n");
        header.push_str(&format!("stage = {}\n", self.stage));
        header.push_str(&format!("step = {}\n", self.step));
        header.push_str(&format!("adam_step = {}\n", self.adam_step));
        header.push_str(&format!("rng_patch = {}\n", self.rng_patch));
        header.push_str(&format!("rng_aug = {}\n", self.rng_aug));
        header.push_str(&format!("checksum = {checksum:016x}\n"));
        header.push_str("[model]\n");
        header.push_str(&model_config_to_kv(&self.model));
        header.push_str("[train]\n");
        header.push_str(&train_config_to_kv(&self.train));
        header.push_str("[tensors]\n");
        header.push_str(&directory);

        let hb = header.as_bytes();
        let mut out = Vec::with_capacity(12 + hb.len() + payload.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(hb.len() as u32).to_le_bytes());
        out.extend_from_slice(hb);
        out.extend_from_slice(&payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Checkpoint("truncated container".into()));
        }
        if &bytes[0..4] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if bytes.len() < 12 + header_len {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let header = core::str::from_utf8(&bytes[12..12 + header_len])
            .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
        let payload = &bytes[12 + header_len..];

        let sections = parse_kv_text(header)?;
        let ck = section(&sections, "checkpoint")?;
        let stage = find_kv(ck, "stage")?.to_string();
        let step = parse_u64_kv(ck, "step")?;
        let adam_step = parse_u64_kv(ck, "adam_step")?;
        let rng_patch = parse_u64_kv(ck, "rng_patch")?;
        let rng_aug = parse_u64_kv(ck, "rng_aug")?;
        let checksum_hex = find_kv(ck, "checksum")?;
        let expect_checksum = u64::from_str_radix(checksum_hex, 16)
            .map_err(|_| Error::Checkpoint("malformed checksum".into()))?;
        if fnv1a64(payload) != expect_checksum {
            return Err(Error::Checkpoint("payload checksum mismatch (corrupt file)".into()));
        }

        let model = model_config_from_kv(section(&sections, "model")?)?;
        let train = train_config_from_kv(section(&sections, "train")?)?;

        let dir = section(&sections, "tensors")?;
        let mut tensors = Vec::with_capacity(dir.len());
        for (name, value) in dir {
            let (off_s, dims_s) = value
                .split_once('|')
                .ok_or_else(|| Error::Checkpoint(format!("malformed directory entry '{name}'")))?;
            let offset: usize = off_s
                .trim()
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad offset for '{name}'")))?;
            let shape: Vec<usize> = dims_s
                .split_whitespace()
                .map(|d| d.parse::<usize>())
                .collect::<core::result::Result<_, _>>()
                .map_err(|_| Error::Checkpoint(format!("bad shape for '{name}'")))?;
            let numel: usize = shape.iter().product();
            let end = offset + numel * 4;
            if end > payload.len() {
                return Err(Error::Checkpoint(format!("truncated payload for '{name}'")));
            }
            let data = payload[offset..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor {
                name: name.clone(),
                shape,
                data,
            });
        }
        Ok(Checkpoint {
            model,
            train,
            stage,
            step,
            adam_step,
            rng_patch,
            rng_aug,
            tensors,
        })
    }

    /// Copy stored parameters into an existing model; every model parameter
    /// must be present with the exact shape.
    pub fn apply_to_model(&self, model: &mut LdeModel<f32>) -> Result<()> {
        for (_, p) in model.store.iter_mut() {
            let t = self
                .tensors
                .iter()
                .find(|t| t.name == p.name)
                .ok_or_else(|| {
                    Error::Checkpoint(format!("parameter '{}' missing from checkpoint", p.name))
                })?;
            if t.shape != p.value.shape {
                return Err(Error::Checkpoint(format!(
                    "parameter '{}': checkpoint shape {:?} conflicts with model shape {:?}",
                    p.name, t.shape, p.value.shape
                )));
            }
            p.value.data.clone_from(&t.data);
        }
        Ok(())
    }

    /// Rebuild the model and training state this checkpoint captured.
    pub fn restore(&self) -> Result<(LdeModel<f32>, TrainState)> {
        let mut model = LdeModel::new(self.model.clone(), self.train.seed)?;
        self.apply_to_model(&mut model)?;
        let mut optimizer = Adam::new(
            &model.store,
            self.train.beta1,
            self.train.beta2,
            self.train.adam_epsilon,
        );
        optimizer.step = self.adam_step as usize;
        for (id, p) in model.store.iter() {
            if let Some(m) = self.tensor(&format!("opt.m.{}", p.name)) {
                if m.data.len() == p.value.numel() {
                    optimizer.m[id.index()].clone_from(&m.data);
                }
            }
            if let Some(v) = self.tensor(&format!("opt.v.{}", p.name)) {
                if v.data.len() == p.value.numel() {
                    optimizer.v[id.index()].clone_from(&v.data);
                }
            }
        }
        let state = TrainState {
            optimizer,
            step: self.step as usize,
            rng_patch: Rng::from_state(self.rng_patch),
            rng_aug: Rng::from_state(self.rng_aug),
        };
        Ok((model, state))
    }
}

/// Tensors of a [`crate::loss::PerceptualNet`] as checkpoint entries.
pub fn theta_tensors(net: &crate::loss::PerceptualNet<f32>) -> Vec<NamedTensor> {
    net.named_tensors()
        .into_iter()
        .map(|(name, t): (String, &Tensor<f32>)| NamedTensor {
            name,
            shape: t.shape.clone(),
            data: t.data.clone(),
        })
        .collect()
}

// ---- key-value text ------------------------------------------------------

/// Parse `[section]` / `key = value` text. Blank lines and `#` comments are
/// skipped; duplicate sections append.
pub fn parse_kv_text(text: &str) -> Result<Vec<(String, Vec<(String, String)>)>> {
    let mut sections: Vec<(String, Vec<(String, String)>)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            sections.push((name.trim().to_string(), Vec::new()));
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
        })?;
        let section = sections
            .last_mut()
            .ok_or_else(|| Error::Config(format!("line {}: key before any [section]", lineno + 1)))?;
        section.1.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(sections)
}

fn section<'a>(
    sections: &'a [(String, Vec<(String, String)>)],
    name: &str,
) -> Result<&'a [(String, String)]> {
    sections
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, kv)| kv.as_slice())
        .ok_or_else(|| Error::Checkpoint(format!("missing [{name}] section")))
}

fn find_kv<'a>(kv: &'a [(String, String)], key: &str) -> Result<&'a str> {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Config(format!("missing key '{key}'")))
}

fn parse_u64_kv(kv: &[(String, String)], key: &str) -> Result<u64> {
    find_kv(kv, key)?
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}' is not an integer")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::Config(format!("key '{key}' is not an integer: '{v}'")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::Config(format!("key '{key}' is not a number: '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("key '{key}' must be true or false, got '{v}'"))),
    }
}

pub fn model_config_to_kv(cfg: &ModelConfig) -> String {
    let levels: Vec<String> = cfg.enh_blocks_per_level.iter().map(|b| b.to_string()).collect();
    format!(
        "channels = {}\ndtb_count = {}\nheads = {}\nffn_expansion = {}\nenh_blocks_per_level = {}\nrecon_blocks = {}\nlight_channels = {}\n",
        cfg.channels,
        cfg.dtb_count,
        cfg.heads,
        cfg.ffn_expansion,
        levels.join(" "),
        cfg.recon_blocks,
        cfg.light_channels,
    )
}

pub fn model_config_from_kv(kv: &[(String, String)]) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::default();
    for (k, v) in kv {
        match k.as_str() {
            "channels" => cfg.channels = parse_usize(k, v)?,
            "dtb_count" => cfg.dtb_count = parse_usize(k, v)?,
            "heads" => cfg.heads = parse_usize(k, v)?,
            "ffn_expansion" => cfg.ffn_expansion = parse_usize(k, v)?,
            "recon_blocks" => cfg.recon_blocks = parse_usize(k, v)?,
            "light_channels" => cfg.light_channels = parse_usize(k, v)?,
            "enh_blocks_per_level" => {
                let parts: Vec<usize> = v
                    .split_whitespace()
                    .map(|p| p.parse::<usize>())
                    .collect::<core::result::Result<_, _>>()
                    .map_err(|_| Error::Config(format!("bad enh_blocks_per_level '{v}'")))?;
                if parts.len() != ENHANCER_LEVELS {
                    return Err(Error::Config(format!(
                        "enh_blocks_per_level needs {ENHANCER_LEVELS} entries, got {}",
                        parts.len()
                    )));
                }
                cfg.enh_blocks_per_level.copy_from_slice(&parts);
            }
            other => return Err(Error::Config(format!("unknown model key '{other}'"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train_config_to_kv(cfg: &TrainConfig) -> String {
    format!(
        "lr_max = {}\nlr_min = {}\nbeta1 = {}\nbeta2 = {}\nadam_epsilon = {}\nbatch_size = {}\npatch = {}\ntotal_steps = {}\nseed = {}\naug_hsv = {}\naug_rotation = {}\naug_flip = {}\ngrad_abort_norm = {}\nlambda_recon = {}\nlambda_s = {}\nlambda_p = {}\n",
        cfg.lr_max,
        cfg.lr_min,
        cfg.beta1,
        cfg.beta2,
        cfg.adam_epsilon,
        cfg.batch_size,
        cfg.patch,
        cfg.total_steps,
        cfg.seed,
        cfg.aug_hsv,
        cfg.aug_rotation,
        cfg.aug_flip,
        cfg.grad_abort_norm,
        cfg.weights.lambda_recon,
        cfg.weights.lambda_s,
        cfg.weights.lambda_p,
    )
}

pub fn train_config_from_kv(kv: &[(String, String)]) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    let mut weights = LossWeights::default();
    for (k, v) in kv {
        match k.as_str() {
            "lr_max" => cfg.lr_max = parse_f64(k, v)?,
            "lr_min" => cfg.lr_min = parse_f64(k, v)?,
            "beta1" => cfg.beta1 = parse_f64(k, v)?,
            "beta2" => cfg.beta2 = parse_f64(k, v)?,
            "adam_epsilon" => cfg.adam_epsilon = parse_f64(k, v)?,
            "batch_size" => cfg.batch_size = parse_usize(k, v)?,
            "patch" => cfg.patch = parse_usize(k, v)?,
            "total_steps" => cfg.total_steps = parse_usize(k, v)?,
            "seed" => {
                cfg.seed = v
                    .parse()
                    .map_err(|_| Error::Config(format!("bad seed '{v}'")))?
            }
            "aug_hsv" => cfg.aug_hsv = parse_bool(k, v)?,
            "aug_rotation" => cfg.aug_rotation = parse_bool(k, v)?,
            "aug_flip" => cfg.aug_flip = parse_bool(k, v)?,
            "grad_abort_norm" => cfg.grad_abort_norm = parse_f64(k, v)?,
            "lambda_recon" => weights.lambda_recon = parse_f64(k, v)?,
            "lambda_s" => weights.lambda_s = parse_f64(k, v)?,
            "lambda_p" => weights.lambda_p = parse_f64(k, v)?,
            other => return Err(Error::Config(format!("unknown train key '{other}'"))),
        }
    }
    cfg.weights = weights;
    cfg.validate()?;
    Ok(cfg)
}

/// Parse a config file holding optional `[model]` and `[train]` sections.
pub fn configs_from_text(text: &str) -> Result<(ModelConfig, TrainConfig)> {
    let sections = parse_kv_text(text)?;
    for (name, _) in &sections {
        if name != "model" && name != "train" {
            return Err(Error::Config(format!("unknown section [{name}]")));
        }
    }
    let model = match sections.iter().find(|(n, _)| n == "model") {
        Some((_, kv)) => model_config_from_kv(kv)?,
        None => ModelConfig::default(),
    };
    let train = match sections.iter().find(|(n, _)| n == "train") {
        Some((_, kv)) => train_config_from_kv(kv)?,
        None => TrainConfig::default(),
    };
    Ok((model, train))
}

/// Render the resolved configs in the same format `configs_from_text` reads.
pub fn configs_to_text(model: &ModelConfig, train: &TrainConfig) -> String {
    format!(
        "[model]\n{}[train]\n{}",
        model_config_to_kv(model),
        train_config_to_kv(train)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EnhanceMode;
    use crate::train::train_enhance;

    fn small_checkpoint() -> (LdeModel<f32>, TrainConfig, TrainState) {
        let model = LdeModel::new(
            ModelConfig {
                channels: 4,
                ..ModelConfig::default()
            },
            7,
        )
        .unwrap();
        let cfg = TrainConfig {
            total_steps: 2,
            patch: 16,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let state = TrainState::fresh(&model, &cfg);
        (model, cfg, state)
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let (model, cfg, state) = small_checkpoint();
        let ck = Checkpoint::capture(&model, &cfg, &state, "dis");
        let bytes = ck.encode();
        let decoded = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(decoded, ck);
        let bytes2 = decoded.encode();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn corruption_is_detected() {
        let (model, cfg, state) = small_checkpoint();
        let mut bytes = Checkpoint::capture(&model, &cfg, &state, "dis").encode();
        let n = bytes.len();
        bytes[n - 1] ^= 0x40; // flip a payload bit
        match Checkpoint::decode(&bytes) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("checksum"), "{msg}"),
            other => panic!("expected checksum failure, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_version_truncation() {
        let (model, cfg, state) = small_checkpoint();
        let bytes = Checkpoint::capture(&model, &cfg, &state, "dis").encode();

        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(matches!(Checkpoint::decode(&wrong_magic), Err(Error::Checkpoint(_))));

        let mut wrong_version = bytes.clone();
        wrong_version[4] = 99;
        let err = format!("{}", Checkpoint::decode(&wrong_version).unwrap_err());
        assert!(err.contains("version"), "{err}");

        assert!(Checkpoint::decode(&bytes[..bytes.len() / 2]).is_err());
        assert!(Checkpoint::decode(&bytes[..8]).is_err());
    }

    #[test]
    fn restore_reproduces_parameters_and_state() {
        let (mut model, cfg, mut state) = small_checkpoint();
        // move things off init so the test is not trivial
        let data = crate::data::synth_dataset(2, 16, 3).unwrap();
        train_enhance(&mut model, &data, &cfg, &mut state, EnhanceMode::Light, |_| {}).unwrap();

        let ck = Checkpoint::capture(&model, &cfg, &state, "dis");
        let (model2, state2) = ck.restore().unwrap();
        for ((_, a), (_, b)) in model.store.iter().zip(model2.store.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.data, b.value.data, "{}", a.name);
        }
        assert_eq!(state2.step, state.step);
        assert_eq!(state2.optimizer.step, state.optimizer.step);
        assert_eq!(state2.optimizer.m, state.optimizer.m);
        assert_eq!(state2.rng_patch.state(), state.rng_patch.state());
    }

    #[test]
    fn mismatched_model_names_parameter() {
        let (model, cfg, state) = small_checkpoint();
        let ck = Checkpoint::capture(&model, &cfg, &state, "dis");
        let mut other = LdeModel::<f32>::new(
            ModelConfig {
                channels: 8,
                ..ModelConfig::default()
            },
            7,
        )
        .unwrap();
        let err = format!("{}", ck.apply_to_model(&mut other).unwrap_err());
        assert!(err.contains("dis.embed.w"), "{err}");
        assert!(err.contains("conflict"), "{err}");
    }

    #[test]
    fn config_text_roundtrip() {
        let model = ModelConfig {
            channels: 24,
            heads: 2,
            enh_blocks_per_level: [2, 1, 1, 3],
            ..ModelConfig::default()
        };
        let train = TrainConfig {
            lr_max: 3e-4,
            batch_size: 5,
            aug_hsv: true,
            ..TrainConfig::default()
        };
        let text = configs_to_text(&model, &train);
        let (m2, t2) = configs_from_text(&text).unwrap();
        assert_eq!(m2, model);
        assert_eq!(t2, train);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "[model]\nchannels = 8\nbogus = 1\n";
        let err = format!("{}", configs_from_text(text).unwrap_err());
        assert!(err.contains("bogus"), "{err}");

        let text2 = "[mystery]\nx = 1\n";
        assert!(configs_from_text(text2).is_err());
    }

    #[test]
    fn theta_ships_in_container() {
        let theta = crate::loss::PerceptualNet::<f32>::fixed();
        let ck = Checkpoint::for_tensors(theta_tensors(&theta));
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back.tensors.len(), 6);
        assert!(back.tensor("theta.conv0.w").is_some());
        assert_eq!(back.tensor("theta.conv2.w").unwrap().shape, alloc::vec![3, 3, 16, 32]);
    }
}
