//! Two-stage optimization: disentanglement (content consistency + cross
//! reconstruction) first, then enhancement with the disentangle and
//! reconstruction modules frozen. Everything is strictly single-threaded
//! and deterministic: batches accumulate per-sample gradients in a fixed
//! order, and the patch/augmentation streams are derived from the seed and
//! carried in the training state for resumption.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{flip_horizontal, flip_vertical, hsv_to_rgb, rgb_to_hsv, rot90, ImagePair};
use crate::error::{Error, Result};
use crate::loss::{
    content_consistency_loss, disentangle_loss, enhancement_loss, psnr, reconstruction_loss,
    LossWeights, PerceptualNet, SsimParams,
};
use crate::model::{EnhanceMode, LdeModel};
use crate::optim::{cosine_lr, Adam};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Optimization hyperparameters. The learning-rate endpoints and Adam betas
/// follow the training recipe; batch and patch sizes default to desk scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub patch: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub aug_hsv: bool,
    pub aug_rotation: bool,
    pub aug_flip: bool,
    /// Abort a step whose global gradient norm exceeds this.
    pub grad_abort_norm: f64,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_max: 2e-4,
            lr_min: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 2,
            patch: 64,
            total_steps: 300,
            seed: 42,
            aug_hsv: false,
            aug_rotation: false,
            aug_flip: false,
            grad_abort_norm: 1e4,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max) {
            return Err(Error::Config("need 0 < lr_min <= lr_max".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.total_steps == 0 {
            return Err(Error::Config("batch_size and total_steps must be positive".into()));
        }
        if self.patch < 16 || self.patch % 8 != 0 {
            return Err(Error::Config(format!(
                "patch must be a multiple of 8 and at least 16, got {}",
                self.patch
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        cosine_lr(step, self.total_steps, self.lr_max, self.lr_min)
    }
}

/// Mutable optimizer/stream state; checkpointable, so training can resume.
pub struct TrainState {
    pub optimizer: Adam<f32>,
    pub step: usize,
    pub rng_patch: Rng,
    pub rng_aug: Rng,
}

impl TrainState {
    pub fn fresh(model: &LdeModel<f32>, cfg: &TrainConfig) -> Self {
        let root = Rng::new(cfg.seed);
        TrainState {
            optimizer: Adam::new(&model.store, cfg.beta1, cfg.beta2, cfg.adam_epsilon),
            step: 0,
            rng_patch: root.derive("patch"),
            rng_aug: root.derive("aug"),
        }
    }
}

/// Crop the same random window out of both pair members.
pub fn sample_patch(pair: &ImagePair, patch: usize, rng: &mut Rng) -> Result<ImagePair> {
    let (h, w, c) = pair.low.hwc()?;
    if h < patch || w < patch {
        return Err(Error::invalid(
            "sample_patch",
            format!("image {h}x{w} smaller than patch {patch}; configure a smaller patch"),
        ));
    }
    let oy = rng.below(h - patch + 1);
    let ox = rng.below(w - patch + 1);
    let cut = |src: &Tensor<f32>| {
        let mut out = Tensor::zeros([patch, patch, c]);
        for y in 0..patch {
            let s = ((oy + y) * w + ox) * c;
            let d = (y * patch) * c;
            out.data[d..d + patch * c].copy_from_slice(&src.data[s..s + patch * c]);
        }
        out
    };
    ImagePair::new(cut(&pair.low), cut(&pair.normal), pair.id.clone())
}

/// Apply the same geometric transform and the same HSV jitter draw to both
/// pair members; outputs are clipped to `[0, 1]`.
pub fn augment(pair: &ImagePair, rng: &mut Rng, cfg: &TrainConfig) -> ImagePair {
    let quarter_turns = if cfg.aug_rotation { rng.below(4) } else { 0 };
    let (fh, fv) = if cfg.aug_flip {
        (rng.next_bool(), rng.next_bool())
    } else {
        (false, false)
    };
    let hsv = if cfg.aug_hsv {
        Some((
            rng.range_f64(-0.02, 0.02),
            rng.range_f64(0.95, 1.05),
            rng.range_f64(0.95, 1.05),
        ))
    } else {
        None
    };

    let apply = |img: &Tensor<f32>| {
        let mut out = rot90(img, quarter_turns);
        if fh {
            out = flip_horizontal(&out);
        }
        if fv {
            out = flip_vertical(&out);
        }
        if let Some((dh, ds, dv)) = hsv {
            for px in out.data.chunks_mut(3) {
                let (h, s, v) = rgb_to_hsv(px[0] as f64, px[1] as f64, px[2] as f64);
                let (r, g, b) = hsv_to_rgb(h + dh, (s * ds).clamp(0.0, 1.0), (v * dv).clamp(0.0, 1.0));
                px[0] = r as f32;
                px[1] = g as f32;
                px[2] = b as f32;
            }
        }
        out.clamp01()
    };
    ImagePair {
        low: apply(&pair.low),
        normal: apply(&pair.normal),
        id: pair.id.clone(),
    }
}

/// One stage-1 trace record.
#[derive(Debug, Clone, PartialEq)]
pub struct DisTraceStep {
    pub step: usize,
    pub lr: f64,
    pub l_cc: f64,
    pub l_recon: f64,
    pub total: f64,
}

/// One stage-2 trace record.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhTraceStep {
    pub step: usize,
    pub lr: f64,
    pub l1: f64,
    pub ssim: f64,
    pub perceptual: f64,
    pub total: f64,
}

/// Pick the step's pairs without replacement when the dataset allows it (a
/// fresh partial shuffle per step), falling back to independent draws when
/// the batch is larger than the dataset.
fn draw_batch(dataset: &[ImagePair], cfg: &TrainConfig, state: &mut TrainState) -> Result<Vec<ImagePair>> {
    let n = dataset.len();
    let picks: Vec<usize> = if cfg.batch_size <= n {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..cfg.batch_size {
            let j = i + state.rng_patch.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(cfg.batch_size);
        idx
    } else {
        (0..cfg.batch_size).map(|_| state.rng_patch.below(n)).collect()
    };
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for i in picks {
        let cropped = sample_patch(&dataset[i], cfg.patch, &mut state.rng_patch)?;
        batch.push(augment(&cropped, &mut state.rng_aug, cfg));
    }
    Ok(batch)
}

struct GradAccum {
    grads: Vec<Option<Vec<f32>>>,
}

impl GradAccum {
    fn new(n: usize) -> Self {
        GradAccum {
            grads: vec![None; n],
        }
    }

    fn absorb(&mut self, tape: &crate::tape::Tape<f32>, model: &LdeModel<f32>) {
        for (id, _) in model.store.iter() {
            if let Some(g) = tape.grad(model.store.var(id)) {
                match &mut self.grads[id.index()] {
                    Some(acc) => {
                        for (a, &b) in acc.iter_mut().zip(g) {
                            *a += b;
                        }
                    }
                    slot => *slot = Some(g.to_vec()),
                }
            }
        }
    }

    fn scale(&mut self, k: f32) {
        for g in self.grads.iter_mut().flatten() {
            for v in g.iter_mut() {
                *v *= k;
            }
        }
    }

    fn global_norm(&self) -> f64 {
        let mut s = 0.0f64;
        for g in self.grads.iter().flatten() {
            for &v in g {
                s += (v as f64) * (v as f64);
            }
        }
        libm::sqrt(s)
    }
}

fn guard_step(step: usize, loss: f64, accum: &GradAccum, limit: f64) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::TrainAborted {
            step,
            msg: "non-finite loss; parameters left at the last good step".into(),
        });
    }
    let norm = accum.global_norm();
    if !norm.is_finite() || norm > limit {
        return Err(Error::TrainAborted {
            step,
            msg: format!("gradient norm {norm:.3e} exceeds limit {limit:.1e}"),
        });
    }
    Ok(())
}

/// Stage 1: optimize the disentanglement and reconstruction modules jointly
/// under content consistency + weighted cross reconstruction. Runs from
/// `state.step` to `cfg.total_steps`; `observer` sees every record as it is
/// produced.
pub fn train_disentangle(
    model: &mut LdeModel<f32>,
    dataset: &[ImagePair],
    cfg: &TrainConfig,
    state: &mut TrainState,
    mut observer: impl FnMut(&DisTraceStep),
) -> Result<Vec<DisTraceStep>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Dataset("empty dataset".into()));
    }
    let mut trace = Vec::new();
    while state.step < cfg.total_steps {
        let batch = draw_batch(dataset, cfg, state)?;
        let mut accum = GradAccum::new(model.store.len());
        let (mut cc_sum, mut rec_sum, mut total_sum) = (0.0f64, 0.0f64, 0.0f64);

        for sample in &batch {
            let mut tape = model.tape();
            let s_l = tape.leaf(sample.low.clone());
            let s_t = tape.leaf(sample.normal.clone());
            let low = model.dis.forward(&mut tape, &model.store, s_l)?;
            let top = model.dis.forward(&mut tape, &model.store, s_t)?;
            let l_cc = content_consistency_loss(&mut tape, low.content, top.content)?;
            let l_rec = reconstruction_loss(
                &mut tape,
                &model.store,
                &model.recon,
                low.content,
                low.illumination,
                top.content,
                top.illumination,
                s_l,
                s_t,
            )?;
            let total = disentangle_loss(&mut tape, l_cc, l_rec, cfg.weights.lambda_recon)?;
            tape.backward(total)?;
            accum.absorb(&tape, model);
            cc_sum += tape.scalar(l_cc) as f64;
            rec_sum += tape.scalar(l_rec) as f64;
            total_sum += tape.scalar(total) as f64;
        }

        let inv = 1.0 / cfg.batch_size as f64;
        accum.scale(inv as f32);
        let record = DisTraceStep {
            step: state.step,
            lr: cfg.lr_at(state.step),
            l_cc: cc_sum * inv,
            l_recon: rec_sum * inv,
            total: total_sum * inv,
        };
        guard_step(state.step, record.total, &accum, cfg.grad_abort_norm)?;
        state
            .optimizer
            .step(&mut model.store, &accum.grads, record.lr)?;
        state.step += 1;
        observer(&record);
        trace.push(record);
    }
    Ok(trace)
}

/// Stage 2: freeze the disentangle and reconstruction modules and optimize
/// the chosen enhancer under the enhancement objective on restored images.
pub fn train_enhance(
    model: &mut LdeModel<f32>,
    dataset: &[ImagePair],
    cfg: &TrainConfig,
    state: &mut TrainState,
    mode: EnhanceMode,
    mut observer: impl FnMut(&EnhTraceStep),
) -> Result<Vec<EnhTraceStep>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Dataset("empty dataset".into()));
    }
    model.store.set_trainable("dis.", false);
    model.store.set_trainable("recon.", false);
    let theta = PerceptualNet::<f32>::fixed();
    let ssim_params = SsimParams::default();

    let mut trace = Vec::new();
    while state.step < cfg.total_steps {
        let batch = draw_batch(dataset, cfg, state)?;
        let mut accum = GradAccum::new(model.store.len());
        let (mut l1_sum, mut ssim_sum, mut perc_sum, mut total_sum) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);

        for sample in &batch {
            let mut tape = model.tape();
            let s_l = tape.leaf(sample.low.clone());
            let s_t = tape.leaf(sample.normal.clone());
            let restored = model.restore_on_tape(&mut tape, s_l, mode)?;
            let parts = enhancement_loss(&mut tape, &theta, restored, s_t, &cfg.weights, &ssim_params)?;
            tape.backward(parts.total)?;
            accum.absorb(&tape, model);
            l1_sum += tape.scalar(parts.l1) as f64;
            ssim_sum += tape.scalar(parts.ssim) as f64;
            perc_sum += tape.scalar(parts.perceptual) as f64;
            total_sum += tape.scalar(parts.total) as f64;
        }

        let inv = 1.0 / cfg.batch_size as f64;
        accum.scale(inv as f32);
        let record = EnhTraceStep {
            step: state.step,
            lr: cfg.lr_at(state.step),
            l1: l1_sum * inv,
            ssim: ssim_sum * inv,
            perceptual: perc_sum * inv,
            total: total_sum * inv,
        };
        guard_step(state.step, record.total, &accum, cfg.grad_abort_norm)?;
        state
            .optimizer
            .step(&mut model.store, &accum.grads, record.lr)?;
        state.step += 1;
        observer(&record);
        trace.push(record);
    }
    Ok(trace)
}

/// The four cross-reconstruction rows: mean PSNR over the dataset of
/// reconstructing from each (Content_i, Illumination_j) combination against
/// the image the Illumination index selects.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossReconReport {
    /// (label, mean PSNR dB), in the fixed row order
    /// (C_l,I_l)->S_l, (C_t,I_t)->S_t, (C_t,I_l)->S_l, (C_l,I_t)->S_t.
    pub rows: [(String, f64); 4],
}

pub fn eval_cross_reconstruction(
    model: &LdeModel<f32>,
    dataset: &[ImagePair],
) -> Result<CrossReconReport> {
    if dataset.is_empty() {
        return Err(Error::Dataset("empty dataset".into()));
    }
    let mut sums = [0.0f64; 4];
    for pair in dataset {
        let mut tape = model.tape();
        let s_l = tape.leaf(pair.low.clone());
        let s_t = tape.leaf(pair.normal.clone());
        let low = model.dis.forward(&mut tape, &model.store, s_l)?;
        let top = model.dis.forward(&mut tape, &model.store, s_t)?;
        let combos = [
            (low.content, low.illumination, &pair.low),
            (top.content, top.illumination, &pair.normal),
            (top.content, low.illumination, &pair.low),
            (low.content, top.illumination, &pair.normal),
        ];
        for (slot, (c, i, target)) in sums.iter_mut().zip(combos) {
            let rec = model.recon.forward(&mut tape, &model.store, c, i)?;
            let img = tape.value(rec).clamp01();
            *slot += psnr(&img, target)?;
        }
    }
    let n = dataset.len() as f64;
    let labels = [
        "psnr(recon(C_l,I_l), S_l)",
        "psnr(recon(C_t,I_t), S_t)",
        "psnr(recon(C_t,I_l), S_l)",
        "psnr(recon(C_l,I_t), S_t)",
    ];
    let mut rows: [(String, f64); 4] = Default::default();
    for k in 0..4 {
        rows[k] = (String::from(labels[k]), sums[k] / n);
    }
    Ok(CrossReconReport { rows })
}

/// Mean |C_l - C_t| over the dataset; the quantity stage-1 training drives
/// down.
pub fn mean_content_gap(model: &LdeModel<f32>, dataset: &[ImagePair]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Dataset("empty dataset".into()));
    }
    let mut total = 0.0f64;
    for pair in dataset {
        let mut tape = model.tape();
        let s_l = tape.leaf(pair.low.clone());
        let s_t = tape.leaf(pair.normal.clone());
        let low = model.dis.forward(&mut tape, &model.store, s_l)?;
        let top = model.dis.forward(&mut tape, &model.store, s_t)?;
        let gap = content_consistency_loss(&mut tape, low.content, top.content)?;
        total += tape.scalar(gap) as f64;
    }
    Ok(total / dataset.len() as f64)
}
