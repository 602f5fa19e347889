//! The four networks: disentanglement module, reconstruction module, the
//! 4-level content-aware enhancer, and the light-weight enhancer, plus the
//! end-to-end pipeline and parameter accounting.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::blocks::{Cae, Conv2dLayer, DepthwiseLayer, Dtb, Ttb};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::real::Real;
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::{crop, reflect_pad_to_multiple, Tensor};

pub const ENHANCER_LEVELS: usize = 4;

/// Architecture hyperparameters. The defaults are desk-scale: small enough
/// to train on a CPU while exercising every code path.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Base channel width of the latent features.
    pub channels: usize,
    /// Number of chained disentanglement transformer blocks.
    pub dtb_count: usize,
    /// Attention heads; must divide `channels`.
    pub heads: usize,
    /// FFN hidden expansion factor.
    pub ffn_expansion: usize,
    /// Transposed blocks per enhancer level (encoder and decoder alike).
    pub enh_blocks_per_level: [usize; ENHANCER_LEVELS],
    /// Transposed blocks in the reconstruction module.
    pub recon_blocks: usize,
    /// Channel width of the light-weight enhancer's hidden feature.
    pub light_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 16,
            dtb_count: 2,
            heads: 1,
            ffn_expansion: 2,
            enh_blocks_per_level: [1, 1, 1, 1],
            recon_blocks: 2,
            light_channels: 16,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.dtb_count == 0 || self.recon_blocks == 0 {
            return Err(Error::Config(
                "channels, dtb_count and recon_blocks must be positive".into(),
            ));
        }
        if self.heads == 0 || self.channels % self.heads != 0 {
            return Err(Error::Config(format!(
                "head count {} must divide channel width {}",
                self.heads, self.channels
            )));
        }
        if self.ffn_expansion == 0 || self.light_channels == 0 {
            return Err(Error::Config(
                "ffn_expansion and light_channels must be positive".into(),
            ));
        }
        if self.enh_blocks_per_level.iter().any(|&b| b == 0) {
            return Err(Error::Config("every enhancer level needs at least one block".into()));
        }
        Ok(())
    }

    /// Channel width at enhancer level `l` (spatial scale `1/2^l`).
    pub fn level_channels(&self, level: usize) -> usize {
        self.channels << level
    }
}

/// Latent Content/Illumination pair produced by the disentanglement module.
pub struct DisentangleOutput {
    pub content: Var,
    pub illumination: Var,
}

/// Embedding convolution plus N chained DTBs; no downsampling anywhere.
#[derive(Debug, Clone)]
pub struct Disentangler {
    pub embed: Conv2dLayer,
    pub dtbs: Vec<Dtb>,
}

impl Disentangler {
    pub(crate) fn new<E: Real>(store: &mut ParamStore<E>, rng: &mut Rng, cfg: &ModelConfig) -> Self {
        let embed = Conv2dLayer::new(store, rng, "dis.embed", 3, 3, cfg.channels, 1, 1);
        let dtbs = (0..cfg.dtb_count)
            .map(|j| {
                Dtb::new(
                    store,
                    rng,
                    &format!("dis.dtb{j}"),
                    cfg.channels,
                    cfg.heads,
                    cfg.ffn_expansion,
                )
            })
            .collect();
        Disentangler { embed, dtbs }
    }

    /// Split an RGB image into latent Content and Illumination features;
    /// the final block's branches are the module output.
    pub fn forward<E: Real>(
        &self,
        tape: &mut Tape<E>,
        store: &ParamStore<E>,
        image: Var,
    ) -> Result<DisentangleOutput> {
        let shape = tape.shape(image);
        if shape.len() != 3 || shape[2] != 3 {
            return Err(Error::invalid("disentangle", "input must be h x w x 3"));
        }
        if shape[0] < 8 || shape[1] < 8 {
            return Err(Error::invalid(
                "disentangle",
                format!("image {}x{} is smaller than the 8x8 minimum", shape[0], shape[1]),
            ));
        }
        let mut f = self.embed.forward(tape, store, image)?;
        let mut out = None;
        for dtb in &self.dtbs {
            let o = dtb.forward(tape, store, f)?;
            f = o.fused;
            out = Some(o);
        }
        let last = out.expect("at least one DTB");
        Ok(DisentangleOutput {
            content: last.content,
            illumination: last.illumination,
        })
    }
}

/// Transposed transformer blocks over `C + I`, then a 3x3 convolution back
/// to RGB. The module only ever sees the sum of its two inputs.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    pub blocks: Vec<Ttb>,
    pub out: Conv2dLayer,
}

impl Reconstructor {
    pub(crate) fn new<E: Real>(store: &mut ParamStore<E>, rng: &mut Rng, cfg: &ModelConfig) -> Self {
        let blocks = (0..cfg.recon_blocks)
            .map(|j| {
                Ttb::new(
                    store,
                    rng,
                    &format!("recon.ttb{j}"),
                    cfg.channels,
                    cfg.heads,
                    cfg.ffn_expansion,
                )
            })
            .collect();
        // the output conv starts silent at mid-gray: reconstruction begins
        // as a clean regression from identity-passed features instead of
        // unlearning a random projection
        let out = Conv2dLayer::new_zeroed(store, "recon.out", 3, cfg.channels, 3, 1, 1);
        {
            let b = store.get_mut(out.b);
            for v in b.value.data.iter_mut() {
                *v = E::from_f64(0.5);
            }
        }
        Reconstructor { blocks, out }
    }

    pub fn forward<E: Real>(
        &self,
        tape: &mut Tape<E>,
        store: &ParamStore<E>,
        content: Var,
        illumination: Var,
    ) -> Result<Var> {
        if tape.shape(content) != tape.shape(illumination) {
            return Err(Error::ShapeMismatch {
                op: "reconstruct",
                lhs: tape.shape(content).to_vec(),
                rhs: tape.shape(illumination).to_vec(),
            });
        }
        let mut f = tape.add(content, illumination)?;
        for b in &self.blocks {
            f = b.forward(tape, store, f)?;
        }
        self.out.forward(tape, store, f)
    }
}

/// 4-level hierarchical encoder-decoder over the Illumination feature with a
/// CAE fusion against the Content pyramid at each encoder level. Pixel
/// unshuffle/shuffle move between scales; skip connections concatenate
/// encoder features into the decoder.
#[derive(Debug, Clone)]
pub struct Enhancer {
    pub caes: Vec<Cae>,
    pub enc: Vec<Vec<Ttb>>,
    pub down: Vec<Conv2dLayer>,
    pub pyr: Vec<Conv2dLayer>,
    pub up: Vec<Conv2dLayer>,
    pub skip: Vec<Conv2dLayer>,
    pub dec: Vec<Vec<Ttb>>,
}

impl Enhancer {
    pub(crate) fn new<E: Real>(store: &mut ParamStore<E>, rng: &mut Rng, cfg: &ModelConfig) -> Self {
        let mut caes = Vec::new();
        let mut enc = Vec::new();
        let mut down = Vec::new();
        let mut pyr = Vec::new();
        for l in 0..ENHANCER_LEVELS {
            let cl = cfg.level_channels(l);
            caes.push(Cae::new(store, rng, &format!("enh.cae{l}"), cl, cfg.heads));
            enc.push(
                (0..cfg.enh_blocks_per_level[l])
                    .map(|i| {
                        Ttb::new(
                            store,
                            rng,
                            &format!("enh.enc{l}.ttb{i}"),
                            cl,
                            cfg.heads,
                            cfg.ffn_expansion,
                        )
                    })
                    .collect(),
            );
            if l + 1 < ENHANCER_LEVELS {
                // unshuffle quadruples channels; project to the next width
                down.push(Conv2dLayer::new(
                    store,
                    rng,
                    &format!("enh.down{l}"),
                    1,
                    4 * cl,
                    2 * cl,
                    1,
                    0,
                ));
                pyr.push(Conv2dLayer::new(
                    store,
                    rng,
                    &format!("enh.pyr{l}"),
                    1,
                    4 * cl,
                    2 * cl,
                    1,
                    0,
                ));
            }
        }
        let mut up = Vec::new();
        let mut skip = Vec::new();
        let mut dec = Vec::new();
        for l in (0..ENHANCER_LEVELS - 1).rev() {
            let cl = cfg.level_channels(l);
            // shuffle from level l+1 leaves cl/2 channels; restore to cl
            up.push(Conv2dLayer::new(
                store,
                rng,
                &format!("enh.up{l}"),
                1,
                cl / 2,
                cl,
                1,
                0,
            ));
            skip.push(Conv2dLayer::new(
                store,
                rng,
                &format!("enh.skip{l}"),
                1,
                2 * cl,
                cl,
                1,
                0,
            ));
            dec.push(
                (0..cfg.enh_blocks_per_level[l])
                    .map(|i| {
                        Ttb::new(
                            store,
                            rng,
                            &format!("enh.dec{l}.ttb{i}"),
                            cl,
                            cfg.heads,
                            cfg.ffn_expansion,
                        )
                    })
                    .collect(),
            );
        }
        Enhancer {
            caes,
            enc,
            down,
            pyr,
            up,
            skip,
            dec,
        }
    }

    pub fn forward<E: Real>(
        &self,
        tape: &mut Tape<E>,
        store: &ParamStore<E>,
        illumination: Var,
        content: Var,
    ) -> Result<Var> {
        self.forward_impl(tape, store, illumination, content, false)
    }

    /// Ablation path used by invariants: every CAE gate clamped to zero.
    pub fn forward_gates_closed<E: Real>(
        &self,
        tape: &mut Tape<E>,
        store: &ParamStore<E>,
        illumination: Var,
        content: Var,
    ) -> Result<Var> {
        self.forward_impl(tape, store, illumination, content, true)
    }

    fn forward_impl<E: Real>(
        &self,
        tape: &mut Tape<E>,
        store: &ParamStore<E>,
        illumination: Var,
        content: Var,
        gates_closed: bool,
    ) -> Result<Var> {
        let shape = tape.shape(illumination).to_vec();
        if shape != tape.shape(content) {
            return Err(Error::ShapeMismatch {
                op: "enhance",
                lhs: shape,
                rhs: tape.shape(content).to_vec(),
            });
        }
        let (h, w) = (shape[0], shape[1]);
        let halvings = ENHANCER_LEVELS - 1;
        let m = 1 << halvings;
        if h % m != 0 || w % m != 0 {
            return Err(Error::invalid(
                "enhance",
                format!("spatial extents {h}x{w} must be divisible by {m}; pad the input first"),
            ));
        }

        // Content pyramid: repeat the sanctioned downsampler on the Content
        // feature so each level has a matched guide.
        let mut pyramid = Vec::with_capacity(ENHANCER_LEVELS);
        let mut cfeat = content;
        pyramid.push(cfeat);
        for l in 0..halvings {
            let folded = tape.pixel_unshuffle(cfeat, 2)?;
            cfeat = self.pyr[l].forward(tape, store, folded)?;
            pyramid.push(cfeat);
        }

        // Encoder
        let mut feat = illumination;
        let mut enc_outs = Vec::with_capacity(ENHANCER_LEVELS);
        for l in 0..ENHANCER_LEVELS {
            let fused = if gates_closed {
                self.caes[l].fuse_gate_closed(tape, store, pyramid[l], feat)?
            } else {
                self.caes[l].fuse(tape, store, pyramid[l], feat)?
            };
            let mut x = fused;
            for b in &self.enc[l] {
                x = b.forward(tape, store, x)?;
            }
            enc_outs.push(x);
            if l + 1 < ENHANCER_LEVELS {
                let folded = tape.pixel_unshuffle(x, 2)?;
                feat = self.down[l].forward(tape, store, folded)?;
            }
        }

        // Decoder with skip connections
        let mut x = enc_outs[ENHANCER_LEVELS - 1];
        for (i, l) in (0..halvings).rev().enumerate() {
            let spread = tape.pixel_shuffle(x, 2)?;
            let upped = self.up[i].forward(tape, store, spread)?;
            let cat = tape.concat_channels(upped, enc_outs[l])?;
            let mut y = self.skip[i].forward(tape, store, cat)?;
            for b in &self.dec[i] {
                y = b.forward(tape, store, y)?;
            }
            x = y;
        }
        Ok(x)
    }
}

/// The ~handful-of-parameters enhancer: 1x1 fuse over the concatenated
/// Content and Illumination, a depthwise-separable 5x5 with gelu between its
/// two halves, and a final 1x1 back to the latent width.
#[derive(Debug, Clone)]
pub struct LightEnhancer {
    pub fuse: Conv2dLayer,
    pub dw: DepthwiseLayer,
    pub pw: Conv2dLayer,
    pub out: Conv2dLayer,
}

impl LightEnhancer {
    pub(crate) fn new<E: Real>(store: &mut ParamStore<E>, rng: &mut Rng, cfg: &ModelConfig) -> Self {
        let c = cfg.channels;
        let lc = cfg.light_channels;
        LightEnhancer {
            fuse: Conv2dLayer::new(store, rng, "light.fuse", 1, 2 * c, lc, 1, 0),
            dw: DepthwiseLayer::new(store, rng, "light.dw", 5, lc, 1, 2),
            pw: Conv2dLayer::new(store, rng, "light.pw", 1, lc, lc, 1, 0),
            out: Conv2dLayer::new(store, rng, "light.out", 1, lc, c, 1, 0),
        }
    }

    pub fn forward<E: Real>(
        &self,
        tape: &mut Tape<E>,
        store: &ParamStore<E>,
        content: Var,
        illumination: Var,
    ) -> Result<Var> {
        if tape.shape(content) != tape.shape(illumination) {
            return Err(Error::ShapeMismatch {
                op: "enhance_light",
                lhs: tape.shape(content).to_vec(),
                rhs: tape.shape(illumination).to_vec(),
            });
        }
        let cat = tape.concat_channels(content, illumination)?;
        let f = self.fuse.forward(tape, store, cat)?;
        let d = self.dw.forward(tape, store, f)?;
        let d = tape.gelu(d)?;
        let p = self.pw.forward(tape, store, d)?;
        self.out.forward(tape, store, p)
    }
}

/// Which enhancer the pipeline routes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnhanceMode {
    Full,
    Light,
}

impl EnhanceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EnhanceMode::Full => "full",
            EnhanceMode::Light => "light",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(EnhanceMode::Full),
            "light" => Ok(EnhanceMode::Light),
            other => Err(Error::Config(format!(
                "unknown mode '{other}', expected full|light"
            ))),
        }
    }
}

/// The whole network plus its parameter store.
#[derive(Clone)]
pub struct LdeModel<E: Real> {
    pub config: ModelConfig,
    pub store: ParamStore<E>,
    pub dis: Disentangler,
    pub recon: Reconstructor,
    pub enh: Enhancer,
    pub light: LightEnhancer,
}

impl<E: Real> LdeModel<E> {
    /// Deterministic construction: identical `(config, seed)` yields
    /// bit-identical parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed).derive("init");
        let mut store = ParamStore::new();
        let dis = Disentangler::new(&mut store, &mut rng, &config);
        let recon = Reconstructor::new(&mut store, &mut rng, &config);
        let enh = Enhancer::new(&mut store, &mut rng, &config);
        let light = LightEnhancer::new(&mut store, &mut rng, &config);
        Ok(LdeModel {
            config,
            store,
            dis,
            recon,
            enh,
            light,
        })
    }

    /// Fresh tape with every parameter bound as a leaf.
    pub fn tape(&self) -> Tape<E> {
        let mut tape = Tape::new();
        self.store.load_into(&mut tape).expect("fresh tape is empty");
        tape
    }

    /// Run disentangle -> enhance -> reconstruct on the tape, returning the
    /// unclamped reconstruction. The spatial extents must already be
    /// divisible by 8 in full mode.
    pub fn restore_on_tape(
        &self,
        tape: &mut Tape<E>,
        image: Var,
        mode: EnhanceMode,
    ) -> Result<Var> {
        let parts = self.dis.forward(tape, &self.store, image)?;
        let restored_illum = match mode {
            EnhanceMode::Full => {
                self.enh
                    .forward(tape, &self.store, parts.illumination, parts.content)?
            }
            EnhanceMode::Light => {
                self.light
                    .forward(tape, &self.store, parts.content, parts.illumination)?
            }
        };
        self.recon
            .forward(tape, &self.store, parts.content, restored_illum)
    }

    /// Inference entry point: reflect-pads to a multiple of 8 when the full
    /// enhancer needs it, crops back, and clamps the output to `[0, 1]`.
    pub fn enhance_image(&self, image: &Tensor<E>, mode: EnhanceMode) -> Result<Tensor<E>> {
        let (h, w, c) = image.hwc()?;
        if c != 3 {
            return Err(Error::invalid("pipeline", "input must be h x w x 3"));
        }
        let padded = match mode {
            EnhanceMode::Full => reflect_pad_to_multiple(image, 8)?,
            EnhanceMode::Light => image.clone(),
        };
        let mut tape = self.tape();
        let input = tape.leaf(padded);
        let out = self.restore_on_tape(&mut tape, input, mode)?;
        let full = tape.value(out).clamp01();
        if full.shape[0] != h || full.shape[1] != w {
            crop(&full, h, w)
        } else {
            Ok(full)
        }
    }

    /// Exact scalar parameter count, total or under a submodule prefix
    /// (`dis.`, `recon.`, `enh.`, `light.`).
    pub fn param_count(&self, prefix: &str) -> usize {
        self.store.count_scalars(prefix)
    }

    /// Per-submodule breakdown; the counts partition the total.
    pub fn param_breakdown(&self) -> Vec<(String, usize)> {
        let mut v: Vec<(String, usize)> = ["dis.", "recon.", "enh.", "light."]
            .iter()
            .map(|p| (p.trim_end_matches('.').to_string(), self.store.count_scalars(p)))
            .collect();
        v.push(("total".to_string(), self.store.count_scalars("")));
        v
    }
}

/// Scalar parameter count of the light enhancer topology as a function of
/// the latent width `c` and hidden width `lc`, by direct enumeration.
pub fn light_enhancer_param_formula(c: usize, lc: usize) -> usize {
    let fuse = 2 * c * lc + lc;
    let dw = 25 * lc + lc;
    let pw = lc * lc + lc;
    let out = lc * c + c;
    fuse + dw + pw + out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn image(h: usize, w: usize, seed: u64) -> Tensor<f32> {
        let mut rng = Rng::new(seed);
        Tensor::uniform([h, w, 3], 0.0, 1.0, &mut rng)
    }

    #[test]
    fn config_validation() {
        let cfg = ModelConfig {
            heads: 3,
            ..ModelConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(ModelConfig::default().validate().is_ok());
    }

    #[test]
    fn disentangle_shapes_and_determinism() {
        let cfg = ModelConfig {
            channels: 8,
            ..ModelConfig::default()
        };
        let model = LdeModel::<f32>::new(cfg, 42).unwrap();
        let img = image(16, 16, 1);

        let run = || {
            let mut tape = model.tape();
            let x = tape.leaf(img.clone());
            let out = model.dis.forward(&mut tape, &model.store, x).unwrap();
            (
                tape.value(out.content).clone(),
                tape.value(out.illumination).clone(),
            )
        };
        let (c1, i1) = run();
        let (c2, i2) = run();
        assert_eq!(c1.shape, vec![16, 16, 8]);
        assert_eq!(i1.shape, vec![16, 16, 8]);
        assert_eq!(c1.data, c2.data);
        assert_eq!(i1.data, i2.data);
    }

    #[test]
    fn disentangle_rejects_small_images() {
        let model = LdeModel::<f32>::new(ModelConfig::default(), 0).unwrap();
        let img = image(4, 16, 2);
        let mut tape = model.tape();
        let x = tape.leaf(img);
        assert!(model.dis.forward(&mut tape, &model.store, x).is_err());
    }

    #[test]
    fn reconstruct_sees_only_the_sum() {
        let cfg = ModelConfig {
            channels: 8,
            ..ModelConfig::default()
        };
        let model = LdeModel::<f64>::new(cfg, 7).unwrap();
        // values on the 1/64 grid: the shifted additions are exact, so the
        // perturbed pair carries a bit-identical sum into the module
        let mut rng = Rng::new(5);
        let mut grid = |lo: f64, hi: f64| {
            let mut t = Tensor::<f64>::uniform([8, 8, 8], lo, hi, &mut rng);
            for v in t.data.iter_mut() {
                *v = (*v * 64.0).round() / 64.0;
            }
            t
        };
        let c = grid(-1.0, 1.0);
        let i = grid(-1.0, 1.0);
        let delta = grid(-0.3, 0.3);

        let mut tape = model.tape();
        let (cv, iv) = (tape.leaf(c.clone()), tape.leaf(i.clone()));
        let out1 = model.recon.forward(&mut tape, &model.store, cv, iv).unwrap();
        assert_eq!(tape.shape(out1), &[8, 8, 3]);

        // shift delta from one component to the other: bit-identical result
        let c2 = Tensor::from_vec(
            vec![8, 8, 8],
            c.data.iter().zip(&delta.data).map(|(a, d)| a + d).collect(),
        )
        .unwrap();
        let i2 = Tensor::from_vec(
            vec![8, 8, 8],
            i.data.iter().zip(&delta.data).map(|(a, d)| a - d).collect(),
        )
        .unwrap();
        let (cv2, iv2) = (tape.leaf(c2), tape.leaf(i2));
        let out2 = model.recon.forward(&mut tape, &model.store, cv2, iv2).unwrap();
        assert_eq!(tape.value(out1).data, tape.value(out2).data);
    }

    #[test]
    fn enhancer_shape_ladder() {
        let cfg = ModelConfig {
            channels: 8,
            ..ModelConfig::default()
        };
        let model = LdeModel::<f32>::new(cfg, 3).unwrap();
        let mut rng = Rng::new(9);
        let i = Tensor::<f32>::uniform([16, 16, 8], -1.0, 1.0, &mut rng);
        let c = Tensor::<f32>::uniform([16, 16, 8], -1.0, 1.0, &mut rng);
        let mut tape = model.tape();
        let (iv, cv) = (tape.leaf(i), tape.leaf(c));
        let out = model.enh.forward(&mut tape, &model.store, iv, cv).unwrap();
        assert_eq!(tape.shape(out), &[16, 16, 8]);
        // deepest level: 16/8 = 2 spatial, 8 * 8 = 64 channels
        let deepest = model.config.level_channels(3);
        assert_eq!(deepest, 64);
    }

    #[test]
    fn enhancer_rejects_non_divisible_extents() {
        let model = LdeModel::<f32>::new(ModelConfig::default(), 3).unwrap();
        let mut rng = Rng::new(9);
        let i = Tensor::<f32>::uniform([12, 16, 16], -1.0, 1.0, &mut rng);
        let c = Tensor::<f32>::uniform([12, 16, 16], -1.0, 1.0, &mut rng);
        let mut tape = model.tape();
        let (iv, cv) = (tape.leaf(i), tape.leaf(c));
        let err = model.enh.forward(&mut tape, &model.store, iv, cv);
        match err {
            Err(Error::InvalidArgument { msg, .. }) => assert!(msg.contains("pad")),
            other => panic!("expected pad instruction, got {other:?}"),
        }
    }

    #[test]
    fn enhancer_gates_closed_matches_zero_content_pyramid() {
        // with every CAE gate at zero the content pyramid cannot reach the
        // illumination path, so replacing the content by zeros changes nothing
        let cfg = ModelConfig {
            channels: 4,
            ..ModelConfig::default()
        };
        let model = LdeModel::<f64>::new(cfg, 13).unwrap();
        let mut rng = Rng::new(21);
        let i = Tensor::<f64>::uniform([8, 8, 4], -1.0, 1.0, &mut rng);
        let c = Tensor::<f64>::uniform([8, 8, 4], -1.0, 1.0, &mut rng);

        let mut tape = model.tape();
        let (iv, cv) = (tape.leaf(i.clone()), tape.leaf(c));
        let a = model
            .enh
            .forward_gates_closed(&mut tape, &model.store, iv, cv)
            .unwrap();

        let zeros = tape.leaf(Tensor::<f64>::zeros([8, 8, 4]));
        let iv2 = tape.leaf(i);
        let b = model
            .enh
            .forward_gates_closed(&mut tape, &model.store, iv2, zeros)
            .unwrap();
        assert_eq!(tape.value(a).data, tape.value(b).data);
    }

    #[test]
    fn light_enhancer_param_count_matches_enumeration() {
        let model = LdeModel::<f32>::new(ModelConfig::default(), 0).unwrap();
        assert_eq!(model.param_count("light."), 1488);
        assert_eq!(light_enhancer_param_formula(16, 16), 1488);
    }

    #[test]
    fn param_breakdown_partitions_total() {
        let model = LdeModel::<f32>::new(ModelConfig::default(), 0).unwrap();
        let breakdown = model.param_breakdown();
        let total = breakdown.last().unwrap().1;
        let sum: usize = breakdown[..breakdown.len() - 1].iter().map(|(_, n)| n).sum();
        assert_eq!(sum, total);
    }

    #[test]
    fn single_conv_param_count() {
        // 3x3 conv 3 -> 8 with bias
        let mut store = ParamStore::<f32>::new();
        let mut rng = Rng::new(0);
        let _ = Conv2dLayer::new(&mut store, &mut rng, "t", 3, 3, 8, 1, 1);
        assert_eq!(store.count_scalars(""), 3 * 3 * 3 * 8 + 8);
    }

    #[test]
    fn pipeline_preserves_odd_shapes_and_range() {
        let cfg = ModelConfig {
            channels: 8,
            ..ModelConfig::default()
        };
        let model = LdeModel::<f32>::new(cfg, 11).unwrap();
        let img = image(19, 23, 3);
        for mode in [EnhanceMode::Full, EnhanceMode::Light] {
            let out = model.enhance_image(&img, mode).unwrap();
            assert_eq!(out.shape, vec![19, 23, 3]);
            assert!(out.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn light_enhancer_preserves_shape() {
        let model = LdeModel::<f32>::new(ModelConfig::default(), 2).unwrap();
        let mut rng = Rng::new(17);
        let c = Tensor::<f32>::uniform([9, 9, 16], -1.0, 1.0, &mut rng);
        let i = Tensor::<f32>::uniform([9, 9, 16], -1.0, 1.0, &mut rng);
        let mut tape = model.tape();
        let (cv, iv) = (tape.leaf(c), tape.leaf(i));
        let out = model.light.forward(&mut tape, &model.store, cv, iv).unwrap();
        assert_eq!(tape.shape(out), &[9, 9, 16]);
    }
}
