//! Transformer building blocks: dual-softmax transposed attention, the
//! disentanglement transformer block (DTB), the single-softmax transposed
//! transformer block (TTB), the feed-forward network and the content-aware
//! embedding (CAE) fusion.
//!
//! Attention here is channel-transposed: queries and keys are reshaped to
//! `hw x c`, their columns L2-normalized, and the `c x c` logit map is scaled
//! by a learnable per-head temperature before the softmax. The dual variant
//! row-softmaxes `+M` and `-M` with shared Q/K/V, which is what splits the
//! feature into Content and Illumination branches.

use alloc::format;
use alloc::vec::Vec;

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::rng::Rng;
use crate::tape::{Tape, Var};

// ---- parameterized layers ---------------------------------------------------

#[derive(Debug, Clone)]
pub struct Conv2dLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2dLayer {
    pub fn new<E: Real>(
        store: &mut ParamStore<E>,
        rng: &mut Rng,
        name: &str,
        k: usize,
        cin: usize,
        cout: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let w = store.add_he_uniform(format!("{name}.w"), [k, k, cin, cout], k * k * cin, rng);
        let b = store.add_zeros(format!("{name}.b"), [cout]);
        Conv2dLayer { w, b, stride, pad }
    }

    /// Zero-initialized variant for residual-branch output projections:
    /// blocks start as the identity, which keeps early optimization in a
    /// well-conditioned regime. Gradients flow into the zeroed weights from
    /// the first step.
    pub fn new_zeroed<E: Real>(
        store: &mut ParamStore<E>,
        name: &str,
        k: usize,
        cin: usize,
        cout: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let w = store.add_zeros(format!("{name}.w"), [k, k, cin, cout]);
        let b = store.add_zeros(format!("{name}.b"), [cout]);
        Conv2dLayer { w, b, stride, pad }
    }

    pub fn forward<E: Real>(&self, tape: &mut Tape<E>, store: &ParamStore<E>, x: Var) -> Result<Var> {
        tape.conv2d(x, store.var(self.w), store.var(self.b), self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct DepthwiseLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl DepthwiseLayer {
    pub fn new<E: Real>(
        store: &mut ParamStore<E>,
        rng: &mut Rng,
        name: &str,
        k: usize,
        c: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let w = store.add_he_uniform(format!("{name}.w"), [k, k, c], k * k, rng);
        let b = store.add_zeros(format!("{name}.b"), [c]);
        DepthwiseLayer { w, b, stride, pad }
    }

    pub fn forward<E: Real>(&self, tape: &mut Tape<E>, store: &ParamStore<E>, x: Var) -> Result<Var> {
        tape.depthwise_conv2d(x, store.var(self.w), store.var(self.b), self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormLayer {
    pub fn new<E: Real>(store: &mut ParamStore<E>, name: &str, c: usize) -> Self {
        let gamma = store.add_filled(format!("{name}.g"), [c], E::ONE);
        let beta = store.add_zeros(format!("{name}.b"), [c]);
        LayerNormLayer { gamma, beta }
    }

    pub fn forward<E: Real>(&self, tape: &mut Tape<E>, store: &ParamStore<E>, x: Var) -> Result<Var> {
        tape.layer_norm(x, store.var(self.gamma), store.var(self.beta))
    }
}

/// Pointwise 1x1 convolution followed by a 3x3 depthwise convolution, the
/// projection used for Q, K and V.
#[derive(Debug, Clone)]
pub struct QkvProjection {
    pub pw: Conv2dLayer,
    pub dw: DepthwiseLayer,
}

impl QkvProjection {
    pub fn new<E: Real>(store: &mut ParamStore<E>, rng: &mut Rng, name: &str, c: usize) -> Self {
        QkvProjection {
            pw: Conv2dLayer::new(store, rng, &format!("{name}.pw"), 1, c, c, 1, 0),
            dw: DepthwiseLayer::new(store, rng, &format!("{name}.dw"), 3, c, 1, 1),
        }
    }

    pub fn forward<E: Real>(&self, tape: &mut Tape<E>, store: &ParamStore<E>, x: Var) -> Result<Var> {
        let y = self.pw.forward(tape, store, x)?;
        self.dw.forward(tape, store, y)
    }
}

// ---- transposed attention ----------------------------------------------------

/// Shared Q/K/V projections plus per-head temperatures; produces the
/// channel-attention mixes before any output projection.
#[derive(Debug, Clone)]
pub struct AttentionCore {
    pub q: QkvProjection,
    pub k: QkvProjection,
    pub v: QkvProjection,
    pub alphas: Vec<ParamId>,
    pub heads: usize,
}

impl AttentionCore {
    pub fn new<E: Real>(
        store: &mut ParamStore<E>,
        rng: &mut Rng,
        name: &str,
        c: usize,
        heads: usize,
    ) -> Self {
        assert!(heads >= 1 && c % heads == 0, "head count must divide channels");
        let q = QkvProjection::new(store, rng, &format!("{name}.q"), c);
        let k = QkvProjection::new(store, rng, &format!("{name}.k"), c);
        let v = QkvProjection::new(store, rng, &format!("{name}.v"), c);
        let alphas = (0..heads)
            .map(|h| store.add_filled(format!("{name}.alpha{h}"), [1], E::ONE))
            .collect();
        AttentionCore { q, k, v, alphas, heads }
    }

    /// Channel attention with queries from `q_src` and keys/values from
    /// `kv_src` (both `h x w x c`). Returns the `softmax(+M)` mix and, when
    /// `dual`, the `softmax(-M)` mix as well; both stay `h x w x c`.
    pub fn attend<E: Real>(
        &self,
        tape: &mut Tape<E>,
        store: &ParamStore<E>,
        q_src: Var,
        kv_src: Var,
        dual: bool,
    ) -> Result<(Var, Option<Var>)> {
        let shape = tape.shape(q_src).to_vec();
        let (h, w, c) = (shape[0], shape[1], shape[2]);
        let hw = h * w;
        let d = c / self.heads;

        let q = self.q.forward(tape, store, q_src)?;
        let k = self.k.forward(tape, store, kv_src)?;
        let v = self.v.forward(tape, store, kv_src)?;
        let q = tape.reshape(q, [hw, c])?;
        let k = tape.reshape(k, [hw, c])?;
        let v = tape.reshape(v, [hw, c])?;

        let mut pos_heads = Vec::with_capacity(self.heads);
        let mut neg_heads = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let qh = tape.slice_cols(q, head * d, d)?;
            let kh = tape.slice_cols(k, head * d, d)?;
            let vh = tape.slice_cols(v, head * d, d)?;
            let qn = tape.l2_normalize_cols(qh)?;
            let kn = tape.l2_normalize_cols(kh)?;
            let qt = tape.transpose(qn)?;
            let logits = tape.matmul(qt, kn)?; // d x d transposed-attention map
            let logits = tape.mul_scalar_var(logits, store.var(self.alphas[head]))?;

            let s_pos = tape.softmax(logits, 1)?;
            let st = tape.transpose(s_pos)?;
            pos_heads.push(tape.matmul(vh, st)?);

            if dual {
                let neg = tape.neg(logits)?;
                let s_neg = tape.softmax(neg, 1)?;
                let st_neg = tape.transpose(s_neg)?;
                neg_heads.push(tape.matmul(vh, st_neg)?);
            }
        }

        let join = |tape: &mut Tape<E>, parts: Vec<Var>| -> Result<Var> {
            let mut acc = parts[0];
            for &p in &parts[1..] {
                acc = tape.concat_channels(acc, p)?;
            }
            tape.reshape(acc, [h, w, c])
        };
        let pos = join(tape, pos_heads)?;
        let neg = if dual { Some(join(tape, neg_heads)?) } else { None };
        Ok((pos, neg))
    }
}

/// Weights of one disentanglement transformer block.
#[derive(Debug, Clone)]
pub struct Dtb {
    pub ln1: LayerNormLayer,
    pub attn: AttentionCore,
    pub proj_c: Conv2dLayer,
    pub proj_i: Conv2dLayer,
    pub ln2: LayerNormLayer,
    pub ffn: Ffn,
}

impl Dtb {
    pub fn new<E: Real>(
        store: &mut ParamStore<E>,
        rng: &mut Rng,
        name: &str,
        c: usize,
        heads: usize,
        ffn_expansion: usize,
    ) -> Self {
        Dtb {
            ln1: LayerNormLayer::new(store, &format!("{name}.ln1"), c),
            attn: AttentionCore::new(store, rng, &format!("{name}.attn"), c, heads),
            proj_c: Conv2dLayer::new_zeroed(store, &format!("{name}.proj_c"), 1, c, c, 1, 0),
            proj_i: Conv2dLayer::new_zeroed(store, &format!("{name}.proj_i"), 1, c, c, 1, 0),
            ln2: LayerNormLayer::new(store, &format!("{name}.ln2"), c),
            ffn: Ffn::new(store, rng, &format!("{name}.ffn"), c, ffn_expansion),
        }
    }

    /// Dual attention on the layer-normed input: Content attention from
    /// `softmax(+M)`, Illumination attention from `softmax(-M)`, each with
    /// its own output projection.
    pub fn dual_attention<E: Real>(
        &self,
        tape: &mut Tape<E>,
        store: &ParamStore<E>,
        y: Var,
    ) -> Result<(Var, Var)> {
        let (pos, neg) = self.attn.attend(tape, store, y, y, true)?;
        let a_c = self.proj_c.forward(tape, store, pos)?;
        let a_i = self.proj_i.forward(tape, store, neg.expect("dual attention"))?;
        Ok((a_c, a_i))
    }

    /// Block dataflow. The Content branch keeps the residual to the block
    /// input; the Illumination branch deliberately does not. The returned
    /// fused feature is exactly `content + illumination`.
    pub fn forward<E: Real>(
        &self,
        tape: &mut Tape<E>,
        store: &ParamStore<E>,
        f: Var,
    ) -> Result<DtbOutput> {
        let y = self.ln1.forward(tape, store, f)?;
        let (a_c, a_i) = self.dual_attention(tape, store, y)?;

        let c_in = tape.add(a_c, f)?;
        let c_norm = self.ln2.forward(tape, store, c_in)?;
        let c_ffn = self.ffn.forward(tape, store, c_norm)?;
        let content = tape.add(c_ffn, c_in)?;

        let i_norm = self.ln2.forward(tape, store, a_i)?;
        let i_ffn = self.ffn.forward(tape, store, i_norm)?;
        let illumination = tape.add(i_ffn, a_i)?;

        let fused = tape.add(content, illumination)?;
        Ok(DtbOutput {
            content,
            illumination,
            fused,
        })
    }
}

pub struct DtbOutput {
    pub content: Var,
    pub illumination: Var,
    pub fused: Var,
}

/// Feed-forward network: 1x1 expansion, gelu, 3x3 depthwise, 1x1 projection.
#[derive(Debug, Clone)]
pub struct Ffn {
    pub expand: Conv2dLayer,
    pub dw: DepthwiseLayer,
    pub proj: Conv2dLayer,
}

impl Ffn {
    pub fn new<E: Real>(
        store: &mut ParamStore<E>,
        rng: &mut Rng,
        name: &str,
        c: usize,
        expansion: usize,
    ) -> Self {
        let hidden = c * expansion;
        Ffn {
            expand: Conv2dLayer::new(store, rng, &format!("{name}.expand"), 1, c, hidden, 1, 0),
            dw: DepthwiseLayer::new(store, rng, &format!("{name}.dw"), 3, hidden, 1, 1),
            proj: Conv2dLayer::new_zeroed(store, &format!("{name}.proj"), 1, hidden, c, 1, 0),
        }
    }

    pub fn forward<E: Real>(&self, tape: &mut Tape<E>, store: &ParamStore<E>, x: Var) -> Result<Var> {
        let y = self.expand.forward(tape, store, x)?;
        let y = tape.gelu(y)?;
        let y = self.dw.forward(tape, store, y)?;
        self.proj.forward(tape, store, y)
    }
}

/// Single-softmax transposed transformer block used by the reconstruction
/// module and the enhancer.
#[derive(Debug, Clone)]
pub struct Ttb {
    pub ln1: LayerNormLayer,
    pub attn: AttentionCore,
    pub proj: Conv2dLayer,
    pub ln2: LayerNormLayer,
    pub ffn: Ffn,
}

impl Ttb {
    pub fn new<E: Real>(
        store: &mut ParamStore<E>,
        rng: &mut Rng,
        name: &str,
        c: usize,
        heads: usize,
        ffn_expansion: usize,
    ) -> Self {
        Ttb {
            ln1: LayerNormLayer::new(store, &format!("{name}.ln1"), c),
            attn: AttentionCore::new(store, rng, &format!("{name}.attn"), c, heads),
            proj: Conv2dLayer::new_zeroed(store, &format!("{name}.proj"), 1, c, c, 1, 0),
            ln2: LayerNormLayer::new(store, &format!("{name}.ln2"), c),
            ffn: Ffn::new(store, rng, &format!("{name}.ffn"), c, ffn_expansion),
        }
    }

    pub fn forward<E: Real>(&self, tape: &mut Tape<E>, store: &ParamStore<E>, x: Var) -> Result<Var> {
        let y = self.ln1.forward(tape, store, x)?;
        let (pos, _) = self.attn.attend(tape, store, y, y, false)?;
        let attn_out = self.proj.forward(tape, store, pos)?;
        let mid = tape.add(x, attn_out)?;
        let n = self.ln2.forward(tape, store, mid)?;
        let f = self.ffn.forward(tape, store, n)?;
        tape.add(mid, f)
    }
}

/// Content-aware embedding: Illumination queries Content through transposed
/// cross-attention, and a pooled sigmoid gate decides per channel how much
/// of the cross-attended feature to add back.
#[derive(Debug, Clone)]
pub struct Cae {
    pub attn: AttentionCore,
    pub fc1_w: ParamId,
    pub fc1_b: ParamId,
    pub fc2_w: ParamId,
    pub fc2_b: ParamId,
    channels: usize,
}

impl Cae {
    pub fn new<E: Real>(
        store: &mut ParamStore<E>,
        rng: &mut Rng,
        name: &str,
        c: usize,
        heads: usize,
    ) -> Self {
        let attn = AttentionCore::new(store, rng, &format!("{name}.attn"), c, heads);
        // silence the value projection at init: the cross branch contributes
        // nothing until training opens it, so the module starts as a
        // pass-through on the Illumination feature
        {
            let w = store.get_mut(attn.v.pw.w);
            for v in w.value.data.iter_mut() {
                *v = E::ZERO;
            }
        }
        let fc1_w = store.add_he_uniform(format!("{name}.fuse.fc1.w"), [c, c], c, rng);
        let fc1_b = store.add_zeros(format!("{name}.fuse.fc1.b"), [1, c]);
        let fc2_w = store.add_he_uniform(format!("{name}.fuse.fc2.w"), [c, c], c, rng);
        let fc2_b = store.add_zeros(format!("{name}.fuse.fc2.b"), [1, c]);
        Cae {
            attn,
            fc1_w,
            fc1_b,
            fc2_w,
            fc2_b,
            channels: c,
        }
    }

    /// `content` is the source feature, `illumination` the target feature;
    /// output is `illumination + g (.) X` with the gate `g` in `(0,1)^c`.
    pub fn fuse<E: Real>(
        &self,
        tape: &mut Tape<E>,
        store: &ParamStore<E>,
        content: Var,
        illumination: Var,
    ) -> Result<Var> {
        self.fuse_impl(tape, store, content, illumination, false)
    }

    /// Same as [`Cae::fuse`] but with the gate clamped to exactly zero,
    /// which turns the module into a pass-through on the Illumination
    /// feature. Used by invariants and ablation paths.
    pub fn fuse_gate_closed<E: Real>(
        &self,
        tape: &mut Tape<E>,
        store: &ParamStore<E>,
        content: Var,
        illumination: Var,
    ) -> Result<Var> {
        self.fuse_impl(tape, store, content, illumination, true)
    }

    fn fuse_impl<E: Real>(
        &self,
        tape: &mut Tape<E>,
        store: &ParamStore<E>,
        content: Var,
        illumination: Var,
        zero_gate: bool,
    ) -> Result<Var> {
        if tape.shape(content) != tape.shape(illumination) {
            return Err(crate::error::Error::ShapeMismatch {
                op: "cae_fuse",
                lhs: tape.shape(content).to_vec(),
                rhs: tape.shape(illumination).to_vec(),
            });
        }
        let (cross, _) = self.attn.attend(tape, store, illumination, content, false)?;

        let pooled = tape.global_avg_pool(cross)?;
        let pooled = tape.reshape(pooled, [1, self.channels])?;
        let h1 = tape.matmul(pooled, store.var(self.fc1_w))?;
        let h1 = tape.add(h1, store.var(self.fc1_b))?;
        let h1 = tape.gelu(h1)?;
        let h2 = tape.matmul(h1, store.var(self.fc2_w))?;
        let h2 = tape.add(h2, store.var(self.fc2_b))?;
        let mut gate = tape.sigmoid(h2)?;
        if zero_gate {
            gate = tape.scale(gate, E::ZERO)?;
        }
        let gate = tape.reshape(gate, [self.channels])?;

        let weighted = tape.mul_channels(cross, gate)?;
        tape.add(illumination, weighted)
    }
}
