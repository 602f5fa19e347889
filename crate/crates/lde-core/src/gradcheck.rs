//! Finite-difference verification of analytic gradients.
//!
//! The harness runs a deterministic tensor function twice per sampled
//! coordinate (central differences, wide precision) and compares against the
//! adjoints produced by [`Tape::backward`].

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Coordinates whose analytic and numeric gradients both sit below this are
/// treated as agreeing. Central differences resolve a gradient only down to
/// roughly 1e-8..1e-9 absolute on graphs of this size (the rounding noise of
/// two nearly equal forward passes divided by `2 eps`), so magnitudes this
/// small cannot be certified to any relative tolerance; comparing them only
/// measures noise. A wrong gradient at or above this scale on either side is
/// still caught.
pub const FD_DEAD_GATE: f64 = 1e-5;

/// Maximum relative error between the analytic gradient and a central
/// finite difference, taken over sampled coordinates of every input.
///
/// `f` must deterministically build a scalar loss from the leaves it is
/// given (one leaf per entry of `inputs`, in order). At most
/// `samples_per_tensor` coordinates of each input are probed; the full
/// coordinate set is used when it is smaller.
///
/// Coordinates that disagree at `eps` are re-measured at `10 eps` and
/// `100 eps` and the best agreement is kept: a wrong analytic gradient
/// disagrees at every step size, while a correct one matches wherever
/// truncation and rounding are both small.
pub fn grad_check<F>(
    f: F,
    inputs: &[Tensor<f64>],
    eps: f64,
    samples_per_tensor: usize,
    rng: &mut Rng,
) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |data: &[Tensor<f64>]| -> Result<(Tape<f64>, Vec<Var>, Var)> {
        let mut tape = Tape::new().strict_finite(true);
        let vars: Vec<Var> = data
            .iter()
            .map(|t| tape.leaf(t.clone().requires_grad(true)))
            .collect();
        let loss = f(&mut tape, &vars)?;
        Ok((tape, vars, loss))
    };

    // analytic pass
    let (mut tape, vars, loss) = eval(inputs)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map(|g| g.to_vec()).unwrap_or_default())
        .collect();

    let mut worst = 0.0f64;
    let mut perturbed: Vec<Tensor<f64>> = inputs.to_vec();
    for (ti, t) in inputs.iter().enumerate() {
        let n = t.numel();
        if n == 0 {
            continue;
        }
        let coords: Vec<usize> = if n <= samples_per_tensor {
            (0..n).collect()
        } else {
            (0..samples_per_tensor).map(|_| rng.below(n)).collect()
        };
        for ci in coords {
            let a = analytic[ti].get(ci).copied().unwrap_or(0.0);
            let orig = perturbed[ti].data[ci];
            let mut best_rel = f64::INFINITY;
            let mut best_numeric = 0.0;
            for scale in [1.0, 10.0, 100.0] {
                let e = eps * scale;
                perturbed[ti].data[ci] = orig + e;
                let (tp, _, lp) = eval(&perturbed)?;
                let plus = tp.scalar(lp);
                perturbed[ti].data[ci] = orig - e;
                let (tm, _, lm) = eval(&perturbed)?;
                let minus = tm.scalar(lm);
                perturbed[ti].data[ci] = orig;

                let numeric = (plus - minus) / (2.0 * e);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                if rel < best_rel {
                    best_rel = rel;
                    best_numeric = numeric;
                }
                if best_rel < 1e-6 {
                    break; // agreement is tight, no refinement needed
                }
            }
            if a.abs() < FD_DEAD_GATE && best_numeric.abs() < FD_DEAD_GATE {
                continue; // both sides are zero at finite-difference resolution
            }
            if best_rel > worst {
                worst = best_rel;
            }
        }
    }
    Ok(worst)
}

/// One entry of the verification suite: a named check with its threshold.
pub struct SuiteEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub threshold: f64,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.threshold
    }
}

/// Primitive operations must agree with central differences to this bound.
pub const PRIMITIVE_TOLERANCE: f64 = 1e-5;
/// Composed blocks (attention, DTB, TTB, FFN, CAE, whole modules, losses).
pub const BLOCK_TOLERANCE: f64 = 1e-4;

use crate::blocks::{Cae, Dtb, Ffn, Ttb};
use crate::loss::{enhancement_loss, LossWeights, PerceptualNet, SsimParams};
use crate::model::{Disentangler, Enhancer, ModelConfig};
use crate::params::ParamStore;
use alloc::string::ToString;
use alloc::vec::Vec as AVec;

fn rand_t(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Tensor<f64> {
    Tensor::uniform(shape.to_vec(), lo, hi, rng)
}

/// Values bounded away from zero, random sign; keeps finite differences off
/// the |x| kink and out of division blowups.
fn rand_signed(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let mut t = rand_t(shape, 0.2, 1.0, rng);
    for v in t.data.iter_mut() {
        if rng.next_bool() {
            *v = -*v;
        }
    }
    t
}

fn store_inputs(store: &ParamStore<f64>, extras: &[Tensor<f64>]) -> AVec<Tensor<f64>> {
    let mut v: AVec<Tensor<f64>> = store.iter().map(|(_, p)| p.value.clone()).collect();
    v.extend(extras.iter().cloned());
    v
}

/// Overwrite every parameter with live random values so the check probes
/// non-degenerate weights: zero-initialized projections would otherwise
/// leave whole subgraphs without gradient flow.
fn randomize_store(store: &mut ParamStore<f64>, rng: &mut Rng) {
    for (_, p) in store.iter_mut() {
        let near_one = p.name.ends_with(".g") || p.name.contains("alpha");
        for v in p.value.data.iter_mut() {
            *v = if near_one {
                rng.range_f64(0.7, 1.3)
            } else {
                rng.range_f64(-0.5, 0.5)
            };
        }
    }
}

/// Reproduces the suite's enhancer case for debugging.
#[doc(hidden)]
pub fn debug_enhancer_case() -> (ParamStore<f64>, Enhancer, Tensor<f64>, Tensor<f64>) {
    let mut rng = entry_rng("enhancer");
    let cfg = ModelConfig {
        channels: 4,
        ..ModelConfig::default()
    };
    let mut store = ParamStore::<f64>::new();
    let mut init = Rng::new(107);
    let enh = Enhancer::new(&mut store, &mut init, &cfg);
        randomize_store(&mut store, &mut init);
    let illum = rand_t(&[8, 8, 4], -1.0, 1.0, &mut rng);
    let content = rand_t(&[8, 8, 4], -1.0, 1.0, &mut rng);
    (store, enh, illum, content)
}

/// The full finite-difference verification suite: every tape primitive at
/// the primitive tolerance, every composed block and both whole modules at
/// the block tolerance. Deterministic.
fn entry_rng(tag: &str) -> Rng {
    Rng::new(0x9d5_0bb).derive(tag)
}

pub fn verification_suite() -> Result<Vec<SuiteEntry>> {
    let mut entries = Vec::new();

    let check = |name: &str,
                     threshold: f64,
                     inputs: &[Tensor<f64>],
                     samples: usize,
                     rng: &mut Rng,
                     f: &dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>|
     -> Result<SuiteEntry> {
        let max_rel_error = grad_check(f, inputs, DEFAULT_EPS, samples, rng)?;
        Ok(SuiteEntry {
            name: name.to_string(),
            max_rel_error,
            threshold,
        })
    };

    // ---- primitives ----------------------------------------------------

    {
        let mut rng = entry_rng("conv2d");
        let x = rand_t(&[4, 4, 2], -1.0, 1.0, &mut rng);
        let w = rand_t(&[3, 3, 2, 3], -0.5, 0.5, &mut rng);
        let b = rand_t(&[3], -0.2, 0.2, &mut rng);
        entries.push(check(
            "conv2d",
            PRIMITIVE_TOLERANCE,
            &[x, w, b],
            24,
            &mut rng.clone(),
            &|t, v| {
                let y = t.conv2d(v[0], v[1], v[2], 1, 1)?;
                t.square_mean(y)
            },
        )?);
    }
    {
        let mut rng = entry_rng("conv2d_strided");
        let x = rand_t(&[6, 6, 2], -1.0, 1.0, &mut rng);
        let w = rand_t(&[3, 3, 2, 4], -0.5, 0.5, &mut rng);
        let b = rand_t(&[4], -0.2, 0.2, &mut rng);
        entries.push(check(
            "conv2d_strided",
            PRIMITIVE_TOLERANCE,
            &[x, w, b],
            24,
            &mut rng.clone(),
            &|t, v| {
                let y = t.conv2d(v[0], v[1], v[2], 2, 1)?;
                t.square_mean(y)
            },
        )?);
    }
    {
        let mut rng = entry_rng("depthwise_conv2d");
        let x = rand_t(&[4, 4, 3], -1.0, 1.0, &mut rng);
        let w = rand_t(&[3, 3, 3], -0.5, 0.5, &mut rng);
        let b = rand_t(&[3], -0.2, 0.2, &mut rng);
        entries.push(check(
            "depthwise_conv2d",
            PRIMITIVE_TOLERANCE,
            &[x, w, b],
            24,
            &mut rng.clone(),
            &|t, v| {
                let y = t.depthwise_conv2d(v[0], v[1], v[2], 1, 1)?;
                t.square_mean(y)
            },
        )?);
    }
    {
        let mut rng = entry_rng("matmul");
        let a = rand_t(&[3, 4], -1.0, 1.0, &mut rng);
        let b = rand_t(&[4, 2], -1.0, 1.0, &mut rng);
        entries.push(check(
            "matmul",
            PRIMITIVE_TOLERANCE,
            &[a, b],
            24,
            &mut rng.clone(),
            &|t, v| {
                let y = t.matmul(v[0], v[1])?;
                t.square_mean(y)
            },
        )?);
    }
    {
        let mut rng = entry_rng("softmax");
        let x = rand_t(&[3, 5], -2.0, 2.0, &mut rng);
        let probe = rand_t(&[3, 5], -1.0, 1.0, &mut rng);
        entries.push(check(
            "softmax",
            PRIMITIVE_TOLERANCE,
            &[x, probe],
            24,
            &mut rng.clone(),
            &|t, v| {
                let s = t.softmax(v[0], 1)?;
                let p = t.mul(s, v[1])?;
                t.sum_all(p)
            },
        )?);
    }
    {
        let mut rng = entry_rng("layer_norm");
        let x = rand_t(&[3, 3, 4], -1.0, 1.0, &mut rng);
        let gamma = rand_t(&[4], 0.5, 1.5, &mut rng);
        let beta = rand_t(&[4], -0.5, 0.5, &mut rng);
        entries.push(check(
            "layer_norm",
            PRIMITIVE_TOLERANCE,
            &[x, gamma, beta],
            24,
            &mut rng.clone(),
            &|t, v| {
                let y = t.layer_norm(v[0], v[1], v[2])?;
                t.square_mean(y)
            },
        )?);
    }
    {
        let mut rng = entry_rng("pixel_unshuffle_shuffle");
        let x = rand_t(&[4, 4, 2], -1.0, 1.0, &mut rng);
        let probe = rand_t(&[2, 2, 8], -1.0, 1.0, &mut rng);
        entries.push(check(
            "pixel_unshuffle_shuffle",
            PRIMITIVE_TOLERANCE,
            &[x, probe],
            24,
            &mut rng.clone(),
            &|t, v| {
                let folded = t.pixel_unshuffle(v[0], 2)?;
                let probed = t.mul(folded, v[1])?;
                let back = t.pixel_shuffle(probed, 2)?;
                t.square_mean(back)
            },
        )?);
    }
    {
        let mut rng = entry_rng("global_avg_pool");
        let x = rand_t(&[3, 3, 4], -1.0, 1.0, &mut rng);
        entries.push(check(
            "global_avg_pool",
            PRIMITIVE_TOLERANCE,
            &[x],
            24,
            &mut rng.clone(),
            &|t, v| {
                let y = t.global_avg_pool(v[0])?;
                t.square_mean(y)
            },
        )?);
    }
    {
        let mut rng = entry_rng("elementwise_arith");
        let a = rand_signed(&[3, 3], &mut rng);
        let b = rand_t(&[3, 3], 0.5, 1.5, &mut rng);
        entries.push(check(
            "elementwise_arith",
            PRIMITIVE_TOLERANCE,
            &[a, b],
            24,
            &mut rng.clone(),
            &|t, v| {
                let s = t.add(v[0], v[1])?;
                let d = t.sub(s, v[1])?;
                let m = t.mul(d, v[0])?;
                let q = t.div(m, v[1])?;
                let n = t.neg(q)?;
                let sc = t.scale(n, 0.7)?;
                let sh = t.add_scalar(sc, 0.3)?;
                t.square_mean(sh)
            },
        )?);
    }
    {
        let mut rng = entry_rng("activations");
        let x = rand_t(&[4, 4], -2.0, 2.0, &mut rng);
        entries.push(check(
            "activations",
            PRIMITIVE_TOLERANCE,
            &[x],
            24,
            &mut rng.clone(),
            &|t, v| {
                let s = t.sigmoid(v[0])?;
                let g = t.gelu(s)?;
                t.square_mean(g)
            },
        )?);
    }
    {
        let mut rng = entry_rng("reductions");
        let x = rand_signed(&[4, 4], &mut rng);
        entries.push(check(
            "reductions",
            PRIMITIVE_TOLERANCE,
            &[x],
            24,
            &mut rng.clone(),
            &|t, v| {
                let a = t.abs_sum(v[0])?;
                let m = t.square_mean(v[0])?;
                let s = t.sum_all(v[0])?;
                let am = t.add(a, m)?;
                let all = t.add(am, s)?;
                t.scale(all, 0.25)
            },
        )?);
    }
    {
        let mut rng = entry_rng("shape_ops");
        let x = rand_t(&[3, 4], -1.0, 1.0, &mut rng);
        let y = rand_t(&[3, 2], -1.0, 1.0, &mut rng);
        entries.push(check(
            "shape_ops",
            PRIMITIVE_TOLERANCE,
            &[x, y],
            24,
            &mut rng.clone(),
            &|t, v| {
                let tr = t.transpose(v[0])?;
                let rs = t.reshape(tr, [3, 4])?;
                let cat = t.concat_channels(rs, v[1])?;
                let sl = t.slice_cols(cat, 1, 4)?;
                t.square_mean(sl)
            },
        )?);
    }
    {
        let mut rng = entry_rng("broadcast_ops");
        let x = rand_t(&[3, 3, 2], -1.0, 1.0, &mut rng);
        let s = rand_t(&[1], 0.5, 1.5, &mut rng);
        let g = rand_t(&[2], 0.2, 0.9, &mut rng);
        entries.push(check(
            "broadcast_ops",
            PRIMITIVE_TOLERANCE,
            &[x, s, g],
            24,
            &mut rng.clone(),
            &|t, v| {
                let a = t.mul_scalar_var(v[0], v[1])?;
                let b = t.mul_channels(a, v[2])?;
                t.square_mean(b)
            },
        )?);
    }
    {
        let mut rng = entry_rng("l2_normalize_cols");
        // probe projection: the squared mean of a normalized column is a
        // constant, so the loss must mix in a fixed random direction
        let x = rand_signed(&[6, 3], &mut rng);
        let probe = rand_t(&[6, 3], -1.0, 1.0, &mut rng);
        entries.push(check(
            "l2_normalize_cols",
            PRIMITIVE_TOLERANCE,
            &[x, probe],
            18,
            &mut rng.clone(),
            &|t, v| {
                let y = t.l2_normalize_cols(v[0])?;
                let p = t.mul(y, v[1])?;
                t.sum_all(p)
            },
        )?);
    }
    {
        let mut rng = entry_rng("luma");
        let x = rand_t(&[3, 3, 3], 0.0, 1.0, &mut rng);
        entries.push(check(
            "luma",
            PRIMITIVE_TOLERANCE,
            &[x],
            24,
            &mut rng.clone(),
            &|t, v| {
                let y = t.luma(v[0])?;
                t.square_mean(y)
            },
        )?);
    }

    // ---- composed blocks -------------------------------------------------

    {
        let mut rng = entry_rng("ffn");
        let mut store = ParamStore::<f64>::new();
        let mut init = Rng::new(101);
        let ffn = Ffn::new(&mut store, &mut init, "f", 4, 2);
        randomize_store(&mut store, &mut init);
        let x = rand_t(&[4, 4, 4], -1.0, 1.0, &mut rng);
        let inputs = store_inputs(&store, &[x]);
        let n = store.len();
        entries.push(check(
            "ffn",
            BLOCK_TOLERANCE,
            &inputs,
            5,
            &mut rng.clone(),
            &move |t, v| {
                let y = ffn.forward(t, &store, v[n])?;
                t.square_mean(y)
            },
        )?);
    }
    {
        let mut rng = entry_rng("dual_attention");
        let mut store = ParamStore::<f64>::new();
        let mut init = Rng::new(102);
        let dtb = Dtb::new(&mut store, &mut init, "d", 4, 2, 2);
        randomize_store(&mut store, &mut init);
        let y_in = rand_t(&[3, 3, 4], -1.0, 1.0, &mut rng);
        let inputs = store_inputs(&store, &[y_in]);
        let n = store.len();
        entries.push(check(
            "dual_attention",
            BLOCK_TOLERANCE,
            &inputs,
            5,
            &mut rng.clone(),
            &move |t, v| {
                let (a_c, a_i) = dtb.dual_attention(t, &store, v[n])?;
                let mc = t.square_mean(a_c)?;
                let mi = t.square_mean(a_i)?;
                t.add(mc, mi)
            },
        )?);
    }
    {
        let mut rng = entry_rng("dtb");
        let mut store = ParamStore::<f64>::new();
        let mut init = Rng::new(103);
        let dtb = Dtb::new(&mut store, &mut init, "d", 4, 1, 2);
        randomize_store(&mut store, &mut init);
        let f_in = rand_t(&[4, 4, 4], -1.0, 1.0, &mut rng);
        let inputs = store_inputs(&store, &[f_in]);
        let n = store.len();
        entries.push(check(
            "dtb",
            BLOCK_TOLERANCE,
            &inputs,
            5,
            &mut rng.clone(),
            &move |t, v| {
                let out = dtb.forward(t, &store, v[n])?;
                let mc = t.square_mean(out.content)?;
                let mi = t.square_mean(out.illumination)?;
                let mf = t.square_mean(out.fused)?;
                let s = t.add(mc, mi)?;
                t.add(s, mf)
            },
        )?);
    }
    {
        let mut rng = entry_rng("ttb");
        let mut store = ParamStore::<f64>::new();
        let mut init = Rng::new(104);
        let ttb = Ttb::new(&mut store, &mut init, "t", 4, 1, 2);
        randomize_store(&mut store, &mut init);
        let x = rand_t(&[4, 4, 4], -1.0, 1.0, &mut rng);
        let inputs = store_inputs(&store, &[x]);
        let n = store.len();
        entries.push(check(
            "ttb",
            BLOCK_TOLERANCE,
            &inputs,
            5,
            &mut rng.clone(),
            &move |t, v| {
                let y = ttb.forward(t, &store, v[n])?;
                t.square_mean(y)
            },
        )?);
    }
    {
        let mut rng = entry_rng("cae_fuse");
        let mut store = ParamStore::<f64>::new();
        let mut init = Rng::new(105);
        let cae = Cae::new(&mut store, &mut init, "c", 4, 1);
        randomize_store(&mut store, &mut init);
        let content = rand_t(&[4, 4, 4], -1.0, 1.0, &mut rng);
        let illum = rand_t(&[4, 4, 4], -1.0, 1.0, &mut rng);
        let inputs = store_inputs(&store, &[content, illum]);
        let n = store.len();
        entries.push(check(
            "cae_fuse",
            BLOCK_TOLERANCE,
            &inputs,
            5,
            &mut rng.clone(),
            &move |t, v| {
                let y = cae.fuse(t, &store, v[n], v[n + 1])?;
                t.square_mean(y)
            },
        )?);
    }
    {
        let mut rng = entry_rng("disentangler");
        let cfg = ModelConfig {
            channels: 4,
            ..ModelConfig::default()
        };
        let mut store = ParamStore::<f64>::new();
        let mut init = Rng::new(106);
        let dis = Disentangler::new(&mut store, &mut init, &cfg);
        randomize_store(&mut store, &mut init);
        let img = rand_t(&[8, 8, 3], 0.0, 1.0, &mut rng);
        let inputs = store_inputs(&store, &[img]);
        let n = store.len();
        entries.push(check(
            "disentangler",
            BLOCK_TOLERANCE,
            &inputs,
            4,
            &mut rng.clone(),
            &move |t, v| {
                let out = dis.forward(t, &store, v[n])?;
                let mc = t.square_mean(out.content)?;
                let mi = t.square_mean(out.illumination)?;
                t.add(mc, mi)
            },
        )?);
    }
    {
        let mut rng = entry_rng("enhancer");
        let cfg = ModelConfig {
            channels: 4,
            ..ModelConfig::default()
        };
        let mut store = ParamStore::<f64>::new();
        let mut init = Rng::new(107);
        let enh = Enhancer::new(&mut store, &mut init, &cfg);
        randomize_store(&mut store, &mut init);
        let illum = rand_t(&[8, 8, 4], -1.0, 1.0, &mut rng);
        let content = rand_t(&[8, 8, 4], -1.0, 1.0, &mut rng);
        let inputs = store_inputs(&store, &[illum, content]);
        let n = store.len();
        entries.push(check(
            "enhancer",
            BLOCK_TOLERANCE,
            &inputs,
            3,
            &mut rng.clone(),
            &move |t, v| {
                let y = enh.forward(t, &store, v[n], v[n + 1])?;
                t.square_mean(y)
            },
        )?);
    }
    {
        let mut rng = entry_rng("enhancement_loss");
        let theta = PerceptualNet::<f64>::fixed();
        let weights = LossWeights::default();
        let ssim_params = SsimParams::default();
        let restored = rand_t(&[16, 16, 3], 0.05, 0.95, &mut rng);
        let target = rand_t(&[16, 16, 3], 0.05, 0.95, &mut rng);
        entries.push(check(
            "enhancement_loss",
            BLOCK_TOLERANCE,
            &[restored, target],
            12,
            &mut rng.clone(),
            &move |t, v| {
                Ok(enhancement_loss(t, &theta, v[0], v[1], &weights, &ssim_params)?.total)
            },
        )?);
    }

    Ok(entries)
}
