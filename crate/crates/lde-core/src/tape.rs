//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] is a Wengert list: every operation appends a node holding its
//! output value and a record of its inputs, so the list is always in
//! topological order. [`Tape::backward`] walks the list once in reverse,
//! propagating adjoints, and accumulates gradients into the leaves that were
//! created with `requires_grad`. Repeated `backward` calls without resetting
//! the tape keep accumulating into leaf gradients.
//!
//! Nodes whose subgraph contains no `requires_grad` leaf are skipped during
//! the reverse sweep, so frozen submodules cost nothing beyond their forward
//! pass.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<E> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, E),
    AddScalar(Var, E),
    Sigmoid(Var),
    Gelu(Var),
    AbsSum(Var),
    SquareMean(Var),
    SumAll(Var),
    Reshape(Var),
    Transpose(Var),
    SliceCols { x: Var, start: usize },
    ConcatChannels(Var, Var),
    MatMul(Var, Var),
    MulScalarVar { x: Var, s: Var },
    MulChannels { x: Var, g: Var },
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var },
    L2NormCols(Var),
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    DepthwiseConv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    PixelUnshuffle { x: Var, r: usize },
    PixelShuffle { x: Var, r: usize },
    GlobalAvgPool(Var),
    Luma(Var),
}

struct Node<E> {
    t: Tensor<E>,
    op: Op<E>,
    needs: bool,
}

pub struct Tape<E: Real> {
    nodes: Vec<Node<E>>,
    strict_finite: bool,
}

/// Layer-norm stabilizer, fixed by contract.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Stabilizer inside the column L2 normalization.
const L2_NORM_EPS: f64 = 1e-12;

const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

impl<E: Real> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Real> Tape<E> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            strict_finite: false,
        }
    }

    /// Verify every produced value is finite, erroring with the operation
    /// name otherwise. Used by the finite-difference harness.
    pub fn strict_finite(mut self, on: bool) -> Self {
        self.strict_finite = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a leaf, honoring its `requires_grad` flag.
    pub fn leaf(&mut self, t: Tensor<E>) -> Var {
        let needs = t.requires_grad;
        self.nodes.push(Node {
            t,
            op: Op::Leaf,
            needs,
        });
        Var(self.nodes.len() - 1)
    }

    /// Insert a non-differentiable constant leaf (data is cloned).
    pub fn constant(&mut self, t: &Tensor<E>) -> Var {
        let mut c = t.clone();
        c.requires_grad = false;
        c.grad = None;
        self.leaf(c)
    }

    pub fn value(&self, v: Var) -> &Tensor<E> {
        &self.nodes[v.0].t
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].t.shape
    }

    pub fn scalar(&self, v: Var) -> E {
        debug_assert_eq!(self.nodes[v.0].t.numel(), 1);
        self.nodes[v.0].t.data[0]
    }

    /// Gradient accumulated on a leaf by `backward`, if any.
    pub fn grad(&self, v: Var) -> Option<&[E]> {
        self.nodes[v.0].t.grad.as_deref()
    }

    fn data(&self, v: Var) -> &[E] {
        &self.nodes[v.0].t.data
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<E>, op: Op<E>, op_name: &'static str) -> Result<Var> {
        if self.strict_finite && !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: op_name });
        }
        let needs = match &op {
            Op::Leaf => false,
            op => self.op_inputs(op).iter().any(|v| self.nodes[v.0].needs),
        };
        self.nodes.push(Node {
            t: Tensor {
                shape,
                data,
                requires_grad: false,
                grad: None,
            },
            op,
            needs,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn op_inputs(&self, op: &Op<E>) -> Vec<Var> {
        match *op {
            Op::Leaf => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::ConcatChannels(a, b)
            | Op::MatMul(a, b) => vec![a, b],
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::Sigmoid(a)
            | Op::Gelu(a)
            | Op::AbsSum(a)
            | Op::SquareMean(a)
            | Op::SumAll(a)
            | Op::Reshape(a)
            | Op::Transpose(a)
            | Op::SliceCols { x: a, .. }
            | Op::Softmax { x: a, .. }
            | Op::L2NormCols(a)
            | Op::PixelUnshuffle { x: a, .. }
            | Op::PixelShuffle { x: a, .. }
            | Op::GlobalAvgPool(a)
            | Op::Luma(a) => vec![a],
            Op::MulScalarVar { x, s } => vec![x, s],
            Op::MulChannels { x, g } => vec![x, g],
            Op::LayerNorm { x, gamma, beta } => vec![x, gamma, beta],
            Op::Conv2d { x, w, b, .. } | Op::DepthwiseConv2d { x, w, b, .. } => vec![x, w, b],
        }
    }

    fn check_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.nodes[a.0].t.shape != self.nodes[b.0].t.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.nodes[a.0].t.shape.clone(),
                rhs: self.nodes[b.0].t.shape.clone(),
            });
        }
        Ok(())
    }

    // ---- elementwise ----------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("add", a, b)?;
        let data = zip_map(self.data(a), self.data(b), |x, y| x + y);
        self.push(self.shape(a).to_vec(), data, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("sub", a, b)?;
        let data = zip_map(self.data(a), self.data(b), |x, y| x - y);
        self.push(self.shape(a).to_vec(), data, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("mul", a, b)?;
        let data = zip_map(self.data(a), self.data(b), |x, y| x * y);
        self.push(self.shape(a).to_vec(), data, Op::Mul(a, b), "mul")
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("div", a, b)?;
        let data = zip_map(self.data(a), self.data(b), |x, y| x / y);
        self.push(self.shape(a).to_vec(), data, Op::Div(a, b), "div")
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        let data = self.data(a).iter().map(|&x| -x).collect();
        self.push(self.shape(a).to_vec(), data, Op::Neg(a), "neg")
    }

    pub fn scale(&mut self, a: Var, k: E) -> Result<Var> {
        let data = self.data(a).iter().map(|&x| x * k).collect();
        self.push(self.shape(a).to_vec(), data, Op::Scale(a, k), "scale")
    }

    pub fn add_scalar(&mut self, a: Var, k: E) -> Result<Var> {
        let data = self.data(a).iter().map(|&x| x + k).collect();
        self.push(self.shape(a).to_vec(), data, Op::AddScalar(a, k), "add_scalar")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let data = self
            .data(a)
            .iter()
            .map(|&x| E::ONE / (E::ONE + (-x).exp()))
            .collect();
        self.push(self.shape(a).to_vec(), data, Op::Sigmoid(a), "sigmoid")
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let data = self.data(a).iter().map(|&x| gelu_val(x)).collect();
        self.push(self.shape(a).to_vec(), data, Op::Gelu(a), "gelu")
    }

    /// Multiply by a scalar variable (shape `[1]`).
    pub fn mul_scalar_var(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.nodes[s.0].t.numel() != 1 {
            return Err(Error::invalid("mul_scalar_var", "scale must be a scalar"));
        }
        let sv = self.data(s)[0];
        let data = self.data(x).iter().map(|&v| v * sv).collect();
        self.push(
            self.shape(x).to_vec(),
            data,
            Op::MulScalarVar { x, s },
            "mul_scalar_var",
        )
    }

    /// Broadcast-multiply the channel axis (last extent) by a vector `g`.
    pub fn mul_channels(&mut self, x: Var, g: Var) -> Result<Var> {
        let c = *self.shape(x).last().unwrap_or(&0);
        if self.shape(g) != [c] {
            return Err(Error::ShapeMismatch {
                op: "mul_channels",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(g).to_vec(),
            });
        }
        let gd = self.data(g);
        let data = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v * gd[i % c])
            .collect();
        self.push(self.shape(x).to_vec(), data, Op::MulChannels { x, g }, "mul_channels")
    }

    // ---- reductions ------------------------------------------------------

    /// Sum of absolute values (L1 norm), scalar output. Subgradient 0 at 0.
    pub fn abs_sum(&mut self, a: Var) -> Result<Var> {
        let mut s = E::ZERO;
        for &v in self.data(a) {
            s += v.abs();
        }
        self.push(vec![1], vec![s], Op::AbsSum(a), "abs_sum")
    }

    /// Mean of squared values, scalar output.
    pub fn square_mean(&mut self, a: Var) -> Result<Var> {
        let n = self.nodes[a.0].t.numel();
        let mut s = E::ZERO;
        for &v in self.data(a) {
            s += v * v;
        }
        let m = s / E::from_f64(n as f64);
        self.push(vec![1], vec![m], Op::SquareMean(a), "square_mean")
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let mut s = E::ZERO;
        for &v in self.data(a) {
            s += v;
        }
        self.push(vec![1], vec![s], Op::SumAll(a), "sum_all")
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.nodes[a.0].t.numel();
        let s = self.sum_all(a)?;
        self.scale(s, E::ONE / E::from_f64(n as f64))
    }

    // ---- shape ops -------------------------------------------------------

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != self.nodes[a.0].t.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape,
            });
        }
        let data = self.data(a).to_vec();
        self.push(shape, data, Op::Reshape(a), "reshape")
    }

    /// 2-d matrix transpose.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let [m, n] = two_dims("transpose", self.shape(a))?;
        let src = self.data(a);
        let mut data = vec![E::ZERO; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        self.push(vec![n, m], data, Op::Transpose(a), "transpose")
    }

    /// Columns `[start, start+width)` of a 2-d matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let [m, n] = two_dims("slice_cols", self.shape(a))?;
        if start + width > n {
            return Err(Error::invalid("slice_cols", "column range out of bounds"));
        }
        let src = self.data(a);
        let mut data = Vec::with_capacity(m * width);
        for i in 0..m {
            data.extend_from_slice(&src[i * n + start..i * n + start + width]);
        }
        self.push(vec![m, width], data, Op::SliceCols { x: a, start }, "slice_cols")
    }

    /// Concatenate along the last (channel) axis; leading extents must match.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len()
            || sa.is_empty()
            || sa[..sa.len() - 1] != sb[..sb.len() - 1]
        {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                lhs: sa,
                rhs: sb,
            });
        }
        let (ca, cb) = (*sa.last().unwrap(), *sb.last().unwrap());
        let rows: usize = sa[..sa.len() - 1].iter().product();
        let (da, db) = (self.data(a), self.data(b));
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(&da[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&db[r * cb..(r + 1) * cb]);
        }
        let mut shape = sa.clone();
        *shape.last_mut().unwrap() = ca + cb;
        self.push(shape, data, Op::ConcatChannels(a, b), "concat_channels")
    }

    // ---- linear algebra ---------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let [m, k] = two_dims("matmul", self.shape(a))?;
        let [k2, n] = two_dims("matmul", self.shape(b))?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data = matmul_raw(self.data(a), self.data(b), m, k, n);
        self.push(vec![m, n], data, Op::MatMul(a, b), "matmul")
    }

    /// L2-normalize each column of a 2-d matrix: `y[:,j] = x[:,j] / sqrt(sum x[:,j]^2 + eps)`.
    pub fn l2_normalize_cols(&mut self, a: Var) -> Result<Var> {
        let [m, n] = two_dims("l2_normalize_cols", self.shape(a))?;
        let src = self.data(a);
        let eps = E::from_f64(L2_NORM_EPS);
        let mut inv = vec![E::ZERO; n];
        for j in 0..n {
            let mut s = E::ZERO;
            for i in 0..m {
                let v = src[i * n + j];
                s += v * v;
            }
            inv[j] = E::ONE / (s + eps).sqrt();
        }
        let mut data = vec![E::ZERO; m * n];
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] = src[i * n + j] * inv[j];
            }
        }
        self.push(vec![m, n], data, Op::L2NormCols(a), "l2_normalize_cols")
    }

    // ---- nn ops ------------------------------------------------------------

    /// Numerically stable softmax along `axis`; every slice sums to one.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::invalid("softmax", "axis out of range"));
        }
        if !self.nodes[a.0].t.all_finite() {
            return Err(Error::NonFinite { op: "softmax" });
        }
        let src = self.data(a);
        let axis_len = shape[axis];
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = vec![E::ZERO; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * axis_len * inner + j * inner + i;
                let mut mx = src[at(0)];
                for j in 1..axis_len {
                    mx = mx.maxv(src[at(j)]);
                }
                let mut sum = E::ZERO;
                for j in 0..axis_len {
                    let e = (src[at(j)] - mx).exp();
                    data[at(j)] = e;
                    sum += e;
                }
                for j in 0..axis_len {
                    data[at(j)] /= sum;
                }
            }
        }
        self.push(shape, data, Op::Softmax { x: a, axis }, "softmax")
    }

    /// Layer normalization over the channel (last) axis per position,
    /// with affine parameters `gamma`/`beta` of shape `[c]`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = *shape.last().ok_or_else(|| Error::invalid("layer_norm", "rank-0 input"))?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: shape,
                rhs: self.shape(gamma).to_vec(),
            });
        }
        let eps = E::from_f64(LAYER_NORM_EPS);
        let cn = E::from_f64(c as f64);
        let (src, gd, bd) = (self.data(x), self.data(gamma), self.data(beta));
        let rows = src.len() / c;
        let mut data = vec![E::ZERO; src.len()];
        for r in 0..rows {
            let v = &src[r * c..(r + 1) * c];
            let mut mean = E::ZERO;
            for &x in v {
                mean += x;
            }
            mean /= cn;
            let mut var = E::ZERO;
            for &x in v {
                let d = x - mean;
                var += d * d;
            }
            var /= cn;
            let inv_std = E::ONE / (var + eps).sqrt();
            for j in 0..c {
                data[r * c + j] = (v[j] - mean) * inv_std * gd[j] + bd[j];
            }
        }
        self.push(
            self.shape(x).to_vec(),
            data,
            Op::LayerNorm { x, gamma, beta },
            "layer_norm",
        )
    }

    /// Cross-correlation with zero padding. `x`: h x w x c_in, `w`: k x k x
    /// c_in x c_out, `b`: c_out.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let [h, wd, cin] = three_dims("conv2d", self.shape(x))?;
        let ws = self.shape(w).to_vec();
        let (k, wcin, cout) = match ws.as_slice() {
            [k1, k2, ci, co] if k1 == k2 => (*k1, *ci, *co),
            _ => {
                return Err(Error::invalid(
                    "conv2d",
                    alloc::format!("weights must be k x k x c_in x c_out, got {ws:?}"),
                ))
            }
        };
        if wcin != cin {
            return Err(Error::ChannelMismatch {
                op: "conv2d",
                expected: wcin,
                got: cin,
            });
        }
        if self.shape(b) != [cout] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: self.shape(b).to_vec(),
                rhs: vec![cout],
            });
        }
        if k % 2 == 0 || stride == 0 || h + 2 * pad < k || wd + 2 * pad < k {
            return Err(Error::invalid("conv2d", "kernel must be odd and fit the padded input"));
        }
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let (xd, wdat, bd) = (self.data(x), self.data(w), self.data(b));
        let mut out = vec![E::ZERO; oh * ow * cout];
        for oy in 0..oh {
            for ox in 0..ow {
                let obase = (oy * ow + ox) * cout;
                out[obase..obase + cout].copy_from_slice(bd);
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= wd as isize {
                            continue;
                        }
                        let ibase = (iy as usize * wd + ix as usize) * cin;
                        let wbase = (ky * k + kx) * cin * cout;
                        for ci in 0..cin {
                            let xv = xd[ibase + ci];
                            let wrow = wbase + ci * cout;
                            let (acc, wsl) = (&mut out[obase..obase + cout], &wdat[wrow..wrow + cout]);
                            for co in 0..cout {
                                acc[co] += xv * wsl[co];
                            }
                        }
                    }
                }
            }
        }
        self.push(
            vec![oh, ow, cout],
            out,
            Op::Conv2d { x, w, b, stride, pad },
            "conv2d",
        )
    }

    /// Depthwise convolution: one k x k kernel per channel, no cross-channel
    /// mixing. `w`: k x k x c, `b`: c.
    pub fn depthwise_conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let [h, wd, c] = three_dims("depthwise_conv2d", self.shape(x))?;
        let ws = self.shape(w).to_vec();
        let k = match ws.as_slice() {
            [k1, k2, wc] if k1 == k2 && *wc == c => *k1,
            [_, _, wc] => {
                return Err(Error::ChannelMismatch {
                    op: "depthwise_conv2d",
                    expected: *wc,
                    got: c,
                })
            }
            _ => return Err(Error::invalid("depthwise_conv2d", "weights must be k x k x c")),
        };
        if self.shape(b) != [c] {
            return Err(Error::ShapeMismatch {
                op: "depthwise_conv2d",
                lhs: self.shape(b).to_vec(),
                rhs: vec![c],
            });
        }
        if k % 2 == 0 || stride == 0 || h + 2 * pad < k || wd + 2 * pad < k {
            return Err(Error::invalid(
                "depthwise_conv2d",
                "kernel must be odd and fit the padded input",
            ));
        }
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let (xd, wdat, bd) = (self.data(x), self.data(w), self.data(b));
        let mut out = vec![E::ZERO; oh * ow * c];
        for oy in 0..oh {
            for ox in 0..ow {
                let obase = (oy * ow + ox) * c;
                out[obase..obase + c].copy_from_slice(bd);
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= wd as isize {
                            continue;
                        }
                        let ibase = (iy as usize * wd + ix as usize) * c;
                        let wbase = (ky * k + kx) * c;
                        let (acc, wsl) = (&mut out[obase..obase + c], &wdat[wbase..wbase + c]);
                        for ch in 0..c {
                            acc[ch] += xd[ibase + ch] * wsl[ch];
                        }
                    }
                }
            }
        }
        self.push(
            vec![oh, ow, c],
            out,
            Op::DepthwiseConv2d { x, w, b, stride, pad },
            "depthwise_conv2d",
        )
    }

    /// Fold r x r spatial blocks into channels:
    /// `h x w x c -> (h/r) x (w/r) x (c r^2)`, with output channel
    /// `(dy*r + dx)*c + ci` holding input offset `(dy, dx)` of channel `ci`.
    pub fn pixel_unshuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let [h, w, c] = three_dims("pixel_unshuffle", self.shape(x))?;
        if r == 0 || h % r != 0 || w % r != 0 {
            return Err(Error::invalid(
                "pixel_unshuffle",
                alloc::format!("extents {h}x{w} not divisible by r={r}"),
            ));
        }
        let (oh, ow, oc) = (h / r, w / r, c * r * r);
        let src = self.data(x);
        let mut out = vec![E::ZERO; src.len()];
        for y in 0..oh {
            for xx in 0..ow {
                for dy in 0..r {
                    for dx in 0..r {
                        let sbase = ((y * r + dy) * w + (xx * r + dx)) * c;
                        let obase = (y * ow + xx) * oc + (dy * r + dx) * c;
                        out[obase..obase + c].copy_from_slice(&src[sbase..sbase + c]);
                    }
                }
            }
        }
        self.push(vec![oh, ow, oc], out, Op::PixelUnshuffle { x, r }, "pixel_unshuffle")
    }

    /// Exact inverse of [`Tape::pixel_unshuffle`].
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let [h, w, c] = three_dims("pixel_shuffle", self.shape(x))?;
        if r == 0 || c % (r * r) != 0 {
            return Err(Error::invalid(
                "pixel_shuffle",
                alloc::format!("channel extent {c} not divisible by r^2={}", r * r),
            ));
        }
        let (oh, ow, oc) = (h * r, w * r, c / (r * r));
        let src = self.data(x);
        let mut out = vec![E::ZERO; src.len()];
        for y in 0..h {
            for xx in 0..w {
                for dy in 0..r {
                    for dx in 0..r {
                        let sbase = (y * w + xx) * c + (dy * r + dx) * oc;
                        let obase = ((y * r + dy) * ow + (xx * r + dx)) * oc;
                        out[obase..obase + oc].copy_from_slice(&src[sbase..sbase + oc]);
                    }
                }
            }
        }
        self.push(vec![oh, ow, oc], out, Op::PixelShuffle { x, r }, "pixel_shuffle")
    }

    /// Per-channel spatial mean: `h x w x c -> [c]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [h, w, c] = three_dims("global_avg_pool", self.shape(x))?;
        let src = self.data(x);
        let inv = E::ONE / E::from_f64((h * w) as f64);
        let mut out = vec![E::ZERO; c];
        for p in 0..h * w {
            for ch in 0..c {
                out[ch] += src[p * c + ch];
            }
        }
        for v in out.iter_mut() {
            *v *= inv;
        }
        self.push(vec![c], out, Op::GlobalAvgPool(x), "global_avg_pool")
    }

    /// ITU-R 601 luma: `h x w x 3 -> h x w x 1`.
    pub fn luma(&mut self, x: Var) -> Result<Var> {
        let [h, w, c] = three_dims("luma", self.shape(x))?;
        if c != 3 {
            return Err(Error::ChannelMismatch {
                op: "luma",
                expected: 3,
                got: c,
            });
        }
        let wts = LUMA_WEIGHTS.map(E::from_f64);
        let src = self.data(x);
        let mut out = vec![E::ZERO; h * w];
        for p in 0..h * w {
            out[p] = src[3 * p] * wts[0] + src[3 * p + 1] * wts[1] + src[3 * p + 2] * wts[2];
        }
        self.push(vec![h, w, 1], out, Op::Luma(x), "luma")
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse sweep from a scalar loss. Adjoints of intermediate nodes are
    /// local to the call; gradients of `requires_grad` leaves accumulate into
    /// their `grad` field (call sites reset the tape between steps).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].t.numel() != 1 {
            return Err(Error::NotScalar {
                shape: self.shape(loss).to_vec(),
            });
        }
        let n = loss.0 + 1;
        let mut adj: Vec<Option<Vec<E>>> = vec![None; n];
        adj[loss.0] = Some(vec![E::ONE]);

        for i in (0..n).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].needs {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                if node.t.requires_grad {
                    match &mut node.t.grad {
                        Some(acc) => {
                            for (a, b) in acc.iter_mut().zip(&g) {
                                *a += *b;
                            }
                        }
                        None => node.t.grad = Some(g),
                    }
                }
                continue;
            }
            self.propagate(i, &g, &mut adj);
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs
    }

    fn propagate(&self, i: usize, g: &[E], adj: &mut [Option<Vec<E>>]) {
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc_with(adj, a, |dst| add_assign(dst, g));
                self.acc_with(adj, b, |dst| add_assign(dst, g));
            }
            Op::Sub(a, b) => {
                self.acc_with(adj, a, |dst| add_assign(dst, g));
                self.acc_with(adj, b, |dst| sub_assign(dst, g));
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.data(a), self.data(b));
                self.acc_with(adj, a, |dst| {
                    for ((d, &gv), &bv) in dst.iter_mut().zip(g).zip(db) {
                        *d += gv * bv;
                    }
                });
                self.acc_with(adj, b, |dst| {
                    for ((d, &gv), &av) in dst.iter_mut().zip(g).zip(da) {
                        *d += gv * av;
                    }
                });
            }
            Op::Div(a, b) => {
                let (da, db) = (self.data(a), self.data(b));
                self.acc_with(adj, a, |dst| {
                    for ((d, &gv), &bv) in dst.iter_mut().zip(g).zip(db) {
                        *d += gv / bv;
                    }
                });
                self.acc_with(adj, b, |dst| {
                    for (j, d) in dst.iter_mut().enumerate() {
                        *d -= g[j] * da[j] / (db[j] * db[j]);
                    }
                });
            }
            Op::Neg(a) => self.acc_with(adj, a, |dst| sub_assign(dst, g)),
            Op::Scale(a, k) => self.acc_with(adj, a, |dst| {
                for (d, &gv) in dst.iter_mut().zip(g) {
                    *d += gv * k;
                }
            }),
            Op::AddScalar(a, _) => self.acc_with(adj, a, |dst| add_assign(dst, g)),
            Op::Sigmoid(a) => {
                let out = self.data_of(i);
                self.acc_with(adj, a, |dst| {
                    for ((d, &gv), &s) in dst.iter_mut().zip(g).zip(out) {
                        *d += gv * s * (E::ONE - s);
                    }
                });
            }
            Op::Gelu(a) => {
                let xin = self.data(a);
                self.acc_with(adj, a, |dst| {
                    for ((d, &gv), &x) in dst.iter_mut().zip(g).zip(xin) {
                        *d += gv * gelu_grad(x);
                    }
                });
            }
            Op::AbsSum(a) => {
                let xin = self.data(a);
                let gv = g[0];
                self.acc_with(adj, a, |dst| {
                    for (d, &x) in dst.iter_mut().zip(xin) {
                        if x > E::ZERO {
                            *d += gv;
                        } else if x < E::ZERO {
                            *d -= gv;
                        }
                    }
                });
            }
            Op::SquareMean(a) => {
                let xin = self.data(a);
                let k = g[0] * E::from_f64(2.0 / xin.len() as f64);
                self.acc_with(adj, a, |dst| {
                    for (d, &x) in dst.iter_mut().zip(xin) {
                        *d += k * x;
                    }
                });
            }
            Op::SumAll(a) => {
                let gv = g[0];
                self.acc_with(adj, a, |dst| {
                    for d in dst.iter_mut() {
                        *d += gv;
                    }
                });
            }
            Op::Reshape(a) => self.acc_with(adj, a, |dst| add_assign(dst, g)),
            Op::Transpose(a) => {
                let [n, m] = [self.shape_of(i)[0], self.shape_of(i)[1]];
                self.acc_with(adj, a, |dst| {
                    // output is n x m; input m x n
                    for r in 0..n {
                        for c in 0..m {
                            dst[c * n + r] += g[r * m + c];
                        }
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let ncols_in = self.shape(x)[1];
                let width = self.shape_of(i)[1];
                let rows = self.shape_of(i)[0];
                self.acc_with(adj, x, |dst| {
                    for r in 0..rows {
                        for c in 0..width {
                            dst[r * ncols_in + start + c] += g[r * width + c];
                        }
                    }
                });
            }
            Op::ConcatChannels(a, b) => {
                let ca = *self.shape(a).last().unwrap();
                let cb = *self.shape(b).last().unwrap();
                let rows = self.data(a).len() / ca;
                self.acc_with(adj, a, |dst| {
                    for r in 0..rows {
                        for c in 0..ca {
                            dst[r * ca + c] += g[r * (ca + cb) + c];
                        }
                    }
                });
                self.acc_with(adj, b, |dst| {
                    for r in 0..rows {
                        for c in 0..cb {
                            dst[r * cb + c] += g[r * (ca + cb) + ca + c];
                        }
                    }
                });
            }
            Op::MatMul(a, b) => {
                let [m, k] = [self.shape(a)[0], self.shape(a)[1]];
                let n = self.shape(b)[1];
                let (da, db) = (self.data(a), self.data(b));
                if self.needs(a) {
                    // dA = G . B^T
                    let bt = transpose_raw(db, k, n);
                    let contrib = matmul_raw(g, &bt, m, n, k);
                    self.acc_with(adj, a, |dst| add_assign(dst, &contrib));
                }
                if self.needs(b) {
                    // dB = A^T . G
                    let at = transpose_raw(da, m, k);
                    let contrib = matmul_raw(&at, g, k, m, n);
                    self.acc_with(adj, b, |dst| add_assign(dst, &contrib));
                }
            }
            Op::MulScalarVar { x, s } => {
                let sv = self.data(s)[0];
                let xd = self.data(x);
                self.acc_with(adj, x, |dst| {
                    for (d, &gv) in dst.iter_mut().zip(g) {
                        *d += gv * sv;
                    }
                });
                if self.needs(s) {
                    let mut dot = E::ZERO;
                    for (&gv, &xv) in g.iter().zip(xd) {
                        dot += gv * xv;
                    }
                    self.acc_with(adj, s, |dst| dst[0] += dot);
                }
            }
            Op::MulChannels { x, g: gate } => {
                let c = self.shape(gate)[0];
                let (xd, gd) = (self.data(x), self.data(gate));
                self.acc_with(adj, x, |dst| {
                    for (j, d) in dst.iter_mut().enumerate() {
                        *d += g[j] * gd[j % c];
                    }
                });
                if self.needs(gate) {
                    self.acc_with(adj, gate, |dst| {
                        for (j, &gv) in g.iter().enumerate() {
                            dst[j % c] += gv * xd[j];
                        }
                    });
                }
            }
            Op::Softmax { x, axis } => {
                let out = self.data_of(i);
                let shape = self.shape_of(i);
                let axis_len = shape[axis];
                let outer: usize = shape[..axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                self.acc_with(adj, x, |dst| {
                    for o in 0..outer {
                        for ii in 0..inner {
                            let at = |j: usize| o * axis_len * inner + j * inner + ii;
                            let mut dot = E::ZERO;
                            for j in 0..axis_len {
                                dot += g[at(j)] * out[at(j)];
                            }
                            for j in 0..axis_len {
                                dst[at(j)] += out[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                });
            }
            Op::LayerNorm { x, gamma, beta } => {
                let c = self.shape(gamma)[0];
                let (xd, gd) = (self.data(x), self.data(gamma));
                let rows = xd.len() / c;
                let eps = E::from_f64(LAYER_NORM_EPS);
                let cn = E::from_f64(c as f64);
                // precompute per-row xhat and the two reduction terms
                let needs_x = self.needs(x);
                let needs_g = self.needs(gamma);
                let needs_b = self.needs(beta);
                let mut dx = if needs_x { vec![E::ZERO; xd.len()] } else { Vec::new() };
                let mut dgamma = if needs_g { vec![E::ZERO; c] } else { Vec::new() };
                let mut dbeta = if needs_b { vec![E::ZERO; c] } else { Vec::new() };
                let mut xhat = vec![E::ZERO; c];
                for r in 0..rows {
                    let v = &xd[r * c..(r + 1) * c];
                    let gr = &g[r * c..(r + 1) * c];
                    let mut mean = E::ZERO;
                    for &x in v {
                        mean += x;
                    }
                    mean /= cn;
                    let mut var = E::ZERO;
                    for &x in v {
                        let d = x - mean;
                        var += d * d;
                    }
                    var /= cn;
                    let inv_std = E::ONE / (var + eps).sqrt();
                    for j in 0..c {
                        xhat[j] = (v[j] - mean) * inv_std;
                    }
                    if needs_g {
                        for j in 0..c {
                            dgamma[j] += gr[j] * xhat[j];
                        }
                    }
                    if needs_b {
                        for j in 0..c {
                            dbeta[j] += gr[j];
                        }
                    }
                    if needs_x {
                        let mut sum_dxhat = E::ZERO;
                        let mut sum_dxhat_xhat = E::ZERO;
                        for j in 0..c {
                            let dxh = gr[j] * gd[j];
                            sum_dxhat += dxh;
                            sum_dxhat_xhat += dxh * xhat[j];
                        }
                        for j in 0..c {
                            let dxh = gr[j] * gd[j];
                            dx[r * c + j] +=
                                inv_std / cn * (cn * dxh - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                        }
                    }
                }
                if needs_x {
                    self.acc_with(adj, x, |dst| add_assign(dst, &dx));
                }
                if needs_g {
                    self.acc_with(adj, gamma, |dst| add_assign(dst, &dgamma));
                }
                if needs_b {
                    self.acc_with(adj, beta, |dst| add_assign(dst, &dbeta));
                }
            }
            Op::L2NormCols(a) => {
                let [m, n] = [self.shape(a)[0], self.shape(a)[1]];
                let xd = self.data(a);
                let eps = E::from_f64(L2_NORM_EPS);
                self.acc_with(adj, a, |dst| {
                    for j in 0..n {
                        let mut s = E::ZERO;
                        let mut dot = E::ZERO;
                        for i2 in 0..m {
                            let v = xd[i2 * n + j];
                            s += v * v;
                            dot += g[i2 * n + j] * v;
                        }
                        let r = E::ONE / (s + eps).sqrt();
                        let r3 = r * r * r;
                        for i2 in 0..m {
                            dst[i2 * n + j] += r * g[i2 * n + j] - r3 * xd[i2 * n + j] * dot;
                        }
                    }
                });
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                self.conv2d_backward(i, x, w, b, stride, pad, g, adj);
            }
            Op::DepthwiseConv2d { x, w, b, stride, pad } => {
                self.depthwise_backward(i, x, w, b, stride, pad, g, adj);
            }
            Op::PixelUnshuffle { x, r } => {
                let [oh, ow, oc] = [self.shape_of(i)[0], self.shape_of(i)[1], self.shape_of(i)[2]];
                let c = oc / (r * r);
                let w = ow * r;
                self.acc_with(adj, x, |dst| {
                    for y in 0..oh {
                        for xx in 0..ow {
                            for dy in 0..r {
                                for dx in 0..r {
                                    let sbase = ((y * r + dy) * w + (xx * r + dx)) * c;
                                    let obase = (y * ow + xx) * oc + (dy * r + dx) * c;
                                    for ch in 0..c {
                                        dst[sbase + ch] += g[obase + ch];
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::PixelShuffle { x, r } => {
                let [h, w, c] = [self.shape(x)[0], self.shape(x)[1], self.shape(x)[2]];
                let oc = c / (r * r);
                let ow = w * r;
                self.acc_with(adj, x, |dst| {
                    for y in 0..h {
                        for xx in 0..w {
                            for dy in 0..r {
                                for dx in 0..r {
                                    let sbase = (y * w + xx) * c + (dy * r + dx) * oc;
                                    let obase = ((y * r + dy) * ow + (xx * r + dx)) * oc;
                                    for ch in 0..oc {
                                        dst[sbase + ch] += g[obase + ch];
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::GlobalAvgPool(x) => {
                let [h, w, c] = [self.shape(x)[0], self.shape(x)[1], self.shape(x)[2]];
                let inv = E::ONE / E::from_f64((h * w) as f64);
                self.acc_with(adj, x, |dst| {
                    for p in 0..h * w {
                        for ch in 0..c {
                            dst[p * c + ch] += g[ch] * inv;
                        }
                    }
                });
            }
            Op::Luma(x) => {
                let wts = LUMA_WEIGHTS.map(E::from_f64);
                self.acc_with(adj, x, |dst| {
                    for (p, &gv) in g.iter().enumerate() {
                        dst[3 * p] += gv * wts[0];
                        dst[3 * p + 1] += gv * wts[1];
                        dst[3 * p + 2] += gv * wts[2];
                    }
                });
            }
        }
    }

    fn conv2d_backward(
        &self,
        out_idx: usize,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
        g: &[E],
        adj: &mut [Option<Vec<E>>],
    ) {
        let [h, wd, cin] = [self.shape(x)[0], self.shape(x)[1], self.shape(x)[2]];
        let k = self.shape(w)[0];
        let cout = self.shape(w)[3];
        let [oh, ow] = [self.shape_of(out_idx)[0], self.shape_of(out_idx)[1]];
        let (xd, wdat) = (self.data(x), self.data(w));
        let needs_x = self.needs(x);
        let needs_w = self.needs(w);
        let needs_b = self.needs(b);

        let mut dx = if needs_x { vec![E::ZERO; xd.len()] } else { Vec::new() };
        let mut dw = if needs_w { vec![E::ZERO; wdat.len()] } else { Vec::new() };
        let mut db = if needs_b { vec![E::ZERO; cout] } else { Vec::new() };

        for oy in 0..oh {
            for ox in 0..ow {
                let gsl = &g[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
                if needs_b {
                    add_assign(&mut db, gsl);
                }
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= wd as isize {
                            continue;
                        }
                        let ibase = (iy as usize * wd + ix as usize) * cin;
                        let wbase = (ky * k + kx) * cin * cout;
                        for ci in 0..cin {
                            let wrow = wbase + ci * cout;
                            if needs_x {
                                let wsl = &wdat[wrow..wrow + cout];
                                let mut s = E::ZERO;
                                for co in 0..cout {
                                    s += gsl[co] * wsl[co];
                                }
                                dx[ibase + ci] += s;
                            }
                            if needs_w {
                                let xv = xd[ibase + ci];
                                let dsl = &mut dw[wrow..wrow + cout];
                                for co in 0..cout {
                                    dsl[co] += xv * gsl[co];
                                }
                            }
                        }
                    }
                }
            }
        }
        if needs_x {
            self.acc_with(adj, x, |dst| add_assign(dst, &dx));
        }
        if needs_w {
            self.acc_with(adj, w, |dst| add_assign(dst, &dw));
        }
        if needs_b {
            self.acc_with(adj, b, |dst| add_assign(dst, &db));
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn depthwise_backward(
        &self,
        out_idx: usize,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
        g: &[E],
        adj: &mut [Option<Vec<E>>],
    ) {
        let [h, wd, c] = [self.shape(x)[0], self.shape(x)[1], self.shape(x)[2]];
        let k = self.shape(w)[0];
        let [oh, ow] = [self.shape_of(out_idx)[0], self.shape_of(out_idx)[1]];
        let (xd, wdat) = (self.data(x), self.data(w));
        let needs_x = self.needs(x);
        let needs_w = self.needs(w);
        let needs_b = self.needs(b);

        let mut dx = if needs_x { vec![E::ZERO; xd.len()] } else { Vec::new() };
        let mut dw = if needs_w { vec![E::ZERO; wdat.len()] } else { Vec::new() };
        let mut db = if needs_b { vec![E::ZERO; c] } else { Vec::new() };

        for oy in 0..oh {
            for ox in 0..ow {
                let gsl = &g[(oy * ow + ox) * c..(oy * ow + ox + 1) * c];
                if needs_b {
                    add_assign(&mut db, gsl);
                }
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= wd as isize {
                            continue;
                        }
                        let ibase = (iy as usize * wd + ix as usize) * c;
                        let wbase = (ky * k + kx) * c;
                        if needs_x {
                            for ch in 0..c {
                                dx[ibase + ch] += gsl[ch] * wdat[wbase + ch];
                            }
                        }
                        if needs_w {
                            for ch in 0..c {
                                dw[wbase + ch] += gsl[ch] * xd[ibase + ch];
                            }
                        }
                    }
                }
            }
        }
        if needs_x {
            self.acc_with(adj, x, |dst| add_assign(dst, &dx));
        }
        if needs_w {
            self.acc_with(adj, w, |dst| add_assign(dst, &dw));
        }
        if needs_b {
            self.acc_with(adj, b, |dst| add_assign(dst, &db));
        }
    }

    fn shape_of(&self, i: usize) -> &[usize] {
        &self.nodes[i].t.shape
    }

    fn data_of(&self, i: usize) -> &[E] {
        &self.nodes[i].t.data
    }

    /// Accumulate a contribution into the adjoint slot of `v`, if it
    /// participates in the gradient.
    fn acc_with(&self, adj: &mut [Option<Vec<E>>], v: Var, f: impl FnOnce(&mut [E])) {
        if !self.nodes[v.0].needs {
            return;
        }
        let slot = &mut adj[v.0];
        if slot.is_none() {
            *slot = Some(vec![E::ZERO; self.nodes[v.0].t.numel()]);
        }
        f(slot.as_mut().unwrap());
    }
}

// ---- raw kernels -----------------------------------------------------------

fn zip_map<E: Real>(a: &[E], b: &[E], f: impl Fn(E, E) -> E) -> Vec<E> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn add_assign<E: Real>(dst: &mut [E], src: &[E]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn sub_assign<E: Real>(dst: &mut [E], src: &[E]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d -= s;
    }
}

pub(crate) fn matmul_raw<E: Real>(a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    let mut out = vec![E::ZERO; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

pub(crate) fn transpose_raw<E: Real>(a: &[E], m: usize, n: usize) -> Vec<E> {
    let mut out = vec![E::ZERO; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

fn gelu_val<E: Real>(x: E) -> E {
    // tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
    let c = E::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let k = E::from_f64(0.044715);
    let half = E::from_f64(0.5);
    half * x * (E::ONE + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<E: Real>(x: E) -> E {
    let c = E::from_f64(0.797_884_560_802_865_4);
    let k = E::from_f64(0.044715);
    let half = E::from_f64(0.5);
    let three = E::from_f64(3.0);
    let inner = c * (x + k * x * x * x);
    let t = inner.tanh();
    let sech2 = E::ONE - t * t;
    half * (E::ONE + t) + half * x * sech2 * c * (E::ONE + three * k * x * x)
}

fn two_dims(op: &'static str, shape: &[usize]) -> Result<[usize; 2]> {
    match shape {
        [m, n] => Ok([*m, *n]),
        _ => Err(Error::invalid(
            op,
            alloc::format!("expected rank-2 tensor, got {shape:?}"),
        )),
    }
}

fn three_dims(op: &'static str, shape: &[usize]) -> Result<[usize; 3]> {
    match shape {
        [h, w, c] => Ok([*h, *w, *c]),
        _ => Err(Error::invalid(
            op,
            alloc::format!("expected rank-3 tensor, got {shape:?}"),
        )),
    }
}
