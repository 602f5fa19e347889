//! Dense row-major tensor value.
//!
//! Image layout is height x width x channels, with an optional leading batch
//! extent where needed. The tensor doubles as the node payload of the
//! autodiff tape: `requires_grad` marks leaves whose adjoints are wanted and
//! `grad` is filled by [`crate::tape::Tape::backward`].

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E> {
    pub shape: Vec<usize>,
    pub data: Vec<E>,
    pub requires_grad: bool,
    pub grad: Option<Vec<E>>,
}

impl<E: Real> Tensor<E> {
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<E>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::invalid(
                "tensor",
                alloc::format!("data length {} does not match shape {:?}", data.len(), shape),
            ));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![E::ZERO; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn filled(shape: impl Into<Vec<usize>>, value: E) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
            requires_grad: false,
            grad: None,
        }
    }

    /// Uniform values in `[lo, hi)`.
    pub fn uniform(shape: impl Into<Vec<usize>>, lo: f64, hi: f64, rng: &mut Rng) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| E::from_f64(rng.range_f64(lo, hi)))
            .collect();
        Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    /// Height/width/channels of a rank-3 image tensor.
    pub fn hwc(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            [h, w, c] => Ok((*h, *w, *c)),
            _ => Err(Error::invalid(
                "tensor",
                alloc::format!("expected rank-3 h x w x c tensor, got {:?}", self.shape),
            )),
        }
    }

    #[inline]
    pub fn at3(&self, y: usize, x: usize, c: usize) -> E {
        let (_, w, ch) = (self.shape[0], self.shape[1], self.shape[2]);
        self.data[(y * w + x) * ch + c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
            grad: None,
        }
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.clamp01())
    }

    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.to_f64()).collect(),
            requires_grad: false,
            grad: None,
        }
    }

    pub fn from_f64_tensor(src: &Tensor<f64>) -> Self {
        Tensor {
            shape: src.shape.clone(),
            data: src.data.iter().map(|&v| E::from_f64(v)).collect(),
            requires_grad: false,
            grad: None,
        }
    }
}

/// Reflect-pad a rank-3 image on the bottom/right so both spatial extents
/// become multiples of `m`. Reflection excludes the edge sample, so each
/// padded extent must satisfy `pad < extent`.
pub fn reflect_pad_to_multiple<E: Real>(x: &Tensor<E>, m: usize) -> Result<Tensor<E>> {
    let (h, w, c) = x.hwc()?;
    let ph = (m - h % m) % m;
    let pw = (m - w % m) % m;
    if ph >= h || pw >= w {
        return Err(Error::invalid(
            "reflect_pad",
            alloc::format!("image {h}x{w} too small to pad to a multiple of {m}"),
        ));
    }
    if ph == 0 && pw == 0 {
        return Ok(x.clone());
    }
    let (nh, nw) = (h + ph, w + pw);
    let mut out = Tensor::zeros([nh, nw, c]);
    for y in 0..nh {
        let sy = if y < h { y } else { 2 * h - 2 - y };
        for xx in 0..nw {
            let sx = if xx < w { xx } else { 2 * w - 2 - xx };
            for ch in 0..c {
                out.data[(y * nw + xx) * c + ch] = x.data[(sy * w + sx) * c + ch];
            }
        }
    }
    Ok(out)
}

/// Crop the top-left `h x w` window of a rank-3 image.
pub fn crop<E: Real>(x: &Tensor<E>, h: usize, w: usize) -> Result<Tensor<E>> {
    let (sh, sw, c) = x.hwc()?;
    if h > sh || w > sw {
        return Err(Error::invalid("crop", "crop window exceeds image"));
    }
    let mut out = Tensor::zeros([h, w, c]);
    for y in 0..h {
        let src = (y * sw) * c;
        let dst = (y * w) * c;
        out.data[dst..dst + w * c].copy_from_slice(&x.data[src..src + w * c]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f32>::from_vec([2, 2], vec![1.0; 3]).is_err());
        let t = Tensor::<f32>::from_vec([2, 2], vec![1.0; 4]).unwrap();
        assert_eq!(t.numel(), 4);
    }

    #[test]
    fn reflect_pad_matches_hand_case() {
        // 3x3 single channel padded to 4x4: row/col 3 reflect row/col 1.
        let x = Tensor::<f32>::from_vec(
            [3, 3, 1],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        )
        .unwrap();
        let p = reflect_pad_to_multiple(&x, 4).unwrap();
        assert_eq!(p.shape, vec![4, 4, 1]);
        assert_eq!(p.at3(3, 0, 0), 4.0);
        assert_eq!(p.at3(0, 3, 0), 2.0);
        assert_eq!(p.at3(3, 3, 0), 5.0);
        // crop returns the original
        let back = crop(&p, 3, 3).unwrap();
        assert_eq!(back.data, x.data);
    }

    #[test]
    fn pad_rejects_tiny_images() {
        let x = Tensor::<f32>::zeros([3, 3, 1]);
        assert!(reflect_pad_to_multiple(&x, 8).is_err());
    }
}
