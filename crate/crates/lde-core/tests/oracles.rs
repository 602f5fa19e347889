//! Independent oracles: direct-summation convolutions, a scalar per-window
//! SSIM, and statistical checks, each implemented from the definition with
//! no shared code with the tape.

use lde_core::loss::{ssim_value, SsimParams};

mod common;
use common::ssim_naive;
use lde_core::rng::Rng;
use lde_core::tape::Tape;
use lde_core::tensor::Tensor;

fn rand(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Tensor<f64> {
    Tensor::uniform(shape.to_vec(), lo, hi, rng)
}

/// Quadruple-loop cross-correlation straight from the definition.
fn conv2d_naive(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: usize,
    pad: usize,
) -> Tensor<f64> {
    let (h, wd, cin) = (x.shape[0], x.shape[1], x.shape[2]);
    let (k, cout) = (w.shape[0], w.shape[3]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros([oh, ow, cout]);
    for oy in 0..oh {
        for ox in 0..ow {
            for co in 0..cout {
                let mut acc = b.data[co];
                for ky in 0..k {
                    for kx in 0..k {
                        for ci in 0..cin {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            let xv = x.data[(iy as usize * wd + ix as usize) * cin + ci];
                            let wv = w.data[((ky * k + kx) * cin + ci) * cout + co];
                            acc += xv * wv;
                        }
                    }
                }
                out.data[(oy * ow + ox) * cout + co] = acc;
            }
        }
    }
    out
}

fn depthwise_naive(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: usize,
    pad: usize,
) -> Tensor<f64> {
    let (h, wd, c) = (x.shape[0], x.shape[1], x.shape[2]);
    let k = w.shape[0];
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros([oh, ow, c]);
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut acc = b.data[ch];
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                            continue;
                        }
                        acc += x.data[(iy as usize * wd + ix as usize) * c + ch]
                            * w.data[(ky * k + kx) * c + ch];
                    }
                }
                out.data[(oy * ow + ox) * c + ch] = acc;
            }
        }
    }
    out
}

#[test]
fn conv2d_matches_naive_oracle() {
    let mut rng = Rng::new(7);
    for (stride, pad) in [(1, 1), (1, 0), (2, 1)] {
        let x = rand(&[5, 5, 2], -1.0, 1.0, &mut rng);
        let w = rand(&[3, 3, 2, 3], -1.0, 1.0, &mut rng);
        let b = rand(&[3], -0.5, 0.5, &mut rng);
        let expect = conv2d_naive(&x, &w, &b, stride, pad);

        let mut t = Tape::<f64>::new();
        let (xv, wv, bv) = (t.leaf(x), t.leaf(w), t.leaf(b));
        let y = t.conv2d(xv, wv, bv, stride, pad).unwrap();
        assert_eq!(t.shape(y), expect.shape.as_slice());
        for (a, e) in t.value(y).data.iter().zip(&expect.data) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e} (stride {stride} pad {pad})");
        }
    }
}

#[test]
fn conv2d_matches_naive_oracle_larger() {
    let mut rng = Rng::new(8);
    let x = rand(&[8, 8, 4], -1.0, 1.0, &mut rng);
    let w = rand(&[3, 3, 4, 4], -1.0, 1.0, &mut rng);
    let b = rand(&[4], -0.5, 0.5, &mut rng);
    let expect = conv2d_naive(&x, &w, &b, 1, 1);
    let mut t = Tape::<f64>::new();
    let (xv, wv, bv) = (t.leaf(x), t.leaf(w), t.leaf(b));
    let y = t.conv2d(xv, wv, bv, 1, 1).unwrap();
    for (a, e) in t.value(y).data.iter().zip(&expect.data) {
        assert!((a - e).abs() < 1e-12);
    }
}

#[test]
fn depthwise_matches_naive_oracle() {
    let mut rng = Rng::new(9);
    let x = rand(&[6, 6, 3], -1.0, 1.0, &mut rng);
    let w = rand(&[3, 3, 3], -1.0, 1.0, &mut rng);
    let b = rand(&[3], -0.5, 0.5, &mut rng);
    let expect = depthwise_naive(&x, &w, &b, 1, 1);

    let mut t = Tape::<f64>::new();
    let (xv, wv, bv) = (t.leaf(x), t.leaf(w), t.leaf(b));
    let y = t.depthwise_conv2d(xv, wv, bv, 1, 1).unwrap();
    for (a, e) in t.value(y).data.iter().zip(&expect.data) {
        assert!((a - e).abs() < 1e-12);
    }
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = Rng::new(10);
    let a = rand(&[4, 5], -1.0, 1.0, &mut rng);
    let b = rand(&[5, 3], -1.0, 1.0, &mut rng);
    let mut expect = vec![0.0f64; 4 * 3];
    for i in 0..4 {
        for j in 0..3 {
            let mut s = 0.0;
            for p in 0..5 {
                s += a.data[i * 5 + p] * b.data[p * 3 + j];
            }
            expect[i * 3 + j] = s;
        }
    }
    let mut t = Tape::<f64>::new();
    let (av, bv) = (t.leaf(a), t.leaf(b));
    let y = t.matmul(av, bv).unwrap();
    for (got, e) in t.value(y).data.iter().zip(&expect) {
        assert!((got - e).abs() < 1e-12);
    }
}

#[test]
fn layer_norm_statistical_oracle() {
    let mut rng = Rng::new(11);
    let c = 16;
    let x = rand(&[6, 6, c], -2.0, 3.0, &mut rng);
    let mut t = Tape::<f64>::new();
    let xv = t.leaf(x);
    let gamma = t.leaf(Tensor::filled([c], 1.0));
    let beta = t.leaf(Tensor::zeros([c]));
    let y = t.layer_norm(xv, gamma, beta).unwrap();
    let d = &t.value(y).data;
    for pos in 0..36 {
        let v = &d[pos * c..(pos + 1) * c];
        let mean: f64 = v.iter().sum::<f64>() / c as f64;
        let var: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
        assert!(mean.abs() < 1e-6, "pos {pos} mean {mean}");
        assert!((var - 1.0).abs() < 1e-3, "pos {pos} var {var}");
    }
}

#[test]
fn global_avg_pool_linearity() {
    let mut rng = Rng::new(12);
    let x = rand(&[5, 5, 3], -1.0, 1.0, &mut rng);
    let mut t = Tape::<f64>::new();
    let xv = t.leaf(x);
    let scaled = t.scale(xv, 3.5).unwrap();
    let g1 = t.global_avg_pool(xv).unwrap();
    let g2 = t.global_avg_pool(scaled).unwrap();
    for (a, b) in t.value(g1).data.iter().zip(&t.value(g2).data) {
        assert!((a * 3.5 - b).abs() < 1e-12);
    }
}

#[test]
fn ssim_matches_per_window_oracle_on_20_pairs() {
    let p = SsimParams::default();
    let mut rng = Rng::new(13);
    for case in 0..20 {
        let x = rand(&[16, 16, 3], 0.0, 1.0, &mut rng);
        let y = if case % 4 == 0 {
            // include correlated pairs, not just independent noise
            Tensor::from_vec(
                x.shape.clone(),
                x.data.iter().map(|v| v * 0.8 + 0.05).collect(),
            )
            .unwrap()
        } else {
            rand(&[16, 16, 3], 0.0, 1.0, &mut rng)
        };
        let got = ssim_value(&x, &y, &p).unwrap();
        let expect = ssim_naive(&x, &y, &p);
        assert!(
            (got - expect).abs() < 1e-6,
            "case {case}: {got} vs {expect}"
        );
    }
}

#[test]
fn psnr_and_ssim_extremes() {
    let x = Tensor::<f64>::zeros([16, 16, 3]);
    let p = SsimParams::default();
    assert_eq!(ssim_value(&x, &x, &p).unwrap(), 1.0);
    assert_eq!(lde_core::loss::psnr(&x, &x).unwrap(), 100.0);
}
