//! Independent scalar oracles shared by the oracle and acceptance tests.
//! These are written straight from the definitions and share no code with
//! the implementation paths they check.

use lde_core::loss::{gaussian_window, SsimParams};
use lde_core::tensor::Tensor;

/// Per-window SSIM from the definition: ITU-R 601 luma, explicit
/// Gaussian-weighted moments, mean over valid window positions.
pub fn ssim_naive(x: &Tensor<f64>, y: &Tensor<f64>, p: &SsimParams) -> f64 {
    let (h, w) = (x.shape[0], x.shape[1]);
    let luma = |t: &Tensor<f64>, yy: usize, xx: usize| {
        let i = (yy * w + xx) * 3;
        0.299 * t.data[i] + 0.587 * t.data[i + 1] + 0.114 * t.data[i + 2]
    };
    let win = gaussian_window(p.window, p.sigma);
    let k = p.window;
    let mut total = 0.0;
    let mut count = 0usize;
    for oy in 0..=(h - k) {
        for ox in 0..=(w - k) {
            let (mut mx, mut my, mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..k {
                for dx in 0..k {
                    let g = win[dy * k + dx];
                    let a = luma(x, oy + dy, ox + dx);
                    let b = luma(y, oy + dy, ox + dx);
                    mx += g * a;
                    my += g * b;
                    mxx += g * a * a;
                    myy += g * b * b;
                    mxy += g * a * b;
                }
            }
            let (vx, vy, cov) = (mxx - mx * mx, myy - my * my, mxy - mx * my);
            let num = (2.0 * mx * my + p.c1) * (2.0 * cov + p.c2);
            let den = (mx * mx + my * my + p.c1) * (vx + vy + p.c2);
            total += num / den;
            count += 1;
        }
    }
    total / count as f64
}
