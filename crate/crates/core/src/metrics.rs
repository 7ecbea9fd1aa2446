//! Full-reference quality metrics and timing.
//!
//! PSNR and SSIM map model-space values from `[-1, 1]` to `[0, 1]` (after
//! clamping) and use a peak of 1. SSIM is the usual Gaussian-windowed form:
//! 11x11 window, `sigma = 1.5`, `K1 = 0.01`, `K2 = 0.03`, evaluated over
//! valid window positions and averaged over channels.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, ImageTensor};

/// Reported PSNR when the images are identical.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub psnr_db: f64,
    /// `None` when the image is smaller than the SSIM window.
    pub ssim: Option<f64>,
    pub consistency_rmse: f64,
    pub wall_time_s: f64,
    pub field_evals: u64,
}

/// Model space to `[0, 1]`, clamping first.
pub fn to_unit(v: f32) -> f64 {
    ((v as f64).clamp(-1.0, 1.0) + 1.0) / 2.0
}

pub fn mse_unit(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.check_same_shape(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (to_unit(x) - to_unit(y)).powi(2))
        .sum();
    Ok(sum / a.len() as f64)
}

/// Converts a `[0, 1]`-space MSE to dB with peak 1, capped.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    Ok(psnr_from_mse(mse_unit(a, b)?))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" Gaussian filter of one `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.check_same_shape(b)?;
    let shape = a.shape();
    let (h, w) = (shape.height, shape.width);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, image is {h}x{w}"
        )));
    }
    let k = gaussian_kernel();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let plane = shape.plane();
    let mut total = 0.0;
    for c in 0..shape.channels {
        let pa: Vec<f64> = a.data()[c * plane..(c + 1) * plane].iter().map(|&v| to_unit(v)).collect();
        let pb: Vec<f64> = b.data()[c * plane..(c + 1) * plane].iter().map(|&v| to_unit(v)).collect();
        let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> {
            pa.iter().zip(&pb).map(|(&x, &y)| f(x, y)).collect()
        };
        let mu_a = filter_valid(&pa, h, w, &k);
        let mu_b = filter_valid(&pb, h, w, &k);
        let e_aa = filter_valid(&prod(|x, _| x * x), h, w, &k);
        let e_bb = filter_valid(&prod(|_, y| y * y), h, w, &k);
        let e_ab = filter_valid(&prod(|x, y| x * y), h, w, &k);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / shape.channels as f64)
}

/// `sqrt(sum m (output - z)^2 / sum m)` over every channel of the known
/// pixels, in model space.
pub fn consistency_rmse(output: &ImageTensor, z: &ImageTensor, mask: &BinaryMask) -> Result<f64> {
    crate::restoration::known_rmse(output, z, mask)
}

/// Runs `f` once and returns its result with the elapsed seconds.
pub fn timed<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let start = Instant::now();
    let r = f();
    (r, start.elapsed().as_secs_f64())
}
