//! Synthetic degradations `z = Hx + noise` and their masks.
//!
//! Every operator here is mask-based: inpainting deletes pixels,
//! super-resolution keeps one pixel per `factor x factor` block (the
//! top-left one), and denoising keeps everything. Unknown pixels of `z`
//! are zero-filled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, ImageTensor, SeededRng, Shape};

/// Default measurement noise added to the known pixels.
pub const DEFAULT_MEASUREMENT_NOISE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DegradationKind {
    BoxInpaint { box_h: usize, box_w: usize },
    RandomInpaint { masked_fraction: f64 },
    SuperResolution { factor: usize },
    Denoise { sigma: f64 },
}

impl DegradationKind {
    /// Short label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            DegradationKind::BoxInpaint { .. } => "box",
            DegradationKind::RandomInpaint { .. } => "random",
            DegradationKind::SuperResolution { .. } => "sr",
            DegradationKind::Denoise { .. } => "denoise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationTask {
    pub kind: DegradationKind,
    /// Ignored for denoising, whose own `sigma` is the whole degradation.
    pub sigma_meas: f64,
}

impl DegradationTask {
    pub fn new(kind: DegradationKind) -> Self {
        Self {
            kind,
            sigma_meas: DEFAULT_MEASUREMENT_NOISE,
        }
    }

    pub fn with_noise(kind: DegradationKind, sigma_meas: f64) -> Self {
        Self { kind, sigma_meas }
    }

    pub fn is_denoise(&self) -> bool {
        matches!(self.kind, DegradationKind::Denoise { .. })
    }

    pub fn validate(&self, shape: Shape) -> Result<()> {
        if !(self.sigma_meas >= 0.0) || !self.sigma_meas.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "measurement noise {} must be >= 0",
                self.sigma_meas
            )));
        }
        match self.kind {
            DegradationKind::BoxInpaint { box_h, box_w } => {
                if box_h > shape.height || box_w > shape.width {
                    return Err(Error::InvalidArgument(format!(
                        "box {box_h}x{box_w} exceeds image {}x{}",
                        shape.height, shape.width
                    )));
                }
            }
            DegradationKind::RandomInpaint { masked_fraction } => {
                if !(masked_fraction > 0.0 && masked_fraction < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "masked fraction {masked_fraction} must lie in (0, 1)"
                    )));
                }
            }
            DegradationKind::SuperResolution { factor } => {
                if factor == 0 || !shape.height.is_multiple_of(factor) || !shape.width.is_multiple_of(factor) {
                    return Err(Error::InvalidArgument(format!(
                        "factor {factor} does not divide {}x{}",
                        shape.height, shape.width
                    )));
                }
            }
            DegradationKind::Denoise { sigma } => {
                if !(sigma >= 0.0) || !sigma.is_finite() {
                    return Err(Error::InvalidArgument(format!("noise level {sigma} must be >= 0")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub z: ImageTensor,
    pub mask: BinaryMask,
    pub task: DegradationTask,
}

/// Unknown centered box; offsets are `floor((dim - box) / 2)`.
pub fn make_box_mask(h: usize, w: usize, box_h: usize, box_w: usize) -> Result<BinaryMask> {
    if box_h > h || box_w > w {
        return Err(Error::InvalidArgument(format!(
            "box {box_h}x{box_w} exceeds image {h}x{w}"
        )));
    }
    let (y0, x0) = ((h - box_h) / 2, (w - box_w) / 2);
    Ok(BinaryMask::from_fn(h, w, |y, x| {
        !((y0..y0 + box_h).contains(&y) && (x0..x0 + box_w).contains(&x))
    }))
}

/// Exactly `floor(fraction * h * w)` unknown pixels, placed by a seeded
/// Fisher-Yates shuffle.
pub fn make_random_mask(h: usize, w: usize, masked_fraction: f64, rng: &mut SeededRng) -> BinaryMask {
    let n = h * w;
    let n_masked = ((masked_fraction.clamp(0.0, 1.0) * n as f64).floor() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.index(i + 1);
        order.swap(i, j);
    }
    let mut bits = vec![true; n];
    for &i in &order[..n_masked] {
        bits[i] = false;
    }
    BinaryMask::from_bits(h, w, bits).expect("sizes agree")
}

/// Known pixels on the `factor` lattice (top-left of each block).
pub fn make_sr_mask(h: usize, w: usize, factor: usize) -> Result<BinaryMask> {
    if factor == 0 || !h.is_multiple_of(factor) || !w.is_multiple_of(factor) {
        return Err(Error::InvalidArgument(format!(
            "factor {factor} does not divide {h}x{w}"
        )));
    }
    Ok(BinaryMask::from_fn(h, w, |y, x| y.is_multiple_of(factor) && x.is_multiple_of(factor)))
}

pub fn make_mask(task: &DegradationTask, shape: Shape, rng: &mut SeededRng) -> Result<BinaryMask> {
    task.validate(shape)?;
    let (h, w) = (shape.height, shape.width);
    match task.kind {
        DegradationKind::BoxInpaint { box_h, box_w } => make_box_mask(h, w, box_h, box_w),
        DegradationKind::RandomInpaint { masked_fraction } => {
            Ok(make_random_mask(h, w, masked_fraction, rng))
        }
        DegradationKind::SuperResolution { factor } => make_sr_mask(h, w, factor),
        DegradationKind::Denoise { .. } => Ok(BinaryMask::ones(h, w)),
    }
}

/// Builds the observation for `task`. The mask is drawn first, then the
/// noise, both from `rng`.
pub fn degrade(x: &ImageTensor, task: &DegradationTask, rng: &mut SeededRng) -> Result<Observation> {
    let shape = x.shape();
    let mask = make_mask(task, shape, rng)?;
    let noise = rng.randn(shape)?;
    let z = match task.kind {
        DegradationKind::Denoise { sigma } => x.axpby(1.0, &noise, sigma)?,
        _ => {
            let noisy = x.axpby(1.0, &noise, task.sigma_meas)?;
            let data = noisy
                .data()
                .iter()
                .zip(mask.broadcast(shape)?)
                .map(|(&v, known)| if known { v } else { 0.0 })
                .collect();
            ImageTensor::new(shape, data)?
        }
    };
    Ok(Observation {
        z,
        mask,
        task: *task,
    })
}
