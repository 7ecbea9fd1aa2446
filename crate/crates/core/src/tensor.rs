//! Dense image tensors, binary masks and the seeded random source.
//!
//! Layout is channel-first and row-major: element `(c, y, x)` lives at
//! `(c * height + y) * width + x`. Samples are stored as `f32`; arithmetic
//! helpers compute in `f64` and round once on the way back, so every value a
//! tensor holds is exactly representable in the raw file format.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidShape(format!(
                "{channels}x{height}x{width} has a zero dimension"
            )));
        }
        channels
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| Error::InvalidShape("element count overflows".into()))?;
        Ok(Self {
            channels,
            height,
            width,
        })
    }

    /// A flat vector viewed as a single-row, single-channel image.
    pub fn vector(len: usize) -> Result<Self> {
        Self::new(1, 1, len)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Dense `channels x height x width` array of finite samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    shape: Shape,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::DimMismatch {
                expected: shape.len(),
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "tensor data".into(),
            });
        }
        Ok(Self { shape, data })
    }

    /// Builds a tensor from `f64` values, rounding each to `f32`.
    pub fn from_f64(shape: Shape, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| v as f32).collect())
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f32) -> Self {
        assert!(value.is_finite(), "fill value must be finite");
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.shape.height + y) * self.shape.width + x]
    }

    /// Same data, reinterpreted under another shape of equal size.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        if shape.len() != self.data.len() {
            return Err(Error::DimMismatch {
                expected: shape.len(),
                found: self.data.len(),
            });
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let data = self.data.iter().map(|&v| f(v as f64) as f32).collect();
        Self::new(self.shape, data)
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a as f64, b as f64) as f32)
            .collect();
        Self::new(self.shape, data)
    }

    /// `alpha * self + beta * other`, evaluated in `f64` per element.
    pub fn axpby(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        self.zip_map(other, |a, b| alpha * a + beta * b)
    }

    pub fn clamp(&self, lo: f32, hi: f32) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|v| v.clamp(lo, hi)).collect(),
        }
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                found: other.shape,
            });
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.len() as f64
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Spatial `{0, 1}` map; `1` marks a known pixel. Broadcast over channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn from_bits(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimMismatch {
                expected: height * width,
                found: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self::from_fn(height, width, |_, _| true)
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_fn(height, width, |_, _| false)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_known(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Known flag for the pixel at flat plane index `i`.
    pub fn known_at(&self, i: usize) -> bool {
        self.data[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.data
    }

    /// Number of known pixels in one plane.
    pub fn count_known(&self) -> usize {
        self.data.iter().filter(|&&k| k).count()
    }

    pub fn check_fits(&self, shape: Shape) -> Result<()> {
        if self.height != shape.height || self.width != shape.width {
            return Err(Error::InvalidShape(format!(
                "mask {}x{} does not cover image {shape}",
                self.height, self.width
            )));
        }
        Ok(())
    }

    /// Known flag for every element of a tensor with `shape`.
    pub fn broadcast(&self, shape: Shape) -> Result<impl Iterator<Item = bool> + '_> {
        self.check_fits(shape)?;
        Ok((0..shape.channels).flat_map(move |_| self.data.iter().copied()))
    }
}

/// ChaCha8 stream with a Gaussian sampler. One instance per run, passed by
/// `&mut` to everything that draws.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    pub fn randn(&mut self, shape: Shape) -> Result<ImageTensor> {
        randn(self, shape)
    }
}

/// Tensor of i.i.d. standard-normal draws.
pub fn randn(rng: &mut SeededRng, shape: Shape) -> Result<ImageTensor> {
    let shape = Shape::new(shape.channels, shape.height, shape.width)?;
    let data = (0..shape.len())
        .map(|_| rng.standard_normal() as f32)
        .collect();
    Ok(ImageTensor { shape, data })
}
