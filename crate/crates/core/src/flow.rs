//! Flow-matching primitives: the straight conditional path, explicit Euler
//! integration, unconditional sampling, and the two trajectory-correction
//! moves (projection to `t = 1` and renoising back to `t`).
//!
//! Time runs from noise at `t = 0` to data at `t = 1`.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, SeededRng, Shape};

/// A time-dependent velocity field `(x, t) -> v` with `v` shaped like `x`.
///
/// Implementations must be pure: equal inputs give bitwise-equal outputs.
pub trait VelocityField: Send + Sync {
    fn velocity(&self, x: &ImageTensor, t: f64) -> Result<ImageTensor>;
}

impl<F: VelocityField + ?Sized> VelocityField for &F {
    fn velocity(&self, x: &ImageTensor, t: f64) -> Result<ImageTensor> {
        (**self).velocity(x, t)
    }
}

impl<F: VelocityField + ?Sized> VelocityField for Box<F> {
    fn velocity(&self, x: &ImageTensor, t: f64) -> Result<ImageTensor> {
        (**self).velocity(x, t)
    }
}

/// Wraps a field and counts evaluations.
///
/// Each restoration run owns its own counter, so concurrent runs sharing one
/// underlying field keep exact per-run accounting.
#[derive(Debug)]
pub struct CountingField<F> {
    inner: F,
    evals: AtomicU64,
}

impl<F: VelocityField> CountingField<F> {
    pub fn new(inner: F) -> Self {
        Self {
            inner,
            evals: AtomicU64::new(0),
        }
    }

    pub fn eval_count(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> F {
        self.inner
    }
}

impl<F: VelocityField> VelocityField for CountingField<F> {
    fn velocity(&self, x: &ImageTensor, t: f64) -> Result<ImageTensor> {
        self.evals.fetch_add(1, Ordering::Relaxed);
        self.inner.velocity(x, t)
    }
}

/// Adapts a closure into a field. Handy for constant and synthetic fields.
pub struct FnField<F>(pub F);

impl<F> VelocityField for FnField<F>
where
    F: Fn(&ImageTensor, f64) -> Result<ImageTensor> + Send + Sync,
{
    fn velocity(&self, x: &ImageTensor, t: f64) -> Result<ImageTensor> {
        (self.0)(x, t)
    }
}

/// Uniform grid `t_i = i / N`, `i = 0..N`, with step `1 / N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidArgument("ODE step count must be >= 1".into()));
        }
        Ok(Self { n_steps })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps as f64
    }

    /// Node `i / N`, computed directly rather than by accumulation.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.n_steps as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_steps).map(|i| self.node(i))
    }
}

fn check_unit_time(t: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("{what}: t = {t} outside [0, 1]")));
    }
    Ok(())
}

/// `(1 - t) x0 + t x1`.
pub fn conditional_path(x0: &ImageTensor, x1: &ImageTensor, t: f64) -> Result<ImageTensor> {
    check_unit_time(t, "conditional path")?;
    x0.axpby(1.0 - t, x1, t)
}

fn checked_velocity(f: &impl VelocityField, x: &ImageTensor, t: f64) -> Result<ImageTensor> {
    let v = f.velocity(x, t)?;
    x.check_same_shape(&v)?;
    Ok(v)
}

/// One explicit Euler step `x + dt * f(x, t)`; exactly one field evaluation.
pub fn euler_step(
    x: &ImageTensor,
    t: f64,
    dt: f64,
    f: &impl VelocityField,
) -> Result<ImageTensor> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("Euler step dt = {dt} must be > 0")));
    }
    check_unit_time(t, "Euler step")?;
    let v = checked_velocity(f, x, t)?;
    x.axpby(1.0, &v, dt).map_err(|_| Error::NonFinite {
        context: format!("Euler step at t = {t}"),
    })
}

/// Integrates the field from a fresh Gaussian draw at `t = 0` to `t = 1`.
pub fn sample_unconditional(
    f: &impl VelocityField,
    grid: TimeGrid,
    shape: Shape,
    rng: &mut SeededRng,
) -> Result<ImageTensor> {
    let mut x = rng.randn(shape)?;
    let dt = grid.dt();
    for t in grid.nodes() {
        x = euler_step(&x, t, dt, f)?;
    }
    Ok(x)
}

/// Projects `x` at time `t` to the endpoint: `x + (1 - t) f(x, t)`.
///
/// For an exact marginal field this is the posterior mean of the data
/// endpoint given `x_t`. Always costs one evaluation, even at `t = 1`.
pub fn extrapolate_to_one(x: &ImageTensor, t: f64, f: &impl VelocityField) -> Result<ImageTensor> {
    check_unit_time(t, "extrapolation")?;
    let v = checked_velocity(f, x, t)?;
    x.axpby(1.0, &v, 1.0 - t).map_err(|_| Error::NonFinite {
        context: format!("extrapolation at t = {t}"),
    })
}

/// Places an endpoint estimate back on the path at time `t`:
/// `t * x1_hat + (1 - t) * eta` with fresh `eta ~ N(0, I)`.
pub fn renoise(x1_hat: &ImageTensor, t: f64, rng: &mut SeededRng) -> Result<ImageTensor> {
    check_unit_time(t, "renoise")?;
    let eta = rng.randn(x1_hat.shape())?;
    x1_hat.axpby(t, &eta, 1.0 - t)
}
