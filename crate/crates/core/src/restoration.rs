//! Mask-guided restoration with an unconditional flow prior.
//!
//! Restoration is posed as a MAP problem `min_x D(Hx, z) + R(x)` whose
//! prior term is the flow model. Rather than taking gradient steps on the
//! data term, the sampler enforces the observation implicitly: at every ODE
//! step the known pixels of the state are replaced with a copy of `z`
//! noised to the state's current time, then the state is stepped by the
//! prior's velocity.
//!
//! Fusion alone leaves the fused state off the prior's trajectory
//! distribution, which shows up as seams at mask boundaries. Each
//! correction pass therefore projects the stepped state to `t = 1` with the
//! field and renoises it back to `t`, so the next step starts from a
//! sample the prior has actually seen.
//!
//! Time bookkeeping for [`restore_masked`]: an integer index `k` tracks
//! `t = k / N`. Every outer iteration runs `C + 1` passes; each pass fuses
//! at `t` and takes one Euler step. The first pass advances `k`. Later
//! passes, while `t < 1 - dt`, correct (project from `t + dt`, renoise to
//! `t`) and leave `k` in place; once `t >= 1 - dt` a pass advances `k`
//! instead. The run ends as soon as `t` reaches 1.

use std::time::Instant;

use crate::degradation::{DegradationKind, Observation};
use crate::error::{Error, Result};
use crate::flow::{euler_step, extrapolate_to_one, renoise, CountingField, TimeGrid, VelocityField};
use crate::tensor::{BinaryMask, ImageTensor, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RestorationConfig {
    pub n_steps: usize,
    /// Correction passes per ODE step. `0` gives plain fused Euler sampling.
    pub corrections: usize,
    pub seed: u64,
    pub record_trajectory: bool,
}

impl RestorationConfig {
    pub fn new(n_steps: usize, corrections: usize, seed: u64) -> Self {
        Self {
            n_steps,
            corrections,
            seed,
            record_trajectory: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Time index after the outer iteration.
    pub step: usize,
    pub t: f64,
    /// Known-region RMSE of the state against `z`.
    pub consistency_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestorationReport {
    /// Final state, unclamped.
    pub output: ImageTensor,
    pub field_evals: u64,
    pub wall_time_s: f64,
    pub trace: Option<Vec<StepRecord>>,
}

/// Field evaluations spent by [`restore_masked`] for `n_steps` and
/// `corrections`: one per ODE step plus two per correction, and corrections
/// run in every outer iteration whose advanced time is below `1 - dt`.
pub fn expected_field_evals(n_steps: usize, corrections: usize) -> u64 {
    let correcting_iterations = if corrections == 0 { 0 } else { n_steps.saturating_sub(2) };
    (n_steps + 2 * corrections * correcting_iterations) as u64
}

/// Replaces the known region of `x` with `t z + (1 - t) eps` (zero at
/// `t = 0`). A fresh `eps` is drawn on every call.
pub fn fuse(
    x: &ImageTensor,
    z: &ImageTensor,
    mask: &BinaryMask,
    t: f64,
    rng: &mut SeededRng,
) -> Result<ImageTensor> {
    x.check_same_shape(z)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("fusion time {t} outside [0, 1]")));
    }
    let eps = rng.randn(x.shape())?;
    let data = mask
        .broadcast(x.shape())?
        .zip(x.data().iter().zip(z.data()).zip(eps.data()))
        .map(|(known, ((&xv, &zv), &ev))| {
            if !known {
                xv
            } else if t > 0.0 {
                (t * zv as f64 + (1.0 - t) * ev as f64) as f32
            } else {
                0.0
            }
        })
        .collect();
    ImageTensor::new(x.shape(), data)
}

/// Root mean squared difference over known elements (all channels).
pub(crate) fn known_rmse(a: &ImageTensor, b: &ImageTensor, mask: &BinaryMask) -> Result<f64> {
    a.check_same_shape(b)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (known, (&av, &bv)) in mask.broadcast(a.shape())?.zip(a.data().iter().zip(b.data())) {
        if known {
            sum += (av as f64 - bv as f64).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("mask has no known pixels".into()));
    }
    Ok((sum / n as f64).sqrt())
}

fn at_step<T>(k: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite { context } => Error::NonFinite {
            context: format!("{context} (time index {k})"),
        },
        other => other,
    })
}

/// Mask-guided sampling with trajectory correction, for inpainting and
/// super-resolution observations.
pub fn restore_masked(
    field: &impl VelocityField,
    obs: &Observation,
    cfg: &RestorationConfig,
) -> Result<RestorationReport> {
    if obs.task.is_denoise() {
        return Err(Error::InvalidArgument(
            "denoising observations go through restore_denoise".into(),
        ));
    }
    let start = Instant::now();
    let grid = TimeGrid::new(cfg.n_steps)?;
    let n = grid.n_steps();
    let dt = grid.dt();
    let f = CountingField::new(field);
    let z = &obs.z;
    let mask = &obs.mask;
    mask.check_fits(z.shape())?;

    let mut rng = SeededRng::new(cfg.seed);
    let mut x = rng.randn(z.shape())?;
    let mut trace = cfg.record_trajectory.then(Vec::new);
    let mut k = 0;
    while k < n {
        for c in 0..=cfg.corrections {
            let t = grid.node(k);
            let fused = fuse(&x, z, mask, t, &mut rng)?;
            x = at_step(k, euler_step(&fused, t, dt, &f))?;
            if c > 0 && k + 1 < n {
                let x1_hat = at_step(k, extrapolate_to_one(&x, grid.node(k + 1), &f))?;
                x = renoise(&x1_hat, t, &mut rng)?;
            } else {
                k += 1;
                if k == n {
                    break;
                }
            }
        }
        if let Some(trace) = trace.as_mut() {
            trace.push(StepRecord {
                step: k,
                t: grid.node(k),
                consistency_rmse: known_rmse(&x, z, mask).unwrap_or(0.0),
            });
        }
    }
    Ok(RestorationReport {
        output: x,
        field_evals: f.eval_count(),
        wall_time_s: start.elapsed().as_secs_f64(),
        trace,
    })
}

/// Denoising with a global, time-dependent mask.
///
/// The state is pinned to `(1 - sigma) z` while `t < 1 - sigma` and follows
/// the prior from the first grid node `t* >= 1 - sigma` on. Nodes before
/// `t*` are skipped outright, so no field evaluations are spent there. The
/// initial Gaussian draw only matters when `t* = 0`.
pub fn restore_denoise(
    field: &impl VelocityField,
    obs: &Observation,
    cfg: &RestorationConfig,
) -> Result<RestorationReport> {
    let sigma = match obs.task.kind {
        DegradationKind::Denoise { sigma } => sigma,
        _ => {
            return Err(Error::InvalidArgument(
                "restore_denoise needs a denoising observation".into(),
            ))
        }
    };
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::InvalidArgument(format!("noise level {sigma} outside [0, 1]")));
    }
    let start = Instant::now();
    let grid = TimeGrid::new(cfg.n_steps)?;
    let f = CountingField::new(field);
    let mut rng = SeededRng::new(cfg.seed);
    let x0 = rng.randn(obs.z.shape())?;
    let pinned = obs.z.map(|v| (1.0 - sigma) * v)?;
    let threshold = 1.0 - sigma;

    let first_free = (0..grid.n_steps()).find(|&i| !(grid.node(i) < threshold));
    let mut trace = cfg.record_trajectory.then(Vec::new);
    let output = match first_free {
        None => pinned,
        Some(i0) => {
            let mut x = if i0 == 0 { x0 } else { pinned };
            for i in i0..grid.n_steps() {
                x = at_step(i, euler_step(&x, grid.node(i), grid.dt(), &f))?;
                if let Some(trace) = trace.as_mut() {
                    trace.push(StepRecord {
                        step: i + 1,
                        t: grid.node(i + 1),
                        consistency_rmse: known_rmse(&x, &obs.z, &obs.mask).unwrap_or(0.0),
                    });
                }
            }
            x
        }
    };
    Ok(RestorationReport {
        output,
        field_evals: f.eval_count(),
        wall_time_s: start.elapsed().as_secs_f64(),
        trace,
    })
}

/// Routes denoising observations to [`restore_denoise`] and everything else
/// to [`restore_masked`].
pub fn restore(
    field: &impl VelocityField,
    obs: &Observation,
    cfg: &RestorationConfig,
) -> Result<RestorationReport> {
    match obs.task.kind {
        DegradationKind::Denoise { .. } => restore_denoise(field, obs, cfg),
        DegradationKind::BoxInpaint { .. }
        | DegradationKind::RandomInpaint { .. }
        | DegradationKind::SuperResolution { .. } => restore_masked(field, obs, cfg),
    }
}
