//! Independent oracles shared by the integration tests and the acceptance
//! runner. Nothing here calls into the closed-form mixture velocity or the
//! windowed metric code it is used to check.

#![allow(dead_code)]

use maskflow::{GmmPrior, ImageTensor, SeededRng, Shape};
use statrs::distribution::{ContinuousCDF, Normal};

/// Symmetric two-mode 1-D mixture used throughout: means -2 and 2,
/// variance 0.25.
pub fn two_mode_1d() -> GmmPrior {
    GmmPrior::scalar(&[0.5, 0.5], &[-2.0, 2.0], &[0.25, 0.25]).unwrap()
}

/// Four isotropic modes at `(+-1.5, +-1.5)` with unequal weights. Wide
/// enough that its mass covers the `[-3, 3]^2` evaluation grid.
pub fn four_mode_2d() -> GmmPrior {
    let m = 1.5;
    GmmPrior::new(
        Shape::vector(2).unwrap(),
        vec![0.1, 0.2, 0.3, 0.4],
        vec![vec![-m, -m], vec![m, -m], vec![-m, m], vec![m, m]],
        vec![0.5; 4],
    )
    .unwrap()
}

/// Kernel-weighted Monte-Carlo estimate of `E[x1 - x0 | x_t = x]` for a 1-D
/// prior, from `pairs` draws and a Gaussian kernel of width `h`. Returns
/// the ratio estimate and its delta-method standard error.
pub fn mc_velocity(prior: &GmmPrior, x: f64, t: f64, pairs: usize, h: f64, seed: u64) -> (f64, f64) {
    let mut rng = SeededRng::new(seed);
    let mut ys = Vec::with_capacity(pairs);
    let mut ws = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let x0 = rng.standard_normal();
        let x1 = prior.sample_labeled(&mut rng).1[0];
        let xt = (1.0 - t) * x0 + t * x1;
        let d = (x - xt) / h;
        ws.push((-0.5 * d * d).exp());
        ys.push(x1 - x0);
    }
    let sw: f64 = ws.iter().sum();
    let mean = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let var = ws.iter().zip(&ys).map(|(w, y)| (w * (y - mean)).powi(2)).sum::<f64>();
    (mean, var.sqrt() / sw)
}

/// Total-variation distance between the histogram of `samples` on `bins`
/// equal bins over `[lo, hi]` and the exact mass of a 1-D mixture on the
/// same bins. Mass outside `[lo, hi]` counts as two extra bins.
pub fn tv_to_mixture(samples: &[f64], prior: &GmmPrior, bins: usize, lo: f64, hi: f64) -> f64 {
    let comps: Vec<(f64, Normal)> = prior
        .weights()
        .iter()
        .zip(prior.means())
        .zip(prior.variances())
        .map(|((&w, m), &v)| (w, Normal::new(m[0], v.sqrt()).unwrap()))
        .collect();
    let cdf = |x: f64| -> f64 {
        if x == f64::NEG_INFINITY {
            0.0
        } else if x == f64::INFINITY {
            1.0
        } else {
            comps.iter().map(|(w, n)| w * n.cdf(x)).sum()
        }
    };
    let width = (hi - lo) / bins as f64;
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend((0..=bins).map(|i| lo + i as f64 * width));
    edges.push(f64::INFINITY);
    let mut counts = vec![0usize; bins + 2];
    for &s in samples {
        let idx = if s < lo {
            0
        } else if s >= hi {
            bins + 1
        } else {
            1 + (((s - lo) / width) as usize).min(bins - 1)
        };
        counts[idx] += 1;
    }
    let n = samples.len() as f64;
    edges
        .windows(2)
        .zip(&counts)
        .map(|(e, &c)| (c as f64 / n - (cdf(e[1]) - cdf(e[0]))).abs())
        .sum::<f64>()
        / 2.0
}

fn unit(v: f32) -> f64 {
    ((v as f64).clamp(-1.0, 1.0) + 1.0) / 2.0
}

/// PSNR by direct summation, same conventions as the library.
pub fn brute_psnr(a: &ImageTensor, b: &ImageTensor) -> f64 {
    let n = a.len() as f64;
    let mut sse = 0.0;
    for i in 0..a.len() {
        let d = unit(a.data()[i]) - unit(b.data()[i]);
        sse += d * d;
    }
    let mse = sse / n;
    if mse == 0.0 {
        99.0
    } else {
        (-10.0 * mse.log10()).min(99.0)
    }
}

/// SSIM with an explicit 2-D 11x11 Gaussian window evaluated at every
/// valid position.
pub fn brute_ssim(a: &ImageTensor, b: &ImageTensor) -> f64 {
    const W: usize = 11;
    let sigma: f64 = 1.5;
    let mut win = [[0.0f64; W]; W];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let s = a.shape();
    let mut per_channel = 0.0;
    for c in 0..s.channels {
        let mut sum = 0.0;
        let mut count = 0;
        for y0 in 0..=s.height - W {
            for x0 in 0..=s.width - W {
                let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, row) in win.iter().enumerate() {
                    for (j, &w) in row.iter().enumerate() {
                        let w = w / total;
                        let va = unit(a.get(c, y0 + i, x0 + j));
                        let vb = unit(b.get(c, y0 + i, x0 + j));
                        ma += w * va;
                        mb += w * vb;
                        aa += w * va * va;
                        bb += w * vb * vb;
                        ab += w * va * vb;
                    }
                }
                let (va, vb, cov) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        per_channel += sum / count as f64;
    }
    per_channel / s.channels as f64
}

/// Uniform values in `[-1, 1]`.
pub fn random_image(shape: Shape, rng: &mut SeededRng) -> ImageTensor {
    let data = (0..shape.len()).map(|_| (2.0 * rng.uniform() - 1.0) as f32).collect();
    ImageTensor::new(shape, data).unwrap()
}

/// Relative mean-squared discrepancy `sum |a - b|^2 / sum |a|^2` of a field
/// against a reference over the points of `grid`.
pub fn relative_discrepancy(
    grid: &[(Vec<f64>, f64)],
    reference: impl Fn(&[f64], f64) -> Vec<f64>,
    candidate: impl Fn(&[f64], f64) -> Vec<f64>,
) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (x, t) in grid {
        let a = reference(x, *t);
        let b = candidate(x, *t);
        for (u, v) in a.iter().zip(&b) {
            num += (u - v).powi(2);
            den += u * u;
        }
    }
    num / den
}

/// `[-3, 3]^d` in steps of `dx`, crossed with `t = 0.05, 0.10, ..., 0.95`.
pub fn field_grid(dim: usize, dx: f64) -> Vec<(Vec<f64>, f64)> {
    let n = (6.0 / dx).round() as usize + 1;
    let axis: Vec<f64> = (0..n).map(|i| -3.0 + i as f64 * dx).collect();
    let mut points: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..dim {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    let times: Vec<f64> = (1..=19).map(|k| k as f64 * 0.05).collect();
    points
        .iter()
        .flat_map(|p| times.iter().map(move |&t| (p.clone(), t)))
        .collect()
}

/// Literal transcription of the corrected-sampling loop's time bookkeeping
/// with floating-point time, counting one evaluation per Euler step and one
/// per extrapolation.
pub fn traced_field_evals(n: usize, corrections: usize) -> u64 {
    let dt = 1.0 / n as f64;
    let mut evals = 0;
    let mut t = 0.0f64;
    let mut k = 0usize;
    while t < 1.0 - 1e-12 {
        for c in 0..=corrections {
            evals += 1; // Euler step from t
            if c == 0 || t >= 1.0 - dt - 1e-12 {
                k += 1;
                t = k as f64 / n as f64;
                if t >= 1.0 - 1e-12 {
                    break;
                }
            } else {
                evals += 1; // projection to t = 1 from t + dt
            }
        }
    }
    evals
}
