//! Unconditional sampling from a closed-form two-mode mixture field,
//! compared with the exact density as a text histogram.
//!
//! cargo run --release --example sample_mixture

use maskflow::flow::sample_unconditional;
use maskflow::{GmmPrior, Result, SeededRng, Shape, TimeGrid};

fn main() -> Result<()> {
    let prior = GmmPrior::scalar(&[0.3, 0.7], &[-2.0, 1.5], &[0.25, 0.16])?;
    let grid = TimeGrid::new(256)?;
    let shape = Shape::vector(1)?;
    let mut rng = SeededRng::new(7);
    let n = 20_000;
    let samples: Vec<f64> = (0..n)
        .map(|_| sample_unconditional(&prior, grid, shape, &mut rng).map(|x| x.data()[0] as f64))
        .collect::<Result<_>>()?;

    let (lo, hi, bins) = (-4.0, 4.0, 32);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for s in &samples {
        if (lo..hi).contains(s) {
            counts[((s - lo) / width) as usize] += 1;
        }
    }
    println!("{:>6}  {:>7}  {:>7}", "x", "sampled", "exact");
    for (i, c) in counts.iter().enumerate() {
        let x = lo + (i as f64 + 0.5) * width;
        let exact = prior.log_density(&[x], 1.0)?.exp() * width;
        let observed = *c as f64 / n as f64;
        println!("{x:>6.2}  {observed:>7.4}  {exact:>7.4}  {}", "#".repeat((observed * 300.0) as usize));
    }
    let right = samples.iter().filter(|&&s| s > 0.0).count() as f64 / n as f64;
    println!("mass right of 0: {right:.3} (mixture weight 0.7)");
    Ok(())
}
