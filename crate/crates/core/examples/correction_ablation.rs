//! ODE steps x correction passes on random inpainting of toy patterns:
//! mean PSNR, consistency and field evaluations per cell.
//!
//! cargo run --release --example correction_ablation

use maskflow::metrics::{consistency_rmse, psnr};
use maskflow::restoration::expected_field_evals;
use maskflow::{
    degrade, restore, DegradationKind, DegradationTask, GmmPrior, RestorationConfig, Result,
    SeededRng,
};

fn main() -> Result<()> {
    let prior = GmmPrior::patterns(16, 16)?;
    let task = DegradationTask::new(DegradationKind::RandomInpaint { masked_fraction: 0.7 });
    let seeds = 30u64;
    let cases = (0..seeds)
        .map(|s| {
            let clean = prior.sample(&mut SeededRng::new(s));
            degrade(&clean, &task, &mut SeededRng::new(1000 + s)).map(|obs| (clean, obs))
        })
        .collect::<Result<Vec<_>>>()?;

    println!("{:>4} {:>2} {:>9} {:>12} {:>6}", "N", "C", "PSNR dB", "consistency", "evals");
    for n in [8, 32, 64, 128] {
        for c in 0..=2 {
            let (mut p, mut k) = (0.0, 0.0);
            for (s, (clean, obs)) in cases.iter().enumerate() {
                let report = restore(&prior, obs, &RestorationConfig::new(n, c, s as u64))?;
                p += psnr(&report.output, clean)?;
                k += consistency_rmse(&report.output, &obs.z, &obs.mask)?;
            }
            let m = seeds as f64;
            println!("{n:>4} {c:>2} {:>9.2} {:>12.4} {:>6}", p / m, k / m, expected_field_evals(n, c));
        }
    }
    Ok(())
}
