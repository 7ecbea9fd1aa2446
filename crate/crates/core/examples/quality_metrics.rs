//! PSNR, SSIM and known-region consistency on a pattern image under
//! growing noise.
//!
//! cargo run --release --example quality_metrics

use maskflow::degradation::make_box_mask;
use maskflow::metrics::{consistency_rmse, psnr, ssim, timed};
use maskflow::{GmmPrior, Result, SeededRng};

fn main() -> Result<()> {
    let prior = GmmPrior::patterns(32, 32)?;
    let clean = prior.sample(&mut SeededRng::new(1));
    let mask = make_box_mask(32, 32, 10, 10)?;
    println!("{:>6} {:>9} {:>7} {:>12}", "sigma", "PSNR dB", "SSIM", "consistency");
    for sigma in [0.0, 0.01, 0.05, 0.1, 0.3] {
        let noise = SeededRng::new(2).randn(clean.shape())?;
        let noisy = clean.axpby(1.0, &noise, sigma)?;
        println!(
            "{sigma:>6.2} {:>9.2} {:>7.4} {:>12.4}",
            psnr(&noisy, &clean)?,
            ssim(&noisy, &clean)?,
            consistency_rmse(&noisy, &clean, &mask)?
        );
    }
    let (s, secs) = timed(|| ssim(&clean, &clean));
    println!("ssim(x, x) = {} in {:.1} us", s?, secs * 1e6);
    Ok(())
}
