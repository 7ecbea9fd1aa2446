//! Fits an MLP velocity field to a 1-D two-mode mixture with the
//! conditional flow-matching loss, then compares it with the exact field
//! and round-trips the checkpoint.
//!
//! cargo run --release --example train_velocity_net

use maskflow::neural::{train, TrainConfig};
use maskflow::{GmmPrior, MlpVelocityNet, Result, SeededRng};

fn main() -> Result<()> {
    let prior = GmmPrior::scalar(&[0.5, 0.5], &[-2.0, 2.0], &[0.25, 0.25])?;
    let init = MlpVelocityNet::xavier(&[2, 64, 64, 1], &mut SeededRng::new(1))?;
    let cfg = TrainConfig {
        steps: 10_000,
        seed: 2,
        ..TrainConfig::default()
    };
    let outcome = train(init, &prior, &cfg)?;
    for step in (0..cfg.steps).step_by(2000).chain([cfg.steps - 1]) {
        let window = &outcome.losses[step.saturating_sub(99)..=step];
        println!("step {step:>5}  loss {:.4}", window.iter().sum::<f64>() / window.len() as f64);
    }

    let net = &outcome.net;
    println!("\n  t      x    exact  learned");
    for t in [0.2, 0.5, 0.8] {
        for x in [-2.5, -0.5, 0.5, 2.5] {
            let exact = prior.velocity_f64(&[x], t)?[0];
            let learned = net.forward(&[x], t)?[0];
            println!("{t:.1}  {x:>5.1}  {exact:>7.3}  {learned:>7.3}");
        }
    }

    let path = std::env::temp_dir().join("maskflow_two_mode.rfnn");
    net.save(&path)?;
    let back = MlpVelocityNet::load(&path)?;
    println!("\ncheckpoint {} reloads identically: {}", path.display(), &back == net);
    Ok(())
}
