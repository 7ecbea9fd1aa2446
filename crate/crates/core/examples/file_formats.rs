//! Raw tensor, PGM/PPM and checkpoint files written to a temporary
//! directory and read back.
//!
//! cargo run --example file_formats

use maskflow::io::{load_pnm, load_raw, save_pnm, save_raw};
use maskflow::{GmmPrior, ImageTensor, MlpVelocityNet, Result, SeededRng, Shape};

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("maskflow_formats");
    std::fs::create_dir_all(&dir)?;

    let mut rng = SeededRng::new(5);
    let t = rng.randn(Shape::new(3, 4, 5)?)?;
    save_raw(&t, dir.join("noise.rft"))?;
    println!("raw tensor {} round trip bitwise: {}", t.shape(), load_raw(dir.join("noise.rft"))?.bitwise_eq(&t));

    // PNM stores 256 levels; values off that grid are rounded on save.
    let img = GmmPrior::patterns(8, 8)?.sample(&mut rng).clamp(-1.0, 1.0);
    save_pnm(&img, dir.join("pattern.pgm"))?;
    let back = load_pnm(dir.join("pattern.pgm"))?;
    let worst = img.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
    println!("pgm quantization error at most {worst:.5} (half a level is {:.5})", 1.0 / 255.0);
    save_pnm(&back, dir.join("again.pgm"))?;
    println!("quantized image re-saves to identical bytes: {}", std::fs::read(dir.join("pattern.pgm"))? == std::fs::read(dir.join("again.pgm"))?);

    let rgb = ImageTensor::filled(Shape::new(3, 2, 2)?, 1.0);
    save_pnm(&rgb, dir.join("white.ppm"))?;
    println!("ppm header: {:?}", String::from_utf8_lossy(&std::fs::read(dir.join("white.ppm"))?[..11]));

    let net = MlpVelocityNet::xavier(&[3, 8, 2], &mut rng)?;
    net.save(dir.join("net.rfnn"))?;
    println!("checkpoint round trip: {}", MlpVelocityNet::load(dir.join("net.rfnn"))? == net);
    Ok(())
}
