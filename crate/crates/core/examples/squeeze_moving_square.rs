//! Squeezes ten frames of a moving square into two images, before and after
//! fitting the hyperplane to the clip, and writes both stacks as PNGs.
//!
//! cargo run --release --example squeeze_moving_square [out_dir]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use temporal_squeeze::data::{generate, sample_clip, save_squeezed, SampleMode, SyntheticSpec};
use temporal_squeeze::tspool::{fit_hyperplane, mean_pixel_norm, ts_forward, TsLayerParams};

fn main() -> temporal_squeeze::Result<()> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "squeezed".into()));
    let (k, d) = (10, 2);
    let videos = generate::<f64>(&SyntheticSpec::reversal_pair(16, 32, 3), 1)?;
    let clip = sample_clip::<f64, ChaCha8Rng>(&videos[0], k, SampleMode::Uniform { index: 0, count: 1 })?;

    let mut layer = TsLayerParams::init(k, d, &mut ChaCha8Rng::seed_from_u64(0))?;
    let before = ts_forward(&clip, &layer)?;
    save_squeezed(&before.squeezed().y, out.join("init"))?;

    let history = fit_hyperplane(&clip, &mut layer, 300, 0.01, 0.9)?;
    let after = ts_forward(&clip, &layer)?;
    save_squeezed(&after.squeezed().y, out.join("fitted"))?;

    let norm = mean_pixel_norm(&clip);
    for (step, r) in history.iter().enumerate().step_by(50) {
        println!("step {step:3}: residual {r:.4e} ({:.2}% of mean pixel norm)", 100.0 * r / norm);
    }
    println!("final    residual {:.4e}", after.residual());
    println!("images in {}", out.display());
    Ok(())
}
