//! Trains one network on raw frames and one on frame differences, then
//! averages their per-video scores.
//!
//! cargo run --release --example two_stream_fusion [epochs]

use temporal_squeeze::data::{generate, train_test_split, SyntheticSpec, VideoRecord};
use temporal_squeeze::network::{argmax, fuse_streams, NetworkConfig};
use temporal_squeeze::tensor::Tensor;
use temporal_squeeze::train::{evaluate_checkpoint, train, TrainConfig};
use temporal_squeeze::tspool::ClipTensor;

/// Frame `t+1` minus frame `t`; one frame shorter than the input.
fn differences(v: &VideoRecord<f64>) -> temporal_squeeze::Result<VideoRecord<f64>> {
    let f = v.frames.frames();
    let per = v.frames.pixels();
    let (h, w, c) = v.frames.frame_dims();
    let data: Vec<f64> = (per..f.len()).map(|i| f.data()[i] - f.data()[i - per]).collect();
    let frames = ClipTensor::new(Tensor::new(vec![v.frames.k() - 1, h, w, c], data)?)?;
    Ok(VideoRecord { frames, ..v.clone() })
}

fn main() -> temporal_squeeze::Result<()> {
    let epochs = std::env::args().nth(1).map_or(10, |s| s.parse().expect("epochs"));
    let spec = SyntheticSpec { num_classes: 4, noise_std: 0.05, ..SyntheticSpec::reversal_pair(16, 16, 4) };
    let videos = generate::<f64>(&spec, 40)?;
    let (train_rgb, test_rgb) = train_test_split(&videos, 0.25, 4);
    let diff = |s: &[VideoRecord<f64>]| s.iter().map(differences).collect::<temporal_squeeze::Result<Vec<_>>>();
    let (train_diff, test_diff) = (diff(&train_rgb)?, diff(&test_rgb)?);

    let cfg = TrainConfig { epochs, lr: 0.05, seed: 1, eval_clips_per_video: 5, ..TrainConfig::default() };
    let net = NetworkConfig::toy(8, 2, 1, 4);
    let mut scores = Vec::new();
    for (name, tr, te) in [("frames", &train_rgb, &test_rgb), ("differences", &train_diff, &test_diff)] {
        let out = train(tr, te, &net, &cfg, |_, _| Ok(()))?;
        let report = evaluate_checkpoint(&out.checkpoint, te, 5, false)?;
        println!("{name:12} accuracy {:.3}", report.accuracy);
        scores.push(report.videos.into_iter().map(|v| v.scores).collect::<Vec<_>>());
    }

    let fused = fuse_streams(&scores[0], &scores[1])?;
    let correct = fused.iter().zip(&test_rgb).filter(|(s, v)| argmax(s) == v.label).count();
    println!("fused        accuracy {:.3}", correct as f64 / test_rgb.len() as f64);
    Ok(())
}
