//! Trains for a few epochs, writes a checkpoint, reloads it and scores the
//! held-out videos from several evenly spaced clips each.
//!
//! cargo run --release --example checkpoint_eval

use temporal_squeeze::data::{generate, train_test_split, SyntheticSpec};
use temporal_squeeze::network::NetworkConfig;
use temporal_squeeze::train::{evaluate_checkpoint, train, Checkpoint, TrainConfig};

fn main() -> temporal_squeeze::Result<()> {
    let videos = generate::<f64>(&SyntheticSpec::reversal_pair(16, 16, 2), 40)?;
    let (train_set, test_set) = train_test_split(&videos, 0.25, 2);
    let cfg = TrainConfig { epochs: 15, lr: 0.05, seed: 3, eval_clips_per_video: 5, ..TrainConfig::default() };
    let out = train(&train_set, &test_set, &NetworkConfig::toy(8, 2, 1, 2), &cfg, |_, _| Ok(()))?;

    let path = std::env::temp_dir().join("checkpoint_eval.tsqc");
    out.checkpoint.save(&path)?;
    let loaded = Checkpoint::<f64>::load(&path)?;
    println!("reloaded epoch {} checkpoint from {}", loaded.epoch, path.display());

    let report = evaluate_checkpoint(&loaded, &test_set, 5, false)?;
    for v in report.videos.iter().take(6) {
        println!("  {:14} label {} predicted {} scores {:.3?}", v.id, v.label, v.predicted, v.scores);
    }
    println!("accuracy {:.3} over {} videos", report.accuracy, report.videos.len());
    Ok(())
}
