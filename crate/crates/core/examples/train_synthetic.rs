//! Trains the toy network on the forward/reversed moving-square pair and
//! compares it with the temporal-mean baseline, which cannot beat chance.
//!
//! cargo run --release --example train_synthetic [epochs]

use temporal_squeeze::data::{generate, train_test_split, SyntheticSpec};
use temporal_squeeze::network::{NetworkConfig, TemporalPooling};
use temporal_squeeze::train::{evaluate_checkpoint, train, TrainConfig};

fn main() -> temporal_squeeze::Result<()> {
    let epochs = std::env::args().nth(1).map_or(30, |s| s.parse().expect("epochs"));
    let spec = SyntheticSpec::reversal_pair(16, 16, 7);
    let videos = generate::<f64>(&spec, 125)?;
    let (train_set, test_set) = train_test_split(&videos, 0.2, 7);
    println!("{} train / {} test videos", train_set.len(), test_set.len());

    let cfg = TrainConfig { epochs, lr: 0.05, seed: 1, ..TrainConfig::default() };
    for pooling in [TemporalPooling::Squeeze, TemporalPooling::Mean] {
        let mut net = NetworkConfig::toy(8, 2, 1, 2);
        net.pooling = pooling;
        let t0 = std::time::Instant::now();
        let out = train(&train_set, &test_set, &net, &cfg, |m, _| {
            println!(
                "  epoch {:2} loss {:.4} (ce {:.4}) val {:.3} lr {}",
                m.epoch, m.loss.total, m.loss.classif, m.val_acc, m.lr
            );
            Ok(())
        })?;
        let acc = evaluate_checkpoint(&out.checkpoint, &test_set, cfg.eval_clips_per_video, false)?.accuracy;
        println!("{pooling:?}: test accuracy {acc:.3} ({:.1?})", t0.elapsed());
    }
    Ok(())
}
