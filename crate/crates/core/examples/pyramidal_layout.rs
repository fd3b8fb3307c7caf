//! Loads a network config with two squeeze layers and prints how the
//! temporal extent shrinks, the parameter shapes and one forward pass.
//!
//! cargo run --example pyramidal_layout [config.json]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use temporal_squeeze::network::{Network, NetworkConfig};
use temporal_squeeze::tensor::Tensor;
use temporal_squeeze::tspool::ClipTensor;

fn main() -> temporal_squeeze::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/block1_d3_head_d1.json").into());
    let cfg = NetworkConfig::load(&path)?;
    for (p, len) in cfg.ts_placements.iter().zip(cfg.placement_input_lengths()) {
        println!("squeeze before block {}: {len} frames -> {}", p.block, p.d);
    }
    println!("frames reaching the head: {}", cfg.head_frames());

    let net = Network::new(cfg.clone())?;
    for (name, shape) in net.param_shapes() {
        println!("  {name:12} {shape:?}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = net.init_params::<f64>(&mut rng)?;
    let clip = ClipTensor::new(Tensor::from_fn(&[cfg.k, 24, 24, cfg.in_channels], |_| rng.random_range(0.0..1.0)))?;
    let pass = net.forward(&params, &[clip], &[0], false)?;
    let l = &pass.loss;
    println!("classif {:.4}  proj {:?}  l2 {:.3}  total {:.4}", l.classif, l.proj_terms, l.l2, l.total);
    Ok(())
}
