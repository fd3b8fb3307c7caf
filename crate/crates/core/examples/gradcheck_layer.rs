//! Compares the analytic gradient of `⟨probe, y⟩ + residual` with central
//! differences, for the clip and both excitation weights.
//!
//! cargo run --example gradcheck_layer

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use temporal_squeeze::grad::{fd_check, ParamSet, DEFAULT_FD_STEP, DEFAULT_FD_TOL};
use temporal_squeeze::tensor::Tensor;
use temporal_squeeze::tspool::{ts_backward, ts_forward, ClipTensor, TsLayerParams};

fn main() -> temporal_squeeze::Result<()> {
    let (k, d) = (6, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let clip = ClipTensor::new(Tensor::from_fn(&[k, 3, 3, 1], |_| rng.random_range(0.0..1.0)))?;
    let layer = TsLayerParams::<f64>::init(k, d, &mut rng)?;
    let probe = Tensor::from_fn(&[d, 3, 3, 1], |_| rng.random_range(-1.0..1.0));

    let state = ts_forward(&clip, &layer)?;
    let g = ts_backward(&state, &layer, &probe, 1.0)?;

    let mut params = ParamSet::new();
    params.insert("clip", clip.frames().clone())?;
    params.insert("w1", layer.w1.clone())?;
    params.insert("w2", layer.w2.clone())?;
    let mut analytic = ParamSet::new();
    analytic.insert("clip", g.clip)?;
    analytic.insert("w1", g.w1)?;
    analytic.insert("w2", g.w2)?;

    let objective = |p: &ParamSet<f64>| {
        let mut l = layer.clone();
        l.w1 = p.get("w1")?.clone();
        l.w2 = p.get("w2")?.clone();
        let s = ts_forward(&ClipTensor::new(p.get("clip")?.clone())?, &l)?;
        let dot: f64 = s.squeezed().y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
        Ok(dot + s.residual())
    };
    let report = fd_check(objective, &params, &analytic, DEFAULT_FD_STEP, DEFAULT_FD_TOL)?;
    println!("{report}");
    Ok(())
}
