//! Randomized properties of the projection, tensor files, data generation
//! and the optimizer step.

mod common;

use common::*;
use proptest::prelude::*;
use temporal_squeeze::data::{generate, SyntheticSpec};
use temporal_squeeze::grad::ParamSet;
use temporal_squeeze::tensor::{matmul_tn, read_tensor_from, write_tensor_to, AnyTensor, Tensor};
use temporal_squeeze::train::sgd_step;
use temporal_squeeze::tspool::*;

const RIDGE: f64 = 1e-12;

#[derive(Debug)]
struct Instance {
    a: Tensor<f64>,
    clip: ClipTensor<f64>,
}

/// K in 2..=8, D in 1..=K, frames up to 3×3×2, well-conditioned A.
fn instance() -> impl Strategy<Value = Instance> {
    (2usize..=8, any::<u64>()).prop_flat_map(|(k, seed)| {
        (1usize..=k, 1usize..=3, 1usize..=3, 1usize..=2).prop_map(move |(d, h, w, c)| {
            let mut r = rng(seed);
            let a = conditioned(&mut r, k, d);
            Instance { a, clip: random_clip(&mut r, k, h, w, c) }
        })
    })
}

fn project(a: &Tensor<f64>, clip: &ClipTensor<f64>) -> SqueezedClip<f64> {
    let (k, d) = (a.shape()[0], a.shape()[1]);
    let layer = TsLayerParams::init(k, d, &mut rng(0)).unwrap().with_ridge(RIDGE, RidgeMode::Fixed).unwrap();
    project_clip(clip, &build_hyperplane(a, &layer).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent(inst in instance()) {
        let once = project(&inst.a, &inst.clip);
        let twice = project(&inst.a, &ClipTensor::new(once.x_hat.clone()).unwrap());
        prop_assert!(twice.x_hat.sub(&once.x_hat).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn residual_is_orthogonal_to_the_basis(inst in instance()) {
        let out = project(&inst.a, &inst.clip);
        let (k, p) = (inst.clip.k(), inst.clip.pixels());
        let r = inst.clip.as_matrix().sub(&out.x_hat.reshaped(&[k, p]).unwrap()).unwrap();
        prop_assert!(matmul_tn(&inst.a, &r).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn residual_is_nonnegative_and_bounded_by_the_clip(inst in instance()) {
        let out = project(&inst.a, &inst.clip);
        prop_assert!(out.residual >= 0.0);
        prop_assert!(out.residual <= mean_pixel_norm(&inst.clip) + 1e-12);
    }

    #[test]
    fn full_basis_reproduces_the_clip(k in 2usize..=8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = conditioned(&mut r, k, k);
        let clip = random_clip(&mut r, k, 2, 2, 1);
        let out = project(&a, &clip);
        prop_assert!(out.residual < 1e-9);
        prop_assert!(out.x_hat.sub(clip.frames()).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn tensor_file_round_trip_is_bit_exact(
        dims in prop::collection::vec(1usize..=4, 1..=4),
        seed in any::<u64>(),
    ) {
        let n: usize = dims.iter().product();
        let mut r = rng(seed);
        let t64 = uniform_tensor(&mut r, &[n], -1e6, 1e6).reshape(&dims).unwrap();
        let t32: Tensor<f32> = t64.cast();
        for any in [AnyTensor::F64(t64), AnyTensor::F32(t32)] {
            let mut buf = Vec::new();
            match &any {
                AnyTensor::F64(t) => write_tensor_to(t, &mut buf),
                AnyTensor::F32(t) => write_tensor_to(t, &mut buf),
            }
            let (back, used) = read_tensor_from(&buf).unwrap();
            prop_assert_eq!(used, buf.len());
            let mut again = Vec::new();
            match &back {
                AnyTensor::F64(t) => write_tensor_to(t, &mut again),
                AnyTensor::F32(t) => write_tensor_to(t, &mut again),
            }
            prop_assert_eq!(&buf, &again);
            prop_assert_eq!(back, any);
        }
    }

    #[test]
    fn synthetic_data_depends_only_on_the_seed(seed in any::<u64>(), classes in 2usize..=4) {
        let spec = SyntheticSpec { num_classes: classes, noise_std: 0.05, seed, ..SyntheticSpec::reversal_pair(6, 8, seed) };
        let a = generate::<f64>(&spec, 2).unwrap();
        let b = generate::<f64>(&spec, 2).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged(seed in any::<u64>(), momentum in 0.0f64..0.99) {
        let mut r = rng(seed);
        let mut params = ParamSet::new();
        params.insert("w", uniform_tensor(&mut r, &[3, 2], -1.0, 1.0)).unwrap();
        params.insert("b", uniform_tensor(&mut r, &[2], -1.0, 1.0)).unwrap();
        let mut grads = params.zeros_like();
        for (_, g) in grads.iter_mut() {
            *g = uniform_tensor(&mut r, g.shape(), -1.0, 1.0);
        }
        let before = params.clone();
        let mut velocity = params.zeros_like();
        sgd_step(&mut params, &grads, &mut velocity, 0.0, momentum).unwrap();
        prop_assert_eq!(params, before);
    }
}
