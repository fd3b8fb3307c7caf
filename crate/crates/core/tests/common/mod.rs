//! Independent oracles shared by the integration tests. Nothing here calls
//! into the projection or gradient code paths under test.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use temporal_squeeze::tensor::Tensor;
use temporal_squeeze::tspool::ClipTensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

pub fn random_clip(rng: &mut ChaCha8Rng, k: usize, h: usize, w: usize, c: usize) -> ClipTensor<f64> {
    ClipTensor::new(uniform_tensor(rng, &[k, h, w, c], 0.0, 1.0)).unwrap()
}

/// Dense inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub struct PixelFit {
    pub y: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub norm: f64,
}

/// Per-pixel normal-equations fit `y = (AᵀA + εI)⁻¹ Aᵀ x`, `x̂ = A y`.
pub fn normal_equations(a: &Tensor<f64>, ridge: f64, x: &[f64]) -> PixelFit {
    let (k, d) = (a.shape()[0], a.shape()[1]);
    let mut gram = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            for t in 0..k {
                gram[i][j] += a.at(&[t, i]) * a.at(&[t, j]);
            }
        }
        gram[i][i] += ridge;
    }
    let inv = gauss_jordan_inverse(&gram);
    let atx: Vec<f64> = (0..d).map(|i| (0..k).map(|t| a.at(&[t, i]) * x[t]).sum()).collect();
    let y: Vec<f64> = (0..d).map(|i| (0..d).map(|j| inv[i][j] * atx[j]).sum()).collect();
    let x_hat: Vec<f64> = (0..k).map(|t| (0..d).map(|i| a.at(&[t, i]) * y[i]).sum()).collect();
    let norm = x.iter().zip(&x_hat).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    PixelFit { y, x_hat, norm }
}

/// Temporal pixel vector `i` of a `K×H×W×C` clip, read with explicit loops.
pub fn pixel_vector(clip: &ClipTensor<f64>, i: usize) -> Vec<f64> {
    let k = clip.k();
    let p = clip.pixels();
    (0..k).map(|t| clip.frames().data()[t * p + i]).collect()
}

/// Well-conditioned `rows×cols` with `cols <= rows`: orthonormal columns
/// (Gram-Schmidt) times column scales in [0.5, 2], so cond <= 4. The normal
/// equations square the condition number, and plain uniform draws reach
/// cond ~1e4, which is beyond what the 1e-9 bounds can absorb.
pub fn conditioned(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let mut q = uniform_tensor(r, &[rows, cols], -1.0, 1.0);
    for j in 0..cols {
        for prev in 0..j {
            let dot: f64 = (0..rows).map(|i| q.at(&[i, j]) * q.at(&[i, prev])).sum();
            for i in 0..rows {
                let v = q.at(&[i, j]) - dot * q.at(&[i, prev]);
                q.set(&[i, j], v);
            }
        }
        let n: f64 = (0..rows).map(|i| q.at(&[i, j]).powi(2)).sum::<f64>().sqrt();
        for i in 0..rows {
            let v = q.at(&[i, j]) / n;
            q.set(&[i, j], v);
        }
    }
    for j in 0..cols {
        let s = r.random_range(0.5..2.0);
        for i in 0..rows {
            let v = q.at(&[i, j]) * s;
            q.set(&[i, j], v);
        }
    }
    q
}
