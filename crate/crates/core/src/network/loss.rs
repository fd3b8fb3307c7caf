use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Components of `classif + β·Σ proj + λ·l2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub classif: f64,
    /// One entry per temporal squeeze layer, shallow to deep.
    pub proj_terms: Vec<f64>,
    /// `½ Σ w²` over all weight tensors (biases excluded).
    pub l2: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(classif: f64, proj_terms: Vec<f64>, l2: f64, beta: f64, lambda: f64) -> Self {
        let total = Self::recompose(classif, &proj_terms, l2, beta, lambda);
        Self {
            classif,
            proj_terms,
            l2,
            total,
        }
    }

    /// The weighted addends of `total`: classification, `beta·proj_m` for each
    /// layer, then `lambda·l2`.
    pub fn weighted_terms(&self, beta: f64, lambda: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.proj_terms.len() + 2);
        out.push(self.classif);
        out.extend(self.proj_terms.iter().map(|p| beta * p));
        out.push(lambda * self.l2);
        out
    }

    /// The single place the total is assembled; summation runs in layer order.
    pub fn recompose(classif: f64, proj_terms: &[f64], l2: f64, beta: f64, lambda: f64) -> f64 {
        let proj: f64 = proj_terms.iter().sum();
        classif + beta * proj + lambda * l2
    }
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&x| (x - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// `−log softmax(logits)[label]` via log-sum-exp.
///
/// When the label already has the largest logit the loss is computed as
/// `ln(1 + Σ_{j≠label} exp(z_j − z_label))`, which keeps full relative
/// accuracy for a confident, correct prediction.
pub fn cross_entropy<T: Scalar>(logits: &[T], label: usize) -> T {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let z = logits[label];
    if z >= m {
        let rest: T = logits
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != label)
            .map(|(_, &x)| (x - z).exp())
            .sum();
        return rest.ln_1p();
    }
    let lse = m + logits.iter().map(|&x| (x - m).exp()).sum::<T>().ln();
    lse - z
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax<T: Scalar>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Averages per-video class scores of two streams (e.g. RGB and optical flow).
pub fn fuse_streams<T: Scalar>(a: &[Vec<T>], b: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "stream score lists cover {} and {} videos",
            a.len(),
            b.len()
        )));
    }
    let half = T::of(0.5);
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| {
            if x.len() != y.len() {
                return Err(Error::Shape(format!(
                    "video {i}: {} vs {} class scores",
                    x.len(),
                    y.len()
                )));
            }
            Ok(x.iter().zip(y).map(|(&p, &q)| (p + q) * half).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one_and_is_stable() {
        let p = softmax(&[1000.0f64, 1001.0, 999.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn cross_entropy_hand_values() {
        assert!((cross_entropy(&[0.0f64, 0.0], 1) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(cross_entropy(&[3.5f64], 0), 0.0);
        let big = cross_entropy(&[1000.0f64, 0.0], 1);
        assert!((big - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5f64, 0.5]), 0);
        assert_eq!(argmax(&[0.1f64, 0.7, 0.7]), 1);
    }

    #[test]
    fn fusion() {
        let a = vec![vec![1.0f64, 0.0]];
        let b = vec![vec![0.0f64, 1.0]];
        let f = fuse_streams(&a, &b).unwrap();
        assert_eq!(f, vec![vec![0.5, 0.5]]);
        assert_eq!(argmax(&f[0]), 0);
        assert_eq!(fuse_streams(&a, &a).unwrap(), a);
        assert!(fuse_streams(&a, &[]).is_err());
        assert!(fuse_streams(&a, &[vec![1.0]]).is_err());
    }

    #[test]
    fn fusion_hand_averages() {
        let a = vec![vec![0.2f64, 0.5, 0.3], vec![0.9, 0.05, 0.05], vec![0.1, 0.1, 0.8]];
        let b = vec![vec![0.6f64, 0.1, 0.3], vec![0.3, 0.6, 0.1], vec![0.5, 0.4, 0.1]];
        let expect = [[0.4, 0.3, 0.3], [0.6, 0.325, 0.075], [0.3, 0.25, 0.45]];
        let f = fuse_streams(&a, &b).unwrap();
        for (row, e) in f.iter().zip(expect) {
            for (x, y) in row.iter().zip(e) {
                assert!((x - y).abs() < 1e-15);
            }
        }
        let preds: Vec<usize> = f.iter().map(|s| argmax(s)).collect();
        assert_eq!(preds, vec![0, 0, 2]);
    }

    #[test]
    fn total_recomposes() {
        let l = LossBreakdown::compose(0.7, vec![0.1, 0.05], 12.5, 10.0, 4e-5);
        assert_eq!(l.total, 0.7 + 10.0 * (0.1 + 0.05) + 4e-5 * 12.5);
    }
}
