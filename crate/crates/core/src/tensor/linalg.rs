use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// `a · b` for `a: m×k`, `b: k×n`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::Shape(format!("matmul {m}x{k} by {k2}x{n}")));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &b) in row.iter_mut().zip(brow) {
                *o = *o + aip * b;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `aᵀ · b` for `a: k×m`, `b: k×n`, without materializing the transpose.
pub fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (k, m) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::Shape(format!("matmul_tn ({k}x{m})ᵀ by {k2}x{n}")));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); m * n];
    for p in 0..k {
        let brow = &bd[p * n..(p + 1) * n];
        for i in 0..m {
            let api = ad[p * m + i];
            if api == T::zero() {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &b) in row.iter_mut().zip(brow) {
                *o = *o + api * b;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `a · bᵀ` for `a: m×k`, `b: n×k`.
pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (n, k2) = b.dims2()?;
    if k != k2 {
        return Err(Error::Shape(format!("matmul_nt {m}x{k} by ({n}x{k2})ᵀ")));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &bd[j * k..(j + 1) * k];
            out.push(arow.iter().zip(brow).map(|(&x, &y)| x * y).sum());
        }
    }
    Tensor::new(vec![m, n], out)
}

pub fn transpose<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = a.dims2()?;
    let d = a.data();
    let mut out = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            out.push(d[i * n + j]);
        }
    }
    Tensor::new(vec![n, m], out)
}

/// Lower-triangular Cholesky factor `L` with `m = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn factor(m: &Tensor<T>) -> Result<Self> {
        let (n, n2) = m.dims2()?;
        if n != n2 {
            return Err(Error::Shape(format!("cholesky of non-square {n}x{n2}")));
        }
        let a = m.data();
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for p in 0..j {
                d = d - l[j * n + p] * l[j * n + p];
            }
            // `!(d > 0)` also catches NaN.
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::Singular {
                    index: j,
                    value: d.to_f64_lossy(),
                });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for p in 0..j {
                    s = s - l[i * n + p] * l[j * n + p];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The factor `L` as an `n×n` tensor.
    pub fn lower(&self) -> Tensor<T> {
        Tensor::new(vec![self.n, self.n], self.l.clone()).expect("square factor")
    }

    /// Solves `m · s = rhs` for every column of `rhs: n×cols`.
    pub fn solve(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (r, _) = rhs.dims2()?;
        if r != self.n {
            return Err(Error::Shape(format!(
                "solve: system is {0}x{0}, rhs has {r} rows",
                self.n
            )));
        }
        let mut out = rhs.clone();
        self.solve_in_place(&mut out);
        Ok(out)
    }

    /// In-place column-batched forward then backward substitution on a
    /// row-major `n×cols` buffer. Rows are updated as whole slices so the
    /// inner loop runs over contiguous memory.
    pub fn solve_in_place(&self, rhs: &mut Tensor<T>) {
        let n = self.n;
        let cols = rhs.len() / n;
        let x = rhs.data_mut();
        let l = &self.l;
        // L · w = b
        for i in 0..n {
            for p in 0..i {
                let lip = l[i * n + p];
                let (head, tail) = x.split_at_mut(i * cols);
                let src = &head[p * cols..(p + 1) * cols];
                for (xi, &xp) in tail[..cols].iter_mut().zip(src) {
                    *xi = *xi - lip * xp;
                }
            }
            let inv = T::one() / l[i * n + i];
            for xi in &mut x[i * cols..(i + 1) * cols] {
                *xi = *xi * inv;
            }
        }
        // Lᵀ · s = w
        for i in (0..n).rev() {
            for p in i + 1..n {
                let lpi = l[p * n + i];
                let (head, tail) = x.split_at_mut(p * cols);
                let dst = &mut head[i * cols..(i + 1) * cols];
                for (xi, &xp) in dst.iter_mut().zip(&tail[..cols]) {
                    *xi = *xi - lpi * xp;
                }
            }
            let inv = T::one() / l[i * n + i];
            for xi in &mut x[i * cols..(i + 1) * cols] {
                *xi = *xi * inv;
            }
        }
    }
}

/// Solves `m · s = rhs` for symmetric positive definite `m` via Cholesky.
pub fn solve_spd<T: Scalar>(m: &Tensor<T>, rhs: &Tensor<T>) -> Result<Tensor<T>> {
    Cholesky::factor(m)?.solve(rhs)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn naive(a: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
        let (m, k) = a.dims2().unwrap();
        let (_, n) = b.dims2().unwrap();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a.at(&[i, p]) * b.at(&[p, j]);
                }
            }
        }
        out
    }

    #[test]
    fn identity_product() {
        let a = Tensor::<f64>::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let p = matmul(&Tensor::identity(2), &a).unwrap();
        assert_eq!(p, a);
    }

    #[test]
    fn hand_sum() {
        let a = Tensor::<f64>::from_rows(&[&[1.0, 1.0]]);
        let b = Tensor::<f64>::from_rows(&[&[2.0], &[4.0]]);
        let p = matmul(&a, &b).unwrap();
        assert_eq!(p.shape(), &[1, 1]);
        assert_eq!(p.data(), &[6.0]);
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &a), Err(Error::Shape(_))));
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, &[5, 4]);
        let b = random(&mut rng, &[4, 3]);
        let p = matmul(&a, &b).unwrap();
        for (x, y) in p.data().iter().zip(naive(&a, &b)) {
            assert!((x - y).abs() < 1e-12);
        }
        let pt = matmul_tn(&transpose(&a).unwrap(), &b).unwrap();
        let pn = matmul_nt(&a, &transpose(&b).unwrap()).unwrap();
        for ((x, y), z) in p.data().iter().zip(pt.data()).zip(pn.data()) {
            assert!((x - y).abs() < 1e-12 && (x - z).abs() < 1e-12);
        }
    }

    #[test]
    fn associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let a = random(&mut rng, &[3, 4]);
            let b = random(&mut rng, &[4, 5]);
            let c = random(&mut rng, &[5, 2]);
            let l = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let r = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            assert!(l.sub(&r).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn solve_identity_and_scalar() {
        let r = Tensor::<f64>::from_rows(&[&[1.0, -2.0], &[3.0, 0.5], &[7.0, 1.0]]);
        assert_eq!(solve_spd(&Tensor::identity(3), &r).unwrap(), r);
        let s = solve_spd(
            &Tensor::<f64>::from_rows(&[&[2.0]]),
            &Tensor::<f64>::from_rows(&[&[6.0]]),
        )
        .unwrap();
        assert!((s.data()[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn solve_random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m0 = random(&mut rng, &[4, 4]);
            let m = matmul_tn(&m0, &m0).unwrap().add(&Tensor::identity(4)).unwrap();
            let rhs = random(&mut rng, &[4, 3]);
            let s = solve_spd(&m, &rhs).unwrap();
            let back = matmul(&m, &s).unwrap();
            assert!(back.sub(&rhs).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn non_spd_reports_pivot() {
        let m = Tensor::<f64>::from_rows(&[&[1.0, 0.0], &[0.0, -1.0]]);
        match Cholesky::factor(&m) {
            Err(Error::Singular { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
        let z = Tensor::<f64>::zeros(&[3, 3]);
        assert!(matches!(Cholesky::factor(&z), Err(Error::Singular { index: 0, .. })));
        let nan = Tensor::<f64>::full(&[1, 1], f64::NAN);
        assert!(Cholesky::factor(&nan).is_err());
    }

    #[test]
    fn lower_factor_reproduces_matrix() {
        let m = Tensor::<f64>::from_rows(&[&[4.0, 2.0], &[2.0, 3.0]]);
        let l = Cholesky::factor(&m).unwrap().lower();
        let back = matmul_nt(&l, &l).unwrap();
        assert!(back.sub(&m).unwrap().max_abs() < 1e-14);
    }
}
