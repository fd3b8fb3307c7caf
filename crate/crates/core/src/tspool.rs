//! The temporal squeeze layer.
//!
//! A clip of `K` frames is viewed as `H·W·C` temporal pixel vectors in
//! `R^K`. A frame descriptor `z` (global average of each frame) drives two
//! bias-free fully connected layers (sigmoid, then leaky ReLU) whose output
//! is reshaped into a `K×D` matrix `A`. Every pixel vector is then
//! least-squares projected onto the column space of `A`; the `D`
//! coefficients per pixel form the squeezed images, and the mean norm of
//! the projection residuals is the layer's auxiliary loss.
//!
//! Forward and backward passes are hand-derived. The backward pass goes
//! through the normal-equation solve using `d(G⁻¹) = −G⁻¹ dG G⁻¹`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_nt, matmul_tn, Cholesky, Scalar, Tensor};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;
pub const DEFAULT_RIDGE_EPS: f64 = 1e-8;
/// Half-width of the uniform perturbation added to the initial hyperplane.
pub const INIT_NOISE: f64 = 1e-2;

/// Order used to fold the `K·D` excitation output into the `K×D` matrix:
/// element `k·D + d` becomes `A[k][d]` (frame index major).
pub const RESHAPE_ORDER: &str = "frame-major";

/// How the ridge added to the normal equations is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RidgeMode {
    /// `ε = ridge_eps`.
    Fixed,
    /// `ε = ridge_eps · (1 + trace(AᵀA) / D)`, so the ridge tracks the scale of `A`.
    #[default]
    TraceScaled,
}

/// A `K×H×W×C` stack of frames (or of feature maps when the layer sits
/// inside a network).
#[derive(Debug, Clone, PartialEq)]
pub struct ClipTensor<T> {
    frames: Tensor<T>,
}

impl<T: Scalar> ClipTensor<T> {
    pub fn new(frames: Tensor<T>) -> Result<Self> {
        if frames.rank() != 4 {
            return Err(Error::Shape(format!(
                "clip must be K×H×W×C, got shape {:?}",
                frames.shape()
            )));
        }
        Ok(Self { frames })
    }

    /// Like [`ClipTensor::new`] but also requires image intensities in `[0, 1]`.
    pub fn from_images(frames: Tensor<T>) -> Result<Self> {
        let clip = Self::new(frames)?;
        if let Some(bad) = clip
            .frames
            .data()
            .iter()
            .find(|&&x| !(x >= T::zero() && x <= T::one()))
        {
            return Err(Error::Data(format!("image intensity {bad} outside [0, 1]")));
        }
        Ok(clip)
    }

    pub fn k(&self) -> usize {
        self.frames.shape()[0]
    }

    /// `(H, W, C)`.
    pub fn frame_dims(&self) -> (usize, usize, usize) {
        let s = self.frames.shape();
        (s[1], s[2], s[3])
    }

    /// Number of temporal pixel vectors, `H·W·C`.
    pub fn pixels(&self) -> usize {
        self.frames.len() / self.k()
    }

    pub fn frames(&self) -> &Tensor<T> {
        &self.frames
    }

    pub fn into_frames(self) -> Tensor<T> {
        self.frames
    }

    /// The clip as a `K × (H·W·C)` matrix; column `i` is pixel vector `x̄ᵢ`.
    pub fn as_matrix(&self) -> Tensor<T> {
        self.frames
            .reshaped(&[self.k(), self.pixels()])
            .expect("clip is non-empty")
    }
}

/// Weights and shape configuration of one temporal squeeze layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TsLayerParams<T> {
    /// `K×K`.
    pub w1: Tensor<T>,
    /// `(K·D)×K`.
    pub w2: Tensor<T>,
    pub d: usize,
    pub leaky_slope: f64,
    pub ridge_eps: f64,
    pub ridge_mode: RidgeMode,
}

impl<T: Scalar> TsLayerParams<T> {
    pub fn new(w1: Tensor<T>, w2: Tensor<T>, d: usize) -> Result<Self> {
        let p = Self {
            w1,
            w2,
            d,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            ridge_eps: DEFAULT_RIDGE_EPS,
            ridge_mode: RidgeMode::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_ridge(mut self, ridge_eps: f64, mode: RidgeMode) -> Result<Self> {
        self.ridge_eps = ridge_eps;
        self.ridge_mode = mode;
        self.validate()?;
        Ok(self)
    }

    pub fn with_leaky_slope(mut self, slope: f64) -> Self {
        self.leaky_slope = slope;
        self
    }

    pub fn k(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn validate(&self) -> Result<()> {
        let (k, k2) = self.w1.dims2()?;
        if k != k2 {
            return Err(Error::Shape(format!("w1 must be K×K, got {k}x{k2}")));
        }
        if self.d == 0 || self.d > k {
            return Err(Error::Config(format!(
                "squeezed length D={} must satisfy 1 <= D <= K={k}",
                self.d
            )));
        }
        if self.w2.shape() != [k * self.d, k] {
            return Err(Error::Shape(format!(
                "w2 must be {}x{k}, got {:?}",
                k * self.d,
                self.w2.shape()
            )));
        }
        if !(self.ridge_eps > 0.0) {
            return Err(Error::Config(format!("ridge_eps must be > 0, got {}", self.ridge_eps)));
        }
        Ok(())
    }

    /// Standard initialization.
    ///
    /// `W₁ ~ U(−1/√K, 1/√K)`. `W₂` is set so that at `z = 0` (sigmoid output
    /// `0.5·1`) the layer produces an orthonormal basis of the lowest `D`
    /// DCT-II temporal frequencies, plus `U(−0.01, 0.01)` noise. The basis is
    /// rotated inside that subspace so the constant vector has equal
    /// coefficients on every column; a static pixel then maps to `D` equal
    /// coefficients.
    pub fn init(k: usize, d: usize, rng: &mut impl Rng) -> Result<Self> {
        if k == 0 || d == 0 || d > k {
            return Err(Error::Config(format!(
                "squeezed length D={d} must satisfy 1 <= D <= K={k}"
            )));
        }
        let bound = 1.0 / (k as f64).sqrt();
        let u1 = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let w1 = Tensor::from_fn(&[k, k], |_| T::of(u1.sample(rng)));

        let basis = dct_basis(k, d);
        let noise = Uniform::new_inclusive(-INIT_NOISE, INIT_NOISE).expect("finite bound");
        let slope = DEFAULT_LEAKY_SLOPE;
        let mut w2 = Vec::with_capacity(k * d * k);
        for target in basis {
            let a = target + noise.sample(rng);
            // invert the leaky ReLU, then spread over the K inputs that all equal 0.5
            let v = if a >= 0.0 { a } else { a / slope };
            let row = 2.0 * v / k as f64;
            w2.extend(std::iter::repeat_n(T::of(row), k));
        }
        let w2 = Tensor::new(vec![k * d, k], w2)?;
        Self::new(w1, w2, d)
    }
}

/// Frame-major `K×D` orthonormal basis of the first `D` DCT-II vectors,
/// rotated by a Householder reflection mapping `e₁` to `1/√D`.
pub fn dct_basis(k: usize, d: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let kf = k as f64;
    let mut c = vec![0.0; k * d];
    for t in 0..k {
        for j in 0..d {
            let alpha = if j == 0 { (1.0 / kf).sqrt() } else { (2.0 / kf).sqrt() };
            c[t * d + j] = alpha * (PI * (2.0 * t as f64 + 1.0) * j as f64 / (2.0 * kf)).cos();
        }
    }
    if d == 1 {
        return c;
    }
    let inv = 1.0 / (d as f64).sqrt();
    let mut u = vec![-inv; d];
    u[0] += 1.0;
    let uu: f64 = u.iter().map(|x| x * x).sum();
    // Householder H = I − 2uuᵀ/uᵀu; output C·H
    let mut out = vec![0.0; k * d];
    for t in 0..k {
        let row = &c[t * d..(t + 1) * d];
        let proj: f64 = row.iter().zip(&u).map(|(a, b)| a * b).sum();
        for j in 0..d {
            out[t * d + j] = row[j] - 2.0 * proj * u[j] / uu;
        }
    }
    out
}

/// The projection subspace for one clip.
#[derive(Debug, Clone)]
pub struct Hyperplane<T> {
    a: Tensor<T>,
    gram: Tensor<T>,
    ridge: T,
    chol: Cholesky<T>,
}

impl<T: Scalar> Hyperplane<T> {
    /// `K×D`.
    pub fn a(&self) -> &Tensor<T> {
        &self.a
    }

    /// `AᵀA + εI`.
    pub fn gram(&self) -> &Tensor<T> {
        &self.gram
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn k(&self) -> usize {
        self.a.shape()[0]
    }

    pub fn d(&self) -> usize {
        self.a.shape()[1]
    }
}

/// Output of the layer for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct SqueezedClip<T> {
    /// `D×H×W×C` coefficient images, the layer's downstream output.
    pub y: Tensor<T>,
    /// `K×H×W×C` projection of the input.
    pub x_hat: Tensor<T>,
    /// Mean Euclidean norm of the per-pixel residuals.
    pub residual: T,
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn leaky_relu<T: Scalar>(x: T, slope: T) -> T {
    if x >= T::zero() {
        x
    } else {
        slope * x
    }
}

/// Frame descriptor: `z_k` is the mean of frame `k` over `H`, `W` and `C`.
pub fn squeeze_frames<T: Scalar>(clip: &ClipTensor<T>) -> Tensor<T> {
    clip.frames
        .reduce_mean(&[1, 2, 3])
        .expect("rank-4 clip always reduces")
}

struct Excited<T> {
    /// sigmoid output, length K
    s: Vec<T>,
    /// pre-activation of the second layer, length K·D
    v: Vec<T>,
    a_prime: Tensor<T>,
}

fn excite<T: Scalar>(z: &Tensor<T>, params: &TsLayerParams<T>) -> Result<Excited<T>> {
    let k = params.k();
    if z.len() != k {
        return Err(Error::Shape(format!(
            "descriptor has length {}, layer expects K={k}",
            z.len()
        )));
    }
    let zc = z.reshaped(&[k, 1])?;
    let u = matmul(&params.w1, &zc)?;
    let s: Vec<T> = u.data().iter().map(|&x| sigmoid(x)).collect();
    let sc = Tensor::new(vec![k, 1], s.clone())?;
    let v = matmul(&params.w2, &sc)?.into_data();
    let slope = T::of(params.leaky_slope);
    let a: Vec<T> = v.iter().map(|&x| leaky_relu(x, slope)).collect();
    let a_prime = Tensor::new(vec![k, params.d], a)?;
    Ok(Excited { s, v, a_prime })
}

/// `A′ = reshape(δ₂(W₂ · δ₁(W₁ · z)))` with `δ₁` = sigmoid, `δ₂` = leaky ReLU.
pub fn excitation<T: Scalar>(z: &Tensor<T>, params: &TsLayerParams<T>) -> Result<Tensor<T>> {
    Ok(excite(z, params)?.a_prime)
}

/// Uses `A = A′` and factorizes `AᵀA + εI`.
pub fn build_hyperplane<T: Scalar>(
    a_prime: &Tensor<T>,
    params: &TsLayerParams<T>,
) -> Result<Hyperplane<T>> {
    let (k, d) = a_prime.dims2()?;
    if k != params.k() || d != params.d {
        return Err(Error::Shape(format!(
            "hyperplane is {k}x{d}, layer expects {}x{}",
            params.k(),
            params.d
        )));
    }
    let mut gram = matmul_tn(a_prime, a_prime)?;
    let ridge = match params.ridge_mode {
        RidgeMode::Fixed => T::of(params.ridge_eps),
        RidgeMode::TraceScaled => {
            let tr = (0..d).map(|i| gram.data()[i * d + i]).sum::<T>();
            T::of(params.ridge_eps) * (T::one() + tr / T::of(d as f64))
        }
    };
    for i in 0..d {
        let g = &mut gram.data_mut()[i * d + i];
        *g = *g + ridge;
    }
    let chol = Cholesky::factor(&gram)?;
    Ok(Hyperplane {
        a: a_prime.clone(),
        gram,
        ridge,
        chol,
    })
}

/// Per-column Euclidean norms of a `K×P` matrix.
fn column_norms<T: Scalar>(r: &Tensor<T>) -> Vec<T> {
    let (k, p) = r.dims2().expect("matrix");
    let d = r.data();
    let mut acc = vec![T::zero(); p];
    for row in 0..k {
        for (a, &x) in acc.iter_mut().zip(&d[row * p..(row + 1) * p]) {
            *a = *a + x * x;
        }
    }
    acc.into_iter().map(|s| s.sqrt()).collect()
}

struct Projection<T> {
    x: Tensor<T>,
    y: Tensor<T>,
    x_hat: Tensor<T>,
    r: Tensor<T>,
    norms: Vec<T>,
}

fn project<T: Scalar>(clip: &ClipTensor<T>, h: &Hyperplane<T>) -> Result<Projection<T>> {
    if clip.k() != h.k() {
        return Err(Error::Shape(format!(
            "clip has K={} frames, hyperplane has {} rows",
            clip.k(),
            h.k()
        )));
    }
    let x = clip.as_matrix();
    let mut y = matmul_tn(&h.a, &x)?;
    h.chol.solve_in_place(&mut y);
    let x_hat = matmul(&h.a, &y)?;
    let r = x.sub(&x_hat)?;
    let norms = column_norms(&r);
    Ok(Projection {
        x,
        y,
        x_hat,
        r,
        norms,
    })
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::of(v.len() as f64)
}

fn package<T: Scalar>(clip: &ClipTensor<T>, d: usize, p: &Projection<T>) -> Result<SqueezedClip<T>> {
    let (hh, ww, cc) = clip.frame_dims();
    Ok(SqueezedClip {
        y: p.y.reshaped(&[d, hh, ww, cc])?,
        x_hat: p.x_hat.reshaped(&[clip.k(), hh, ww, cc])?,
        residual: mean(&p.norms),
    })
}

/// Least-squares projection of every temporal pixel vector onto `colspace(A)`,
/// done as one batched solve over all `H·W·C` pixels.
pub fn project_clip<T: Scalar>(clip: &ClipTensor<T>, h: &Hyperplane<T>) -> Result<SqueezedClip<T>> {
    let p = project(clip, h)?;
    package(clip, h.d(), &p)
}

/// `(1/HWC) · Σᵢ ‖x̄ᵢ − x̂ᵢ‖₂`.
pub fn proj_loss<T: Scalar>(clip: &ClipTensor<T>, squeezed: &SqueezedClip<T>) -> Result<T> {
    if squeezed.x_hat.shape() != clip.frames.shape() {
        return Err(Error::Shape(format!(
            "projection has shape {:?}, clip has {:?}",
            squeezed.x_hat.shape(),
            clip.frames.shape()
        )));
    }
    let x_hat = squeezed.x_hat.reshaped(&[clip.k(), clip.pixels()])?;
    let r = clip.as_matrix().sub(&x_hat)?;
    Ok(mean(&column_norms(&r)))
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct TsState<T> {
    squeezed: SqueezedClip<T>,
    frame_dims: (usize, usize, usize),
    z: Tensor<T>,
    s: Vec<T>,
    v: Vec<T>,
    hyperplane: Hyperplane<T>,
    x: Tensor<T>,
    y: Tensor<T>,
    r: Tensor<T>,
    norms: Vec<T>,
}

impl<T: Scalar> TsState<T> {
    pub fn squeezed(&self) -> &SqueezedClip<T> {
        &self.squeezed
    }

    pub fn into_squeezed(self) -> SqueezedClip<T> {
        self.squeezed
    }

    pub fn hyperplane(&self) -> &Hyperplane<T> {
        &self.hyperplane
    }

    pub fn descriptor(&self) -> &Tensor<T> {
        &self.z
    }

    pub fn residual(&self) -> T {
        self.squeezed.residual
    }

    /// Zeroes the cached residual vectors so the backward pass sees no
    /// gradient through the projection residual. Test hook.
    pub fn zero_residual_path(&mut self) {
        self.r = Tensor::zeros(self.r.shape());
        self.norms.iter_mut().for_each(|n| *n = T::zero());
    }
}

/// Squeeze, excitation, hyperplane construction and projection for one clip.
pub fn ts_forward<T: Scalar>(clip: &ClipTensor<T>, params: &TsLayerParams<T>) -> Result<TsState<T>> {
    params.validate()?;
    if clip.k() != params.k() {
        return Err(Error::Shape(format!(
            "clip has K={} frames, layer expects K={}",
            clip.k(),
            params.k()
        )));
    }
    let z = squeeze_frames(clip);
    let ex = excite(&z, params)?;
    let hyperplane = build_hyperplane(&ex.a_prime, params)?;
    let proj = project(clip, &hyperplane)?;
    let squeezed = package(clip, params.d, &proj)?;
    if !squeezed.residual.is_finite() {
        return Err(Error::Numerical("projection residual is not finite".into()));
    }
    Ok(TsState {
        squeezed,
        frame_dims: clip.frame_dims(),
        z,
        s: ex.s,
        v: ex.v,
        hyperplane,
        x: proj.x,
        y: proj.y,
        r: proj.r,
        norms: proj.norms,
    })
}

/// Gradients produced by [`ts_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct TsGrads<T> {
    /// `K×H×W×C`.
    pub clip: Tensor<T>,
    pub w1: Tensor<T>,
    pub w2: Tensor<T>,
}

/// Reverse pass of `grad_y · y + grad_residual · residual` with respect to
/// the input clip and both excitation weights.
pub fn ts_backward<T: Scalar>(
    state: &TsState<T>,
    params: &TsLayerParams<T>,
    grad_y: &Tensor<T>,
    grad_residual: T,
) -> Result<TsGrads<T>> {
    let h = &state.hyperplane;
    let (k, d) = (h.k(), h.d());
    let p = state.x.shape()[1];
    if k != params.k() || d != params.d {
        return Err(Error::State("forward state does not match layer parameters".into()));
    }
    if grad_y.len() != d * p {
        return Err(Error::Shape(format!(
            "grad_y has {} elements, expected {}",
            grad_y.len(),
            d * p
        )));
    }
    let grad_y = grad_y.reshaped(&[d, p])?;
    let a = &h.a;

    // residual = mean_i ‖rᵢ‖  ⇒  ∂/∂rᵢ = rᵢ / (P‖rᵢ‖)
    let mut g_r = Tensor::zeros(&[k, p]);
    if grad_residual != T::zero() {
        let scale = grad_residual / T::of(p as f64);
        let (gr, rd) = (g_r.data_mut(), state.r.data());
        for row in 0..k {
            for i in 0..p {
                let n = state.norms[i];
                if n > T::zero() {
                    gr[row * p + i] = scale * rd[row * p + i] / n;
                }
            }
        }
    }

    // r = x − x̂, x̂ = A·y
    let mut g_x = g_r.clone();
    let g_xhat = g_r.scale(-T::one());
    let mut g_a = matmul_nt(&g_xhat, &state.y)?;
    let mut g_ytot = grad_y;
    g_ytot.axpy(T::one(), &matmul_tn(a, &g_xhat)?)?;

    // y = G⁻¹·b with b = Aᵀx
    let mut g_b = g_ytot;
    h.chol.solve_in_place(&mut g_b);
    let g_gram = matmul_nt(&g_b, &state.y)?.scale(-T::one());
    g_a.axpy(T::one(), &matmul_nt(&state.x, &g_b)?)?;
    g_x.axpy(T::one(), &matmul(a, &g_b)?)?;

    // G = AᵀA + ε(A)·I
    let mut sym = g_gram.clone();
    {
        let gd = g_gram.data();
        for i in 0..d {
            for j in 0..d {
                sym.data_mut()[i * d + j] = gd[i * d + j] + gd[j * d + i];
            }
        }
    }
    g_a.axpy(T::one(), &matmul(a, &sym)?)?;
    if params.ridge_mode == RidgeMode::TraceScaled {
        let g_eps: T = (0..d).map(|i| g_gram.data()[i * d + i]).sum();
        let coeff = T::of(2.0 * params.ridge_eps) * g_eps / T::of(d as f64);
        g_a.axpy(coeff, a)?;
    }

    // A = leaky(v) reshaped frame-major
    let slope = T::of(params.leaky_slope);
    let g_v: Vec<T> = g_a
        .data()
        .iter()
        .zip(&state.v)
        .map(|(&g, &v)| if v >= T::zero() { g } else { g * slope })
        .collect();

    // v = W₂·s
    let s = &state.s;
    let mut g_w2 = Vec::with_capacity(k * d * k);
    for &gv in &g_v {
        g_w2.extend(s.iter().map(|&sj| gv * sj));
    }
    let g_w2 = Tensor::new(vec![k * d, k], g_w2)?;
    let g_vt = Tensor::new(vec![k * d, 1], g_v)?;
    let g_s = matmul_tn(&params.w2, &g_vt)?;

    // s = σ(u), u = W₁·z
    let g_u: Vec<T> = g_s
        .data()
        .iter()
        .zip(s)
        .map(|(&g, &sj)| g * sj * (T::one() - sj))
        .collect();
    let z = state.z.data();
    let mut g_w1 = Vec::with_capacity(k * k);
    for &gu in &g_u {
        g_w1.extend(z.iter().map(|&zj| gu * zj));
    }
    let g_w1 = Tensor::new(vec![k, k], g_w1)?;
    let g_z = matmul_tn(&params.w1, &Tensor::new(vec![k, 1], g_u)?)?;

    // z_k = mean of frame k
    let inv_p = T::one() / T::of(p as f64);
    {
        let gx = g_x.data_mut();
        for (row, &gz) in g_z.data().iter().enumerate() {
            let add = gz * inv_p;
            for x in &mut gx[row * p..(row + 1) * p] {
                *x = *x + add;
            }
        }
    }

    let (hh, ww, cc) = state.frame_dims;
    Ok(TsGrads {
        clip: g_x.reshape(&[k, hh, ww, cc])?,
        w1: g_w1,
        w2: g_w2,
    })
}

/// Runs the layer over a batch; every clip gets its own hyperplane. Returns
/// the per-clip states and the batch residual (mean over clips).
pub fn ts_forward_batch<T: Scalar>(
    clips: &[ClipTensor<T>],
    params: &TsLayerParams<T>,
) -> Result<(Vec<TsState<T>>, T)> {
    if clips.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let states = clips
        .iter()
        .map(|c| ts_forward(c, params))
        .collect::<Result<Vec<_>>>()?;
    let res = states.iter().map(|s| s.residual()).sum::<T>() / T::of(states.len() as f64);
    Ok((states, res))
}

/// Mean Euclidean norm of the per-pixel trajectories, the natural scale
/// for a projection residual.
pub fn mean_pixel_norm<T: Scalar>(clip: &ClipTensor<T>) -> T {
    let x = clip.as_matrix();
    let (k, p) = (x.shape()[0], x.shape()[1]);
    let total: T = (0..p)
        .map(|j| (0..k).map(|i| x.data()[i * p + j].powi(2)).sum::<T>().sqrt())
        .sum();
    total / T::of(p as f64)
}

/// Minimizes the projection residual of one clip over `W₁` and `W₂` by
/// gradient descent with heavy-ball momentum. Returns the residual before
/// each step followed by the final one (`steps + 1` values).
pub fn fit_hyperplane<T: Scalar>(
    clip: &ClipTensor<T>,
    params: &mut TsLayerParams<T>,
    steps: usize,
    lr: f64,
    momentum: f64,
) -> Result<Vec<T>> {
    if !(lr > 0.0) || !(0.0..1.0).contains(&momentum) {
        return Err(Error::Config(format!("need lr > 0 and momentum in [0, 1), got {lr}, {momentum}")));
    }
    let mut v1 = Tensor::zeros(params.w1.shape());
    let mut v2 = Tensor::zeros(params.w2.shape());
    let mut history = Vec::with_capacity(steps + 1);
    let (m, step) = (T::of(momentum), T::of(-lr));
    for _ in 0..steps {
        let state = ts_forward(clip, params)?;
        history.push(state.residual());
        let zero_y = Tensor::zeros(state.squeezed().y.shape());
        let g = ts_backward(&state, params, &zero_y, T::one())?;
        v1 = v1.scale(m).add(&g.w1)?;
        v2 = v2.scale(m).add(&g.w2)?;
        params.w1.axpy(step, &v1)?;
        params.w2.axpy(step, &v2)?;
        if !params.w1.is_finite() || !params.w2.is_finite() {
            return Err(Error::Numerical("residual minimization diverged".into()));
        }
    }
    history.push(ts_forward(clip, params)?.residual());
    Ok(history)
}
