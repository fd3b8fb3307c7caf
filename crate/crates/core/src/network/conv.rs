//! Same-padded 2D convolution over one `H×W×C` frame.

use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad() - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad() - self.kernel) / self.stride + 1
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.kernel * self.kernel * self.cin
    }

    /// Calls `f(out_index, in_index, weight_offset)` for every valid tap,
    /// where `weight_offset` points at `w[·, ky, kx, 0]` relative to an
    /// output channel's block.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (pad, k) = (self.pad() as isize, self.kernel);
        let (oh, ow) = (self.out_h(), self.out_w());
        for oy in 0..oh {
            for ox in 0..ow {
                let o = oy * ow + ox;
                for ky in 0..k {
                    let iy = (oy * self.stride + ky) as isize - pad;
                    if iy < 0 || iy >= self.h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * self.stride + kx) as isize - pad;
                        if ix < 0 || ix >= self.w as isize {
                            continue;
                        }
                        let i = iy as usize * self.w + ix as usize;
                        f(o, i, (ky * k + kx) * self.cin);
                    }
                }
            }
        }
    }
}

/// `out[o, co] = bias[co] + Σ w[co, ky, kx, ci] · in[i, ci]`; weight layout
/// `cout × k × k × cin`.
pub fn conv_forward<T: Scalar>(g: &ConvGeom, input: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
    let (cin, cout) = (g.cin, g.cout);
    let block = g.kernel * g.kernel * cin;
    let mut out = Vec::with_capacity(g.out_h() * g.out_w() * cout);
    for _ in 0..g.out_h() * g.out_w() {
        out.extend_from_slice(bias);
    }
    g.for_each_tap(|o, i, woff| {
        let src = &input[i * cin..(i + 1) * cin];
        let dst = &mut out[o * cout..(o + 1) * cout];
        for (co, d) in dst.iter_mut().enumerate() {
            let wrow = &weight[co * block + woff..co * block + woff + cin];
            *d = *d + wrow.iter().zip(src).map(|(&a, &b)| a * b).sum::<T>();
        }
    });
    out
}

/// Accumulates weight and bias gradients and returns the input gradient.
pub fn conv_backward<T: Scalar>(
    g: &ConvGeom,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    grad_w: &mut [T],
    grad_b: &mut [T],
) -> Vec<T> {
    let (cin, cout) = (g.cin, g.cout);
    let block = g.kernel * g.kernel * cin;
    let mut grad_in = vec![T::zero(); g.h * g.w * cin];
    for o in 0..g.out_h() * g.out_w() {
        for (co, gb) in grad_b.iter_mut().enumerate() {
            *gb = *gb + grad_out[o * cout + co];
        }
    }
    g.for_each_tap(|o, i, woff| {
        let src = &input[i * cin..(i + 1) * cin];
        for co in 0..cout {
            let go = grad_out[o * cout + co];
            if go == T::zero() {
                continue;
            }
            let base = co * block + woff;
            for ci in 0..cin {
                grad_w[base + ci] = grad_w[base + ci] + go * src[ci];
                grad_in[i * cin + ci] = grad_in[i * cin + ci] + go * weight[base + ci];
            }
        }
    });
    grad_in
}
