//! Raw numeric kernels on flat row-major buffers.
//!
//! Loops are ordered so the innermost dimension is unit-stride on every
//! array, which the optimizer vectorizes well enough for desk-scale work.
//! Summation order is fixed, keeping results bit-reproducible.

use super::Real;

/// `out = a[m×k] · b[k×n]`.
pub fn matmul(a: &[Real], b: &[Real], m: usize, k: usize, n: usize, out: &mut [Real]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                out_row[j] += av * b_row[j];
            }
        }
    }
}

/// `out += a[m×n] · bᵀ` where `b` is `k×n` row-major, so `out` is `m×k`.
pub fn matmul_abt_acc(a: &[Real], b: &[Real], m: usize, n: usize, k: usize, out: &mut [Real]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += a_row[j] * b_row[j];
            }
            out[i * k + p] += acc;
        }
    }
}

/// `out += aᵀ · b` where `a` is `m×k` and `b` is `m×n` row-major, so `out` is `k×n`.
pub fn matmul_atb_acc(a: &[Real], b: &[Real], m: usize, k: usize, n: usize, out: &mut [Real]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let out_row = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                out_row[j] += av * b_row[j];
            }
        }
    }
}

/// Geometry of one 2-D convolution.
#[derive(Clone, Copy, Debug)]
pub struct ConvDims {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

/// Unfolds `input[C_in×H×W]` into `col[(C_in·kh·kw) × (H_out·W_out)]`
/// with zero padding, so convolution becomes one matmul.
pub fn im2col(input: &[Real], d: &ConvDims, col: &mut [Real]) {
    let n = d.h_out * d.w_out;
    debug_assert_eq!(col.len(), d.c_in * d.kh * d.kw * n);
    col.fill(0.0);
    for c in 0..d.c_in {
        let plane = &input[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = &mut col[(c * d.kh * d.kw + ky * d.kw + kx) * n..][..n];
                for oy in 0..d.h_out {
                    let iy = (oy * d.stride + ky) as isize - d.pad as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let in_row = &plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    let out_row = &mut row[oy * d.w_out..(oy + 1) * d.w_out];
                    for ox in 0..d.w_out {
                        let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                        if ix >= 0 && ix < d.w as isize {
                            out_row[ox] = in_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Folds gradient columns back onto the input layout (adjoint of [`im2col`]).
pub fn col2im_acc(col: &[Real], d: &ConvDims, input_grad: &mut [Real]) {
    let n = d.h_out * d.w_out;
    debug_assert_eq!(col.len(), d.c_in * d.kh * d.kw * n);
    debug_assert_eq!(input_grad.len(), d.c_in * d.h * d.w);
    for c in 0..d.c_in {
        let plane = &mut input_grad[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = &col[(c * d.kh * d.kw + ky * d.kw + kx) * n..][..n];
                for oy in 0..d.h_out {
                    let iy = (oy * d.stride + ky) as isize - d.pad as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let in_row = &mut plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    let col_row = &row[oy * d.w_out..(oy + 1) * d.w_out];
                    for ox in 0..d.w_out {
                        let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                        if ix >= 0 && ix < d.w as isize {
                            in_row[ix as usize] += col_row[ox];
                        }
                    }
                }
            }
        }
    }
}
