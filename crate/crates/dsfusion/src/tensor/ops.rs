//! Forward operations and their recorded gradients.

use super::kernels::{self, ConvDims};
use super::{Real, Tensor};
use crate::error::{Error, Result};
use std::sync::Arc;

/// Elementwise nonlinearity selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Silu,
    Sigmoid,
    Tanh,
}

fn sigmoid(x: Real) -> Real {
    1.0 / (1.0 + (-x).exp())
}

fn check_same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        check_same_shape(self, other, "add")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a + b)
            .collect();
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            &[self, other],
            move || {
                Box::new(move |up: &[Real]| {
                    a.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g += u));
                    b.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g += u));
                })
            },
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        check_same_shape(self, other, "sub")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a - b)
            .collect();
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            &[self, other],
            move || {
                Box::new(move |up: &[Real]| {
                    a.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g += u));
                    b.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g -= u));
                })
            },
        ))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        check_same_shape(self, other, "mul")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a * b)
            .collect();
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            &[self, other],
            move || {
                Box::new(move |up: &[Real]| {
                    a.accumulate_grad(|g| {
                        for i in 0..g.len() {
                            g[i] += up[i] * b.data()[i];
                        }
                    });
                    b.accumulate_grad(|g| {
                        for i in 0..g.len() {
                            g[i] += up[i] * a.data()[i];
                        }
                    });
                })
            },
        ))
    }

    pub fn neg(&self) -> Tensor {
        let data = self.data().iter().map(|a| -a).collect();
        let a = self.clone();
        Tensor::from_op(self.shape().to_vec(), data, &[self], move || {
            Box::new(move |up: &[Real]| {
                a.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g -= u));
            })
        })
    }

    /// Multiplies every element by `c`.
    pub fn scale(&self, c: Real) -> Tensor {
        let data = self.data().iter().map(|a| a * c).collect();
        let a = self.clone();
        Tensor::from_op(self.shape().to_vec(), data, &[self], move || {
            Box::new(move |up: &[Real]| {
                a.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g += c * u));
            })
        })
    }

    /// Adds `c` to every element.
    pub fn add_scalar(&self, c: Real) -> Tensor {
        let data = self.data().iter().map(|a| a + c).collect();
        let a = self.clone();
        Tensor::from_op(self.shape().to_vec(), data, &[self], move || {
            Box::new(move |up: &[Real]| {
                a.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g += u));
            })
        })
    }

    /// Natural log; defined for positive inputs.
    pub fn ln(&self) -> Tensor {
        let data = self.data().iter().map(|a| a.ln()).collect();
        let a = self.clone();
        Tensor::from_op(self.shape().to_vec(), data, &[self], move || {
            let x = a.clone();
            Box::new(move |up: &[Real]| {
                x.accumulate_grad(|g| {
                    for i in 0..g.len() {
                        g[i] += up[i] / x.data()[i];
                    }
                });
            })
        })
    }

    /// Clamps to `[lo, hi]`; gradient passes through the unclamped region
    /// (inclusive at the boundaries).
    pub fn clamp(&self, lo: Real, hi: Real) -> Tensor {
        let data = self.data().iter().map(|a| a.max(lo).min(hi)).collect();
        let a = self.clone();
        Tensor::from_op(self.shape().to_vec(), data, &[self], move || {
            let x = a.clone();
            Box::new(move |up: &[Real]| {
                x.accumulate_grad(|g| {
                    for i in 0..g.len() {
                        let v = x.data()[i];
                        if v >= lo && v <= hi {
                            g[i] += up[i];
                        }
                    }
                });
            })
        })
    }

    pub fn activation(&self, kind: Activation) -> Tensor {
        let data: Vec<Real> = match kind {
            Activation::Relu => self.data().iter().map(|&x| x.max(0.0)).collect(),
            Activation::Silu => self.data().iter().map(|&x| x * sigmoid(x)).collect(),
            Activation::Sigmoid => self.data().iter().map(|&x| sigmoid(x)).collect(),
            Activation::Tanh => self.data().iter().map(|&x| x.tanh()).collect(),
        };
        let a = self.clone();
        Tensor::from_op(self.shape().to_vec(), data, &[self], move || {
            let x = a.clone();
            Box::new(move |up: &[Real]| {
                x.accumulate_grad(|g| {
                    let xs = x.data();
                    match kind {
                        Activation::Relu => {
                            for i in 0..g.len() {
                                if xs[i] > 0.0 {
                                    g[i] += up[i];
                                }
                            }
                        }
                        Activation::Silu => {
                            for i in 0..g.len() {
                                let s = sigmoid(xs[i]);
                                g[i] += up[i] * (s + xs[i] * s * (1.0 - s));
                            }
                        }
                        Activation::Sigmoid => {
                            for i in 0..g.len() {
                                let s = sigmoid(xs[i]);
                                g[i] += up[i] * s * (1.0 - s);
                            }
                        }
                        Activation::Tanh => {
                            for i in 0..g.len() {
                                let t = xs[i].tanh();
                                g[i] += up[i] * (1.0 - t * t);
                            }
                        }
                    }
                });
            })
        })
    }

    pub fn relu(&self) -> Tensor {
        self.activation(Activation::Relu)
    }
    pub fn silu(&self) -> Tensor {
        self.activation(Activation::Silu)
    }
    pub fn sigmoid(&self) -> Tensor {
        self.activation(Activation::Sigmoid)
    }
    pub fn tanh(&self) -> Tensor {
        self.activation(Activation::Tanh)
    }

    pub fn sum(&self) -> Tensor {
        let total: Real = self.data().iter().sum();
        let a = self.clone();
        Tensor::from_op(vec![1], vec![total], &[self], move || {
            Box::new(move |up: &[Real]| {
                let u = up[0];
                a.accumulate_grad(|g| g.iter_mut().for_each(|g| *g += u));
            })
        })
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel() as Real;
        let total: Real = self.data().iter().sum();
        let a = self.clone();
        Tensor::from_op(vec![1], vec![total / n], &[self], move || {
            Box::new(move |up: &[Real]| {
                let u = up[0] / n;
                a.accumulate_grad(|g| g.iter_mut().for_each(|g| *g += u));
            })
        })
    }

    /// Same data, new shape with identical element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::Dimension(format!(
                "reshape: {:?} -> {:?} changes element count",
                self.shape(),
                shape
            )));
        }
        let a = self.clone();
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            &[self],
            move || {
                Box::new(move |up: &[Real]| {
                    a.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g += u));
                })
            },
        ))
    }

    /// Stacks two `[C×H×W]` maps along the channel axis.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[1..] != sb[1..] {
            return Err(Error::Dimension(format!(
                "concat_channels: incompatible shapes {sa:?} and {sb:?}"
            )));
        }
        let mut data = self.to_vec();
        data.extend_from_slice(other.data());
        let split = self.numel();
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            vec![sa[0] + sb[0], sa[1], sa[2]],
            data,
            &[self, other],
            move || {
                Box::new(move |up: &[Real]| {
                    a.accumulate_grad(|g| g.iter_mut().zip(&up[..split]).for_each(|(g, u)| *g += u));
                    b.accumulate_grad(|g| g.iter_mut().zip(&up[split..]).for_each(|(g, u)| *g += u));
                })
            },
        ))
    }

    /// `self[m×k] · other[k×n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension(format!(
                "matmul: incompatible shapes {sa:?} and {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut data = vec![0.0; m * n];
        kernels::matmul(self.data(), other.data(), m, k, n, &mut data);
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(vec![m, n], data, &[self, other], move || {
            Box::new(move |up: &[Real]| {
                a.accumulate_grad(|g| kernels::matmul_abt_acc(up, b.data(), m, n, k, g));
                b.accumulate_grad(|g| kernels::matmul_atb_acc(a.data(), up, m, k, n, g));
            })
        }))
    }

    /// Cross-correlation of `self[C_in×H×W]` with `kernel[C_out×C_in×kh×kw]`.
    pub fn conv2d(&self, kernel: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        let (si, sk) = (self.shape(), kernel.shape());
        if si.len() != 3 || sk.len() != 4 || si[0] != sk[1] {
            return Err(Error::Dimension(format!(
                "conv2d: input {si:?} incompatible with kernel {sk:?}"
            )));
        }
        if stride < 1 {
            return Err(Error::Argument("conv2d: stride must be >= 1".into()));
        }
        let (c_in, h, w) = (si[0], si[1], si[2]);
        let (c_out, kh, kw) = (sk[0], sk[2], sk[3]);
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(Error::Dimension(format!(
                "conv2d: kernel {kh}x{kw} exceeds padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        let h_out = (h + 2 * pad - kh) / stride + 1;
        let w_out = (w + 2 * pad - kw) / stride + 1;
        if h_out == 0 || w_out == 0 {
            return Err(Error::Dimension("conv2d: non-positive output dims".into()));
        }
        let dims = ConvDims {
            c_in,
            h,
            w,

            kh,
            kw,
            stride,
            pad,
            h_out,
            w_out,
        };
        let n = h_out * w_out;
        let kdim = c_in * kh * kw;
        let mut col = vec![0.0; kdim * n];
        kernels::im2col(self.data(), &dims, &mut col);
        let mut data = vec![0.0; c_out * n];
        kernels::matmul(kernel.data(), &col, c_out, kdim, n, &mut data);
        let col = Arc::new(col);
        let (input, kern) = (self.clone(), kernel.clone());
        Ok(Tensor::from_op(
            vec![c_out, h_out, w_out],
            data,
            &[self, kernel],
            move || {
                Box::new(move |up: &[Real]| {
                    // dW = up · colᵀ
                    kern.accumulate_grad(|g| {
                        kernels::matmul_abt_acc(up, &col, c_out, n, kdim, g);
                    });
                    // dX = col2im(Wᵀ · up)
                    input.accumulate_grad(|g| {
                        let mut dcol = vec![0.0; kdim * n];
                        kernels::matmul_atb_acc(kern.data(), up, c_out, kdim, n, &mut dcol);
                        kernels::col2im_acc(&dcol, &dims, g);
                    });
                })
            },
        ))
    }

    /// Nearest-neighbor upsampling of `[C×H×W]` by an integer factor.
    pub fn upsample2d(&self, factor: usize) -> Result<Tensor> {
        if factor < 1 {
            return Err(Error::Argument("upsample2d: factor must be >= 1".into()));
        }
        let s = self.shape();
        if s.len() != 3 {
            return Err(Error::Dimension(format!(
                "upsample2d: expected [C×H×W], got {s:?}"
            )));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (ho, wo) = (h * factor, w * factor);
        let mut data = vec![0.0; c * ho * wo];
        let src = self.data();
        for ch in 0..c {
            for y in 0..ho {
                let sy = y / factor;
                let src_row = &src[ch * h * w + sy * w..][..w];
                let dst_row = &mut data[ch * ho * wo + y * wo..][..wo];
                for x in 0..wo {
                    dst_row[x] = src_row[x / factor];
                }
            }
        }
        let a = self.clone();
        Ok(Tensor::from_op(vec![c, ho, wo], data, &[self], move || {
            Box::new(move |up: &[Real]| {
                a.accumulate_grad(|g| {
                    for ch in 0..c {
                        for y in 0..ho {
                            let sy = y / factor;
                            let up_row = &up[ch * ho * wo + y * wo..][..wo];
                            let g_row = &mut g[ch * h * w + sy * w..][..w];
                            for x in 0..wo {
                                g_row[x / factor] += up_row[x];
                            }
                        }
                    }
                });
            })
        }))
    }

    /// Group normalization over `[C×H×W]` with per-channel affine.
    /// Each group is normalized to zero mean / unit variance
    /// (epsilon-stabilized at 1e-5), then scaled by `gamma` and shifted by
    /// `beta`.
    pub fn group_norm(&self, groups: usize, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
        const EPS: Real = 1e-5;
        let s = self.shape();
        if s.len() != 3 {
            return Err(Error::Dimension(format!(
                "group_norm: expected [C×H×W], got {s:?}"
            )));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        if groups == 0 || c % groups != 0 {
            return Err(Error::Argument(format!(
                "group_norm: {c} channels not divisible by {groups} groups"
            )));
        }
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(Error::Dimension(format!(
                "group_norm: affine params must have shape [{c}]"
            )));
        }
        let cg = c / groups; // channels per group
        let gsize = cg * h * w;
        let x = self.data();
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; groups];
        for g in 0..groups {
            let seg = &x[g * gsize..(g + 1) * gsize];
            let mean = seg.iter().sum::<Real>() / gsize as Real;
            let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / gsize as Real;
            let istd = 1.0 / (var + EPS).sqrt();
            inv_std[g] = istd;
            for (o, v) in xhat[g * gsize..(g + 1) * gsize].iter_mut().zip(seg) {
                *o = (v - mean) * istd;
            }
        }
        let mut data = vec![0.0; x.len()];
        let hw = h * w;
        for ch in 0..c {
            let (gm, bt) = (gamma.data()[ch], beta.data()[ch]);
            for i in 0..hw {
                data[ch * hw + i] = gm * xhat[ch * hw + i] + bt;
            }
        }
        let xhat = Arc::new(xhat);
        let inv_std = Arc::new(inv_std);
        let (input, gam, bet) = (self.clone(), gamma.clone(), beta.clone());
        Ok(Tensor::from_op(
            s.to_vec(),
            data,
            &[self, gamma, beta],
            move || {
                Box::new(move |up: &[Real]| {
                    gam.accumulate_grad(|g| {
                        for ch in 0..c {
                            let mut acc = 0.0;
                            for i in 0..hw {
                                acc += up[ch * hw + i] * xhat[ch * hw + i];
                            }
                            g[ch] += acc;
                        }
                    });
                    bet.accumulate_grad(|g| {
                        for ch in 0..c {
                            let mut acc = 0.0;
                            for i in 0..hw {
                                acc += up[ch * hw + i];
                            }
                            g[ch] += acc;
                        }
                    });
                    input.accumulate_grad(|g| {
                        // dxhat = up * gamma(ch); per group:
                        // dx = istd * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
                        for grp in 0..groups {
                            let base = grp * gsize;
                            let mut sum_dxh = 0.0;
                            let mut sum_dxh_xh = 0.0;
                            for j in 0..gsize {
                                let idx = base + j;
                                let dxh = up[idx] * gam.data()[idx / hw];
                                sum_dxh += dxh;
                                sum_dxh_xh += dxh * xhat[idx];
                            }
                            let m1 = sum_dxh / gsize as Real;
                            let m2 = sum_dxh_xh / gsize as Real;
                            let istd = inv_std[grp];
                            for j in 0..gsize {
                                let idx = base + j;
                                let dxh = up[idx] * gam.data()[idx / hw];
                                g[idx] += istd * (dxh - m1 - xhat[idx] * m2);
                            }
                        }
                    });
                })
            },
        ))
    }

    /// Numerically stable log-softmax over a 1-D tensor.
    pub fn log_softmax(&self) -> Result<Tensor> {
        if self.shape().len() != 1 {
            return Err(Error::Dimension(format!(
                "log_softmax: expected 1-D tensor, got {:?}",
                self.shape()
            )));
        }
        let x = self.data();
        let max = x.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let lse = max + x.iter().map(|v| (v - max).exp()).sum::<Real>().ln();
        let data: Vec<Real> = x.iter().map(|v| v - lse).collect();
        let out_vals = Arc::new(data.clone());
        let a = self.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            &[self],
            move || {
                Box::new(move |up: &[Real]| {
                    let total: Real = up.iter().sum();
                    a.accumulate_grad(|g| {
                        for i in 0..g.len() {
                            g[i] += up[i] - out_vals[i].exp() * total;
                        }
                    });
                })
            },
        ))
    }

    /// Multiplies each channel of `[C×H×W]` by the matching element of `s[C]`.
    pub fn mul_channel(&self, s: &Tensor) -> Result<Tensor> {
        let (sa, ss) = (self.shape(), s.shape());
        if sa.len() != 3 || ss != [sa[0]] {
            return Err(Error::Dimension(format!(
                "mul_channel: input {sa:?} incompatible with scale {ss:?}"
            )));
        }
        let (c, hw) = (sa[0], sa[1] * sa[2]);
        let mut data = vec![0.0; self.numel()];
        for ch in 0..c {
            let sv = s.data()[ch];
            for i in 0..hw {
                data[ch * hw + i] = self.data()[ch * hw + i] * sv;
            }
        }
        let (a, sc) = (self.clone(), s.clone());
        Ok(Tensor::from_op(sa.to_vec(), data, &[self, s], move || {
            Box::new(move |up: &[Real]| {
                a.accumulate_grad(|g| {
                    for ch in 0..c {
                        let sv = sc.data()[ch];
                        for i in 0..hw {
                            g[ch * hw + i] += up[ch * hw + i] * sv;
                        }
                    }
                });
                sc.accumulate_grad(|g| {
                    for ch in 0..c {
                        let mut acc = 0.0;
                        for i in 0..hw {
                            acc += up[ch * hw + i] * a.data()[ch * hw + i];
                        }
                        g[ch] += acc;
                    }
                });
            })
        }))
    }

    /// Adds `b[C]` to each channel of `[C×H×W]`.
    pub fn add_channel(&self, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), b.shape());
        if sa.len() != 3 || sb != [sa[0]] {
            return Err(Error::Dimension(format!(
                "add_channel: input {sa:?} incompatible with bias {sb:?}"
            )));
        }
        let (c, hw) = (sa[0], sa[1] * sa[2]);
        let mut data = vec![0.0; self.numel()];
        for ch in 0..c {
            let bv = b.data()[ch];
            for i in 0..hw {
                data[ch * hw + i] = self.data()[ch * hw + i] + bv;
            }
        }
        let (a, bias) = (self.clone(), b.clone());
        Ok(Tensor::from_op(sa.to_vec(), data, &[self, b], move || {
            Box::new(move |up: &[Real]| {
                a.accumulate_grad(|g| g.iter_mut().zip(up).for_each(|(g, u)| *g += u));
                bias.accumulate_grad(|g| {
                    for ch in 0..c {
                        let mut acc = 0.0;
                        for i in 0..hw {
                            acc += up[ch * hw + i];
                        }
                        g[ch] += acc;
                    }
                });
            })
        }))
    }

    /// Per-channel mean over the spatial axes: `[C×H×W] -> [C]`.
    pub fn spatial_mean(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 3 {
            return Err(Error::Dimension(format!(
                "spatial_mean: expected [C×H×W], got {s:?}"
            )));
        }
        let (c, hw) = (s[0], s[1] * s[2]);
        let mut data = vec![0.0; c];
        for ch in 0..c {
            data[ch] = self.data()[ch * hw..(ch + 1) * hw].iter().sum::<Real>() / hw as Real;
        }
        let a = self.clone();
        Ok(Tensor::from_op(vec![c], data, &[self], move || {
            Box::new(move |up: &[Real]| {
                a.accumulate_grad(|g| {
                    let inv = 1.0 / hw as Real;
                    for ch in 0..c {
                        let u = up[ch] * inv;
                        for gv in &mut g[ch * hw..(ch + 1) * hw] {
                            *gv += u;
                        }
                    }
                });
            })
        }))
    }

    /// Mean squared difference, the diffusion training loss.
    pub fn mse(&self, other: &Tensor) -> Result<Tensor> {
        let d = self.sub(other)?;
        Ok(d.mul(&d)?.mean())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Real, b: Real, tol: Real) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_identity() {
        // identity(3) × X → X
        let eye = Tensor::from_vec(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[3, 3]).unwrap();
        let x = Tensor::from_vec((0..6).map(|i| i as Real).collect(), &[3, 2]).unwrap();
        let y = eye.matmul(&x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn matmul_zero_annihilates() {
        let x = Tensor::from_vec((0..6).map(|i| i as Real + 1.0).collect(), &[2, 3]).unwrap();
        let z = Tensor::zeros(&[3, 4]);
        let y = x.matmul(&z).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        // random 4×3 by 3×2 within 1e-10 of the naive summation
        let a: Vec<Real> = (0..12).map(|i| ((i * 7919) % 13) as Real / 3.0 - 2.0).collect();
        let b: Vec<Real> = (0..6).map(|i| ((i * 104729) % 17) as Real / 5.0 - 1.5).collect();
        let ta = Tensor::from_vec(a.clone(), &[4, 3]).unwrap();
        let tb = Tensor::from_vec(b.clone(), &[3, 2]).unwrap();
        let y = ta.matmul(&tb).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                let mut s = 0.0;
                for p in 0..3 {
                    s += a[i * 3 + p] * b[p * 2 + j];
                }
                assert!(close(y.data()[i * 2 + j], s, 1e-10));
            }
        }
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[4, 2]);
        assert!(matches!(a.matmul(&b), Err(Error::Dimension(_))));
    }

    #[test]
    fn conv2d_identity_kernel() {
        // 1×1 kernel with value 1 reproduces the input
        let x = Tensor::from_vec((0..18).map(|i| i as Real * 0.1).collect(), &[2, 3, 3]).unwrap();
        let k = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2, 1, 1]).unwrap();
        let y = x.conv2d(&k, 1, 0).unwrap();
        assert_eq!(y.shape(), &[2, 3, 3]);
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn conv2d_window_sum_oracle() {
        // all-ones 2×2 kernel on a known 3×3 input → window sums
        let x = Tensor::from_vec((1..=9).map(|i| i as Real).collect(), &[1, 3, 3]).unwrap();
        let k = Tensor::from_vec(vec![1.0; 4], &[1, 1, 2, 2]).unwrap();
        let y = x.conv2d(&k, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        let input = x.data();
        for oy in 0..2 {
            for ox in 0..2 {
                let direct = input[oy * 3 + ox]
                    + input[oy * 3 + ox + 1]
                    + input[(oy + 1) * 3 + ox]
                    + input[(oy + 1) * 3 + ox + 1];
                assert!(close(y.data()[oy * 2 + ox], direct, 1e-12));
            }
        }
    }

    #[test]
    fn conv2d_zero_kernel() {
        let x = Tensor::from_vec((0..9).map(|i| i as Real).collect(), &[1, 3, 3]).unwrap();
        let k = Tensor::zeros(&[3, 1, 2, 2]);
        let y = x.conv2d(&k, 1, 0).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv2d_rejects_oversized_kernel() {
        let x = Tensor::zeros(&[1, 3, 3]);
        let k = Tensor::zeros(&[1, 1, 5, 5]);
        assert!(matches!(x.conv2d(&k, 1, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn upsample_factor_one_is_identity() {
        let x = Tensor::from_vec((0..12).map(|i| i as Real).collect(), &[3, 2, 2]).unwrap();
        let y = x.upsample2d(1).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn upsample_replicates() {
        // 1×1×1 input value 7, factor 2 → 2×2 map of 7s
        let x = Tensor::from_vec(vec![7.0], &[1, 1, 1]).unwrap();
        let y = x.upsample2d(2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn upsample_rejects_zero_factor() {
        let x = Tensor::zeros(&[1, 2, 2]);
        assert!(matches!(x.upsample2d(0), Err(Error::Argument(_))));
    }

    #[test]
    fn upsample_gradient_is_block_sum() {
        // grad of sum(upsample(x, 2)) w.r.t. x is all 4s
        let x = Tensor::var((0..4).map(|i| i as Real).collect(), &[1, 2, 2]).unwrap();
        let loss = x.upsample2d(2).unwrap().sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![4.0; 4]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let x = Tensor::from_vec(vec![0.0], &[1]).unwrap();
        assert!(close(x.sigmoid().item(), 0.5, 1e-15));
    }

    #[test]
    fn relu_negative_is_flat_zero() {
        let x = Tensor::var(vec![-2.5], &[1]).unwrap();
        let y = x.relu();
        assert_eq!(y.item(), 0.0);
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0]);
    }

    #[test]
    fn group_norm_constant_input_is_beta() {
        // zero variance is handled by the epsilon: output ≈ 0, then +beta
        let x = Tensor::from_vec(vec![3.0; 8], &[2, 2, 2]).unwrap();
        let gamma = Tensor::from_vec(vec![1.0, 1.0], &[2]).unwrap();
        let beta = Tensor::from_vec(vec![0.0, 0.0], &[2]).unwrap();
        let y = x.group_norm(2, &gamma, &beta).unwrap();
        assert!(y.data().iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn group_norm_gamma_zero_is_beta() {
        let x = Tensor::from_vec((0..8).map(|i| i as Real).collect(), &[2, 2, 2]).unwrap();
        let gamma = Tensor::zeros(&[2]);
        let beta = Tensor::from_vec(vec![0.5, -1.0], &[2]).unwrap();
        let y = x.group_norm(1, &gamma, &beta).unwrap();
        for ch in 0..2 {
            for i in 0..4 {
                assert!(close(y.data()[ch * 4 + i], beta.data()[ch], 1e-12));
            }
        }
    }

    #[test]
    fn group_norm_statistics_oracle() {
        // per-group mean of the output ≈ mean(beta over the group's channels)
        let x = Tensor::from_vec(
            (0..24).map(|i| ((i * 31) % 7) as Real - 3.0).collect(),
            &[4, 2, 3],
        )
        .unwrap();
        let gamma = Tensor::from_vec(vec![1.0, 2.0, 0.5, 1.5], &[4]).unwrap();
        let beta = Tensor::from_vec(vec![0.1, -0.2, 0.3, 0.7], &[4]).unwrap();
        let y = x.group_norm(2, &gamma, &beta).unwrap();
        for grp in 0..2 {
            let seg = &y.data()[grp * 12..(grp + 1) * 12];
            let mean: Real = seg.iter().sum::<Real>() / 12.0;
            let beta_mean = (beta.data()[grp * 2] + beta.data()[grp * 2 + 1]) / 2.0;
            // normalized part has near-zero mean, so the remainder is beta
            // (gamma multiplies a zero-mean field per group only when gamma is
            // constant within the group; here compare against the direct oracle)
            let mut oracle = 0.0;
            {
                const EPS: Real = 1e-5;
                let xs = &x.data()[grp * 12..(grp + 1) * 12];
                let m = xs.iter().sum::<Real>() / 12.0;
                let v = xs.iter().map(|t| (t - m) * (t - m)).sum::<Real>() / 12.0;
                let istd = 1.0 / (v + EPS).sqrt();
                for ch in 0..2 {
                    let g = gamma.data()[grp * 2 + ch];
                    let b = beta.data()[grp * 2 + ch];
                    for i in 0..6 {
                        oracle += g * (xs[ch * 6 + i] - m) * istd + b;
                    }
                }
                oracle /= 12.0;
            }
            assert!(close(mean, oracle, 1e-5), "group {grp}: {mean} vs {oracle}");
            let _ = beta_mean;
        }
    }

    #[test]
    fn group_norm_indivisible_channels_rejected() {
        let x = Tensor::zeros(&[3, 2, 2]);
        let gamma = Tensor::zeros(&[3]);
        let beta = Tensor::zeros(&[3]);
        assert!(matches!(
            x.group_norm(2, &gamma, &beta),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn log_softmax_sums_to_one() {
        let x = Tensor::from_vec(vec![1.0, -2.0, 0.5, 3.0], &[4]).unwrap();
        let y = x.log_softmax().unwrap();
        let total: Real = y.data().iter().map(|v| v.exp()).sum();
        assert!(close(total, 1.0, 1e-12));
    }

    #[test]
    fn concat_and_split_gradients() {
        let a = Tensor::var(vec![1.0, 2.0, 3.0, 4.0], &[1, 2, 2]).unwrap();
        let b = Tensor::var(vec![5.0, 6.0, 7.0, 8.0], &[1, 2, 2]).unwrap();
        let y = a.concat_channels(&b).unwrap();
        assert_eq!(y.shape(), &[2, 2, 2]);
        let loss = y.scale(2.0).sum();
        loss.backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![2.0; 4]);
        assert_eq!(b.grad().unwrap(), vec![2.0; 4]);
    }

    #[test]
    fn mse_basics() {
        let a = Tensor::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        let b = Tensor::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        assert_eq!(a.mse(&b).unwrap().item(), 0.0);
        let c = Tensor::from_vec(vec![2.0, 3.0], &[2]).unwrap();
        assert!(close(a.mse(&c).unwrap().item(), 1.0, 1e-15));
    }
}
