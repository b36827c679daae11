//! Layer kernels over `[channels, height, width]` tensors.

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};
use crate::tensorio::Tensor;

fn chw<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<(usize, usize, usize)> {
    match *t.dims() {
        [c, h, w] => Ok((c, h, w)),
        ref d => Err(Error::Shape(format!("{what} expects [C, H, W], got {d:?}"))),
    }
}

/// Output extent of a sliding window along one axis.
pub fn window_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Cross-correlation with zero padding. `weight` is `[out, in / groups, kh, kw]`
/// and each of the `groups` weight blocks sees only its own block of input channels.
pub fn conv_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
    groups: usize,
) -> Result<Tensor<T>> {
    let (c, h, w) = chw(input, "conv input")?;
    let [out_c, cg, kh, kw] = *weight.dims() else {
        return Err(Error::Shape(format!(
            "conv weight expects [O, C/g, kh, kw], got {:?}",
            weight.dims()
        )));
    };
    if groups == 0 || c % groups != 0 || out_c % groups != 0 {
        return Err(Error::Shape(format!(
            "{c} input / {out_c} output channels not divisible into {groups} groups"
        )));
    }
    if cg != c / groups {
        return Err(Error::Shape(format!(
            "weight expects {cg} channels per group, input provides {}",
            c / groups
        )));
    }
    if bias.len() != out_c {
        return Err(Error::Shape(format!("bias has {} values for {out_c} outputs", bias.len())));
    }
    let (Some(oh), Some(ow)) = (window_extent(h, kh, stride, pad), window_extent(w, kw, stride, pad)) else {
        return Err(Error::Shape(format!(
            "kernel {kh}x{kw} with pad {pad} stride {stride} does not fit {h}x{w}"
        )));
    };

    let og = out_c / groups;
    let patch = cg * kh * kw;
    let n = oh * ow;
    let src = input.data();
    let mut out = vec![T::zero(); out_c * n];
    let mut cols = vec![T::zero(); patch * n];

    for g in 0..groups {
        for ci in 0..cg {
            let plane = &src[(g * cg + ci) * h * w..][..h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = &mut cols[((ci * kh + ky) * kw + kx) * n..][..n];
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let dst = &mut row[oy * ow..][..ow];
                        if iy < 0 || iy >= h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src_row = &plane[iy as usize * w..][..w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            *d = if ix < 0 || ix >= w as isize {
                                T::zero()
                            } else {
                                src_row[ix as usize]
                            };
                        }
                    }
                }
            }
        }
        let block = &mut out[g * og * n..][..og * n];
        for (o, dst) in block.chunks_exact_mut(n).enumerate() {
            dst.fill(bias.data()[g * og + o]);
        }
        let w_block = &weight.data()[g * og * patch..][..og * patch];
        T::gemm(og, patch, n, w_block, &cols, T::one(), block);
    }
    Tensor::new(input.name(), vec![out_c, oh, ow], out)
}

pub fn relu<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    t.map(|v| v.max(T::zero()))
}

pub(crate) fn relu_in_place<T: Scalar>(t: &mut Tensor<T>) {
    for v in t.data_mut() {
        *v = v.max(T::zero());
    }
}

/// Per-channel sliding max without padding.
pub fn max_pool<T: Scalar>(t: &Tensor<T>, kernel: usize, stride: usize) -> Result<Tensor<T>> {
    let (c, h, w) = chw(t, "max_pool input")?;
    let (Some(oh), Some(ow)) = (window_extent(h, kernel, stride, 0), window_extent(w, kernel, stride, 0)) else {
        return Err(Error::Shape(format!("pool window {kernel} larger than {h}x{w} input")));
    };
    let src = t.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &src[ch * h * w..][..h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = T::neg_infinity();
                for ky in 0..kernel {
                    let row = &plane[(oy * stride + ky) * w + ox * stride..][..kernel];
                    for &v in row {
                        m = m.max(v);
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::new(t.name(), vec![c, oh, ow], out)
}

/// Cross-channel local response normalization constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrnParams {
    pub size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        LrnParams {
            size: 5,
            alpha: 1e-4,
            beta: 0.75,
            k: 1.0,
        }
    }
}

/// `b[c] = a[c] / (k + alpha / size · Σ a[c']²)^beta`, window of `size`
/// channels centred on `c` and clamped at the channel edges.
pub fn lrn<T: Scalar>(t: &Tensor<T>, params: LrnParams) -> Result<Tensor<T>> {
    let (c, h, w) = chw(t, "lrn input")?;
    let hw = h * w;
    let half = params.size / 2;
    let scale = T::from_f64_lossy(params.alpha / params.size as f64);
    let k = T::from_f64_lossy(params.k);
    let beta = T::from_f64_lossy(params.beta);
    let src = t.data();
    let sq: Vec<T> = src.iter().map(|&v| v * v).collect();
    let mut window = vec![T::zero(); hw];
    let mut out = vec![T::zero(); c * hw];
    // window holds Σ sq over channels [lo, hi) while sliding over ch
    let (mut lo, mut hi) = (0usize, 0usize);
    for ch in 0..c {
        let want_lo = ch.saturating_sub(half);
        let want_hi = (ch + half + 1).min(c);
        while hi < want_hi {
            for (acc, &v) in window.iter_mut().zip(&sq[hi * hw..][..hw]) {
                *acc += v;
            }
            hi += 1;
        }
        while lo < want_lo {
            for (acc, &v) in window.iter_mut().zip(&sq[lo * hw..][..hw]) {
                *acc -= v;
            }
            lo += 1;
        }
        let dst = &mut out[ch * hw..][..hw];
        let a = &src[ch * hw..][..hw];
        for i in 0..hw {
            // subtraction can leave tiny negative residue
            let s = window[i].max(T::zero());
            dst[i] = a[i] / (k + scale * s).powf(beta);
        }
    }
    Tensor::new(t.name(), vec![c, h, w], out)
}

/// Affine map `weight · flatten(input) + bias` with `weight: [out, in]`.
pub fn fc_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [out_n, in_n] = *weight.dims() else {
        return Err(Error::Shape(format!("fc weight expects [out, in], got {:?}", weight.dims())));
    };
    if input.len() != in_n {
        return Err(Error::Shape(format!(
            "fc expects {in_n} inputs, got {} from {:?}",
            input.len(),
            input.dims()
        )));
    }
    if bias.len() != out_n {
        return Err(Error::Shape(format!("fc bias has {} values for {out_n} outputs", bias.len())));
    }
    let x = input.data();
    let out = weight
        .data()
        .chunks_exact(in_n)
        .zip(bias.data())
        .map(|(row, &b)| dot(row, x) + b)
        .collect();
    Tensor::new(input.name(), vec![out_n], out)
}
