use crate::error::{Error, Result};
use crate::plane::ImagePlane;
use crate::scalar::Scalar;
use crate::tensorio::Tensor;

use super::topology::{INPUT_CHANNELS, INPUT_SIDE};

/// Bilinear resampling of a single plane with pixel-centre alignment
/// (`src = (dst + 0.5) · scale - 0.5`, clamped to the edge).
pub fn resize_bilinear<T: Scalar>(
    src: &[T],
    width: usize,
    height: usize,
    out_width: usize,
    out_height: usize,
) -> Vec<T> {
    assert_eq!(src.len(), width * height);
    if width == out_width && height == out_height {
        return src.to_vec();
    }
    let taps = |out: usize, input: usize| -> Vec<(usize, usize, T)> {
        let scale = input as f64 / out as f64;
        (0..out)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(input - 1);
                (i0, i1, T::from_f64_lossy(s - i0 as f64))
            })
            .collect()
    };
    let xs = taps(out_width, width);
    let ys = taps(out_height, height);
    let mut out = Vec::with_capacity(out_width * out_height);
    for &(y0, y1, fy) in &ys {
        let r0 = &src[y0 * width..][..width];
        let r1 = &src[y1 * width..][..width];
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push(top + (bottom - top) * fy);
        }
    }
    out
}

/// Grayscale, resize to the network input, replicate to three channels and
/// subtract the mean image.
pub fn preprocess<T: Scalar>(img: &ImagePlane, mean: &Tensor<T>) -> Result<Tensor<T>> {
    if mean.dims() != [INPUT_CHANNELS, INPUT_SIDE, INPUT_SIDE] {
        return Err(Error::Shape(format!(
            "mean tensor must be [3, {INPUT_SIDE}, {INPUT_SIDE}], got {:?}",
            mean.dims()
        )));
    }
    let gray = img.to_gray();
    let plane: Vec<T> = gray.data().iter().map(|&v| T::from_u8(v).unwrap()).collect();
    let resized = resize_bilinear(&plane, gray.width(), gray.height(), INPUT_SIDE, INPUT_SIDE);
    let hw = INPUT_SIDE * INPUT_SIDE;
    let mut out = Vec::with_capacity(INPUT_CHANNELS * hw);
    for c in 0..INPUT_CHANNELS {
        let m = &mean.data()[c * hw..][..hw];
        out.extend(resized.iter().zip(m).map(|(&v, &mu)| v - mu));
    }
    Tensor::new("input", vec![INPUT_CHANNELS, INPUT_SIDE, INPUT_SIDE], out)
}
