//! Summed-area tables: upright, squared and 45°-rotated.

use crate::plane::ImagePlane;

/// Integral images of a gray plane, each `(width + 1) × (height + 1)`.
///
/// `sum(X, Y)` is the sum of pixels with `x < X, y < Y`. The tilted table
/// holds `Σ I(x, y)` over `y < Y, |x - X + 1| ≤ Y - y - 1`.
#[derive(Clone, Debug)]
pub struct IntegralImages {
    width: usize,
    height: usize,
    sum: Vec<i64>,
    sqsum: Vec<i64>,
    tilted: Option<Vec<i64>>,
}

impl IntegralImages {
    pub fn new(img: &ImagePlane) -> Self {
        Self::build(img, true)
    }

    pub(crate) fn build(img: &ImagePlane, with_tilted: bool) -> Self {
        let gray = img.to_gray();
        let (w, h) = (gray.width(), gray.height());
        let stride = w + 1;
        let mut sum = vec![0i64; stride * (h + 1)];
        let mut sqsum = vec![0i64; stride * (h + 1)];
        for y in 0..h {
            let (mut row, mut row_sq) = (0i64, 0i64);
            for x in 0..w {
                let v = gray.at(x, y) as i64;
                row += v;
                row_sq += v * v;
                let i = (y + 1) * stride + x + 1;
                sum[i] = sum[i - stride] + row;
                sqsum[i] = sqsum[i - stride] + row_sq;
            }
        }
        let tilted = with_tilted.then(|| tilted_table(&gray));
        IntegralImages {
            width: w,
            height: h,
            sum,
            sqsum,
            tilted,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn at(table: &[i64], stride: usize, x: usize, y: usize) -> i64 {
        table[y * stride + x]
    }

    pub fn sum_at(&self, x: usize, y: usize) -> i64 {
        Self::at(&self.sum, self.width + 1, x, y)
    }

    pub fn tilted_at(&self, x: usize, y: usize) -> Option<i64> {
        self.tilted.as_ref().map(|t| Self::at(t, self.width + 1, x, y))
    }

    #[inline]
    fn rect(table: &[i64], stride: usize, x: usize, y: usize, w: usize, h: usize) -> i64 {
        let a = y * stride + x;
        let b = (y + h) * stride + x;
        table[b + w] - table[a + w] - table[b] + table[a]
    }

    /// Sum over the upright rectangle with top-left (x, y).
    #[inline]
    pub fn rect_sum(&self, x: usize, y: usize, w: usize, h: usize) -> i64 {
        Self::rect(&self.sum, self.width + 1, x, y, w, h)
    }

    #[inline]
    pub fn rect_sq_sum(&self, x: usize, y: usize, w: usize, h: usize) -> i64 {
        Self::rect(&self.sqsum, self.width + 1, x, y, w, h)
    }

    /// Sum over the 45° rectangle anchored at (x, y) whose sides run down-right
    /// for `w` and down-left for `h`. Panics if the tilted table was not built.
    #[inline]
    pub fn tilted_rect_sum(&self, x: usize, y: usize, w: usize, h: usize) -> i64 {
        let t = self.tilted.as_ref().expect("tilted table not computed");
        let s = self.width + 1;
        Self::at(t, s, x, y) - Self::at(t, s, x - h, y + h) - Self::at(t, s, x + w, y + w)
            + Self::at(t, s, x + w - h, y + w + h)
    }
}

fn tilted_table(gray: &ImagePlane) -> Vec<i64> {
    let (w, h) = (gray.width(), gray.height());
    // Columns padded by h + 1 on both sides, where every triangle sum is zero.
    let pad = h + 1;
    let pw = w + 1 + 2 * pad;
    let px = |x: isize, y: isize| -> i64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0
        } else {
            gray.at(x as usize, y as usize) as i64
        }
    };
    let mut t = vec![0i64; pw * (h + 1)];
    for yy in 1..=h {
        for xp in 1..pw - 1 {
            let x = xp as isize - pad as isize;
            let up2 = if yy >= 2 { t[(yy - 2) * pw + xp] } else { 0 };
            let v = t[(yy - 1) * pw + xp - 1] + t[(yy - 1) * pw + xp + 1] - up2
                + px(x - 1, yy as isize - 1)
                + px(x - 1, yy as isize - 2);
            t[yy * pw + xp] = v;
        }
    }
    let mut out = vec![0i64; (w + 1) * (h + 1)];
    for yy in 0..=h {
        out[yy * (w + 1)..][..w + 1].copy_from_slice(&t[yy * pw + pad..][..w + 1]);
    }
    out
}
