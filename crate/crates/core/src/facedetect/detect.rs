//! Multi-scale window scanning and neighbour grouping.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::plane::ImagePlane;

use super::cascade::Cascade;
use super::integral::IntegralImages;

/// Square face location in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FaceBox {
    pub x: usize,
    pub y: usize,
    pub side: usize,
}

impl FaceBox {
    pub fn area(&self) -> usize {
        self.side * self.side
    }

    pub fn iou(&self, other: &FaceBox) -> f64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.side).min(other.x + other.side);
        let y1 = (self.y + self.side).min(other.y + other.side);
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        let inter = ((x1 - x0) * (y1 - y0)) as f64;
        inter / ((self.area() + other.area()) as f64 - inter)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectParams {
    pub scale_factor: f64,
    /// A cluster of raw hits is kept when it has more than this many members,
    /// i.e. at least this many neighbours besides one hit.
    pub min_neighbors: usize,
    pub min_size: usize,
}

impl DetectParams {
    pub fn new(scale_factor: f64, min_neighbors: usize, min_size: usize) -> Result<Self> {
        if !(scale_factor > 1.0) || !scale_factor.is_finite() {
            return Err(Error::Shape(format!("scale factor must exceed 1, got {scale_factor}")));
        }
        Ok(DetectParams {
            scale_factor,
            min_neighbors,
            min_size,
        })
    }

    /// Settings of the live webcam loop: scale 1.3, 3 neighbours, 150 px faces.
    pub fn live() -> Self {
        DetectParams {
            scale_factor: 1.3,
            min_neighbors: 3,
            min_size: 150,
        }
    }

    /// Live settings without the minimum face size; used for dataset preprocessing.
    pub fn dataset() -> Self {
        DetectParams {
            min_size: 0,
            ..Self::live()
        }
    }
}

impl Default for DetectParams {
    fn default() -> Self {
        Self::dataset()
    }
}

#[derive(Clone, Copy, Debug)]
struct ScaledRect {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    weight: f64,
}

#[derive(Clone, Debug)]
struct ScaledFeature {
    rects: Vec<ScaledRect>,
    tilted: bool,
}

struct ScaledCascade<'a> {
    cascade: &'a Cascade,
    window: usize,
    features: Vec<ScaledFeature>,
    norm_x: usize,
    norm_w: usize,
    inv_area: f64,
}

fn round(v: f64) -> usize {
    v.round_ties_even().max(0.0) as usize
}

impl<'a> ScaledCascade<'a> {
    fn new(cascade: &'a Cascade, factor: f64) -> Self {
        let window = round(cascade.width as f64 * factor);
        // variance is measured on the window inset by one base pixel
        let norm_x = round(factor);
        let norm_w = round((cascade.width as f64 - 2.0) * factor).max(1);
        let inv_area = 1.0 / (norm_w * norm_w) as f64;
        let features = cascade
            .features
            .iter()
            .map(|f| {
                let correction = if f.tilted { 0.5 * inv_area } else { inv_area };
                let mut rects: Vec<ScaledRect> = f
                    .rects
                    .iter()
                    .map(|r| {
                        let x = round(r.x as f64 * factor).min(window - 1);
                        let y = round(r.y as f64 * factor).min(window - 1);
                        ScaledRect {
                            x,
                            y,
                            w: round(r.w as f64 * factor).clamp(1, window - x),
                            h: round(r.h as f64 * factor).clamp(1, window - y),
                            weight: r.weight * correction,
                        }
                    })
                    .collect();
                // keep the weighted areas balanced after rounding
                if rects.len() > 1 {
                    let rest: f64 = rects[1..]
                        .iter()
                        .map(|r| r.weight * (r.w * r.h) as f64)
                        .sum();
                    let area0 = (rects[0].w * rects[0].h) as f64;
                    rects[0].weight = -rest / area0;
                }
                ScaledFeature {
                    rects,
                    tilted: f.tilted,
                }
            })
            .collect();
        ScaledCascade {
            cascade,
            window,
            features,
            norm_x,
            norm_w,
            inv_area,
        }
    }

    fn feature_value(&self, ii: &IntegralImages, f: &ScaledFeature, x: usize, y: usize) -> f64 {
        f.rects
            .iter()
            .map(|r| {
                let s = if f.tilted {
                    ii.tilted_rect_sum(x + r.x, y + r.y, r.w, r.h)
                } else {
                    ii.rect_sum(x + r.x, y + r.y, r.w, r.h)
                };
                r.weight * s as f64
            })
            .sum()
    }

    fn passes(&self, ii: &IntegralImages, x: usize, y: usize) -> bool {
        let (nx, nw) = (x + self.norm_x, self.norm_w);
        let ny = y + self.norm_x;
        let mean = ii.rect_sum(nx, ny, nw, nw) as f64 * self.inv_area;
        let variance = ii.rect_sq_sum(nx, ny, nw, nw) as f64 * self.inv_area - mean * mean;
        if variance <= 0.0 {
            return false;
        }
        let norm = variance.sqrt();
        for stage in &self.cascade.stages {
            let total: f64 = stage
                .trees
                .iter()
                .map(|tree| {
                    tree.eval(|node| {
                        self.feature_value(ii, &self.features[node.feature], x, y) < node.threshold * norm
                    })
                })
                .sum();
            if total < stage.threshold {
                return false;
            }
        }
        true
    }

    fn scan(&self, ii: &IntegralImages, step: usize) -> Vec<FaceBox> {
        let mut hits = Vec::new();
        let (w, h) = (ii.width(), ii.height());
        for y in (0..=h - self.window).step_by(step) {
            for x in (0..=w - self.window).step_by(step) {
                if self.passes(ii, x, y) {
                    hits.push(FaceBox {
                        x,
                        y,
                        side: self.window,
                    });
                }
            }
        }
        hits
    }
}

/// Raw cascade hits at every scale, in scan order.
pub fn raw_detections(img: &ImagePlane, cascade: &Cascade, params: &DetectParams) -> Vec<FaceBox> {
    let ii = IntegralImages::build(img, cascade.has_tilted());
    let limit = ii.width().min(ii.height());
    let min_size = params.min_size.max(cascade.width);
    let mut factors = Vec::new();
    let mut factor = 1.0f64;
    loop {
        let window = round(cascade.width as f64 * factor);
        if window > limit {
            break;
        }
        if window >= min_size {
            factors.push(factor);
        }
        factor *= params.scale_factor;
    }
    factors
        .par_iter()
        .map(|&f| {
            let scaled = ScaledCascade::new(cascade, f);
            if scaled.window > limit {
                return Vec::new();
            }
            scaled.scan(&ii, round(f).max(1))
        })
        .collect::<Vec<_>>()
        .concat()
}

fn similar(a: &FaceBox, b: &FaceBox, eps: f64) -> bool {
    let delta = eps * (a.side.min(b.side) as f64 + a.side.min(b.side) as f64) * 0.5;
    let close = |p: usize, q: usize| (p as f64 - q as f64).abs() <= delta;
    close(a.x, b.x) && close(a.y, b.y) && close(a.x + a.side, b.x + b.side) && close(a.y + a.side, b.y + b.side)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Clusters overlapping boxes and returns each cluster's mean box and size,
/// keeping clusters with more than `min_neighbors` members. Clusters come
/// out in order of their first member.
pub fn group_boxes(boxes: &[FaceBox], min_neighbors: usize) -> Vec<(FaceBox, usize)> {
    const EPS: f64 = 0.2;
    let n = boxes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if similar(&boxes[i], &boxes[j], EPS) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut order: Vec<usize> = Vec::new();
    let mut acc: std::collections::HashMap<usize, (usize, usize, usize, usize)> = Default::default();
    for (i, b) in boxes.iter().enumerate() {
        let root = find(&mut parent, i);
        let e = acc.entry(root).or_insert_with(|| {
            order.push(root);
            (0, 0, 0, 0)
        });
        e.0 += b.x;
        e.1 += b.y;
        e.2 += b.side;
        e.3 += 1;
    }
    order
        .into_iter()
        .filter_map(|root| {
            let (sx, sy, ss, count) = acc[&root];
            (count > min_neighbors).then(|| {
                let avg = |v: usize| round(v as f64 / count as f64);
                (
                    FaceBox {
                        x: avg(sx),
                        y: avg(sy),
                        side: avg(ss),
                    },
                    count,
                )
            })
        })
        .collect()
}

/// Detected faces, largest first.
pub fn detect(img: &ImagePlane, cascade: &Cascade, params: &DetectParams) -> Vec<FaceBox> {
    let raw = raw_detections(img, cascade, params);
    let min_size = params.min_size.max(cascade.width);
    let (w, h) = (img.width(), img.height());
    let mut faces: Vec<FaceBox> = group_boxes(&raw, params.min_neighbors)
        .into_iter()
        .map(|(b, _)| b)
        .filter(|b| b.side >= min_size && b.x + b.side <= w && b.y + b.side <= h)
        .collect();
    faces.sort_by(|a, b| b.side.cmp(&a.side).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
    faces
}

/// Crop of the largest detection, if any.
pub fn crop_largest_face(
    img: &ImagePlane,
    cascade: &Cascade,
    params: &DetectParams,
) -> Option<(FaceBox, ImagePlane)> {
    let face = largest(&detect(img, cascade, params))?;
    crop_box(img, face).map(|c| (face, c))
}

/// Largest box by side; the earliest wins among equals.
pub fn largest(boxes: &[FaceBox]) -> Option<FaceBox> {
    boxes
        .iter()
        .copied()
        .reduce(|best, b| if b.side > best.side { b } else { best })
}

pub fn crop_box(img: &ImagePlane, face: FaceBox) -> Option<ImagePlane> {
    img.crop(face.x, face.y, face.side, face.side).ok()
}
