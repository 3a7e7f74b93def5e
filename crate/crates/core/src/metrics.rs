//! Localization quality metrics: template-frame vertex discrepancy (plain and
//! minimized over renumbering), polygon IoU, IoU in the ground-truth frame
//! and mean foreground/background mask IoU.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{signed_area, Homography, Point2, Quad};
use crate::pipeline::TemplateSpec;

/// Success threshold on the minimized discrepancy.
pub const MIN_D_SUCCESS: f64 = 0.017;
/// Success threshold on IoU.
pub const IOU_SUCCESS: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub m: Quad,
    pub template: TemplateSpec,
    pub image_size: (usize, usize),
}

impl GroundTruth {
    /// Ground truth from corners listed in document order: the first two
    /// span the template width. The stored quad is in canonical order and
    /// the template is oriented so that `m[i]` still corresponds to
    /// `template.corners()[i]`.
    pub fn from_document_order(
        points: [Point2; 4],
        template: TemplateSpec,
        image_size: (usize, usize),
    ) -> Result<GroundTruth> {
        let perm = Quad::canonical_permutation(&points)
            .ok_or(Error::DegenerateQuad("ground truth is not a convex quadrilateral"))?;
        let m = Quad::new(perm.map(|i| points[i]))?;
        // Side 0 of `m` joins document corners perm[0] and perm[1]; it spans
        // the width iff those are {0, 1} or {2, 3}.
        let along_width = perm[0] / 2 == perm[1] / 2;
        Ok(GroundTruth {
            m,
            template: if along_width { template } else { template.transposed() },
            image_size,
        })
    }
}

/// Discrepancy with an explicit vertex correspondence `q[i] <-> m[i]`.
pub fn discrepancy_points(q: &[Point2; 4], m: &[Point2; 4], t: &TemplateSpec) -> f64 {
    let corners = t.corners();
    let Ok(h) = Homography::from_correspondences(q, &corners) else {
        return f64::INFINITY;
    };
    let mut worst = 0.0f64;
    for (mi, ti) in m.iter().zip(&corners) {
        match h.apply(*mi) {
            Some(p) if p.is_finite() => worst = worst.max(p.distance(*ti)),
            _ => return f64::INFINITY,
        }
    }
    worst / t.perimeter()
}

/// Maximum template-frame distance between corresponding vertices, with the
/// homography taking `q` onto the template, over the template perimeter.
pub fn discrepancy_d(q: &Quad, m: &Quad, t: &TemplateSpec) -> f64 {
    discrepancy_points(q.vertices(), m.vertices(), t)
}

/// Minimum of the discrepancy over the four cyclic renumberings of `q`.
pub fn min_d(q: &Quad, m: &Quad, t: &TemplateSpec) -> f64 {
    let v = q.vertices();
    (0..4)
        .map(|k| {
            let shifted = std::array::from_fn(|i| v[(i + k) % 4]);
            discrepancy_points(&shifted, m.vertices(), t)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Clips `subject` against the positively oriented convex polygon `clip`.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let inside = |p: Point2| (b - a).cross(p - a) >= 0.0;
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (ci, pi) = (inside(cur), inside(prev));
            if ci != pi {
                let (d1, d2) = ((b - a).cross(prev - a), (b - a).cross(cur - a));
                let t = d1 / (d1 - d2);
                out.push(prev.lerp(cur, t));
            }
            if ci {
                out.push(cur);
            }
        }
    }
    out
}

fn polygon_iou(a: &[Point2], b: &[Point2]) -> f64 {
    let inter = signed_area(&clip_convex(a, b)).abs();
    let union = signed_area(a).abs() + signed_area(b).abs() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub fn iou(q: &Quad, m: &Quad) -> f64 {
    polygon_iou(q.vertices(), m.vertices())
}

/// IoU of `q` mapped into the template frame by the homography taking `m`
/// onto the template rectangle. Zero if `q` crosses the homography's horizon.
pub fn iou_gt(q: &Quad, m: &Quad, t: &TemplateSpec) -> f64 {
    let corners = t.corners();
    let Ok(h) = Homography::from_correspondences(m.vertices(), &corners) else {
        return 0.0;
    };
    let centroid = m.vertices().iter().fold(Point2::default(), |a, &p| a + p) * 0.25;
    let side = h.apply_with_depth(centroid).1.signum();
    let mut mapped = [Point2::default(); 4];
    for (dst, p) in mapped.iter_mut().zip(q.vertices()) {
        let (img, w) = h.apply_with_depth(*p);
        if !(w * side > 0.0) || !img.is_finite() {
            return 0.0;
        }
        *dst = img;
    }
    if signed_area(&mapped) < 0.0 {
        mapped.reverse();
    }
    polygon_iou(&mapped, &corners)
}

/// Binary mask of pixels whose centers lie inside `q` (boundary inclusive).
pub fn quad_mask(q: &Quad, width: usize, height: usize) -> Vec<bool> {
    let mut mask = vec![false; width * height];
    let v = q.vertices();
    let xmin = v.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let xmax = v.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let ymin = v.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let ymax = v.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let clamp = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n);
    let (x0, x1) = (clamp(xmin - 1.0, width), clamp(xmax + 1.0, width));
    let (y0, y1) = (clamp(ymin - 1.0, height), clamp(ymax + 1.0, height));
    for y in y0..y1 {
        for x in x0..x1 {
            mask[y * width + x] = q.contains(Point2::new(x as f64 + 0.5, y as f64 + 0.5));
        }
    }
    mask
}

fn ratio_or_one(inter: usize, union: usize) -> f64 {
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean of the foreground and background IoU of two masks of equal size.
/// Two empty foregrounds give a foreground IoU of 1.
pub fn mask_mean_iou(a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (mut fg_i, mut fg_u, mut bg_i, mut bg_u) = (0, 0, 0, 0);
    for (&x, &y) in a.iter().zip(b) {
        fg_i += (x && y) as usize;
        fg_u += (x || y) as usize;
        bg_i += (!x && !y) as usize;
        bg_u += (!x || !y) as usize;
    }
    0.5 * (ratio_or_one(fg_i, fg_u) + ratio_or_one(bg_i, bg_u))
}

pub fn mean_iou(q: &Quad, m: &Quad, image_size: (usize, usize)) -> f64 {
    let (w, h) = image_size;
    mask_mean_iou(&quad_mask(q, w, h), &quad_mask(m, w, h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub min_d: f64,
    pub iou: f64,
    pub iou_gt: f64,
    pub mean_iou: f64,
}

impl MetricsReport {
    pub fn compute(q: &Quad, gt: &GroundTruth) -> MetricsReport {
        MetricsReport {
            min_d: min_d(q, &gt.m, &gt.template),
            iou: iou(q, &gt.m),
            iou_gt: iou_gt(q, &gt.m, &gt.template),
            mean_iou: mean_iou(q, &gt.m, gt.image_size),
        }
    }

    /// Scores of an entry that could not be processed.
    pub fn zero() -> MetricsReport {
        MetricsReport {
            min_d: f64::INFINITY,
            iou: 0.0,
            iou_gt: 0.0,
            mean_iou: 0.0,
        }
    }

    /// Scores assigned when nothing was detected.
    pub fn missed(gt: &GroundTruth) -> MetricsReport {
        let (w, h) = gt.image_size;
        let empty = vec![false; w * h];
        MetricsReport {
            min_d: f64::INFINITY,
            iou: 0.0,
            iou_gt: 0.0,
            mean_iou: mask_mean_iou(&empty, &quad_mask(&gt.m, w, h)),
        }
    }
}
