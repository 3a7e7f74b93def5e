//! Contrast between the inside and the surroundings of a quadrilateral,
//! measured on a projectively normalized canvas, and the final ranking.

use serde::{Deserialize, Serialize};

use crate::candidates::{sort_by_contour, ScoredQuad};
use crate::error::Result;
use crate::geometry::{Homography, Point2, Quad};
use crate::imaging::RgbImage;

const CHI_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastConfig {
    pub norm_height: usize,
    pub outer_margin: f64,
    pub inner_margin: f64,
    pub bins_per_channel: usize,
    pub combine_coeff: f64,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        ContrastConfig {
            norm_height: 64,
            outer_margin: 0.15,
            inner_margin: 0.15,
            bins_per_channel: 8,
            combine_coeff: 0.011,
        }
    }
}

/// Joint RGB histogram normalized to unit mass (all zeros when empty).
#[derive(Debug, Clone, PartialEq)]
pub struct ColorHistogram {
    pub bins_per_channel: usize,
    pub counts: Vec<f64>,
}

impl ColorHistogram {
    pub fn from_pixels<'a>(bins: usize, pixels: impl IntoIterator<Item = &'a [u8; 3]>) -> Self {
        let mut counts = vec![0.0; bins * bins * bins];
        let mut total = 0usize;
        for px in pixels {
            let b = px.map(|v| v as usize * bins / 256);
            counts[(b[0] * bins + b[1]) * bins + b[2]] += 1.0;
            total += 1;
        }
        if total > 0 {
            for c in &mut counts {
                *c /= total as f64;
            }
        }
        ColorHistogram {
            bins_per_channel: bins,
            counts,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0.0)
    }
}

/// `sum (a - b)^2 / (a + b + eps)`; lies in `[0, 2]` for normalized inputs.
pub fn chi_square(h1: &ColorHistogram, h2: &ColorHistogram) -> f64 {
    h1.counts
        .iter()
        .zip(&h2.counts)
        .map(|(&a, &b)| {
            let d = a - b;
            d * d / (a + b + CHI_EPS)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Inner,
    Outer,
    /// Between the inner rectangle and the document boundary.
    Excluded,
    /// Maps outside the source image.
    OffImage,
}

/// Canvas sampled from the image with one region label per pixel.
#[derive(Debug, Clone)]
pub struct NormalizedRegions {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
    pub labels: Vec<Region>,
}

impl NormalizedRegions {
    pub fn region(&self, which: Region) -> impl Iterator<Item = &[u8; 3]> {
        self.pixels
            .iter()
            .zip(&self.labels)
            .filter(move |(_, &l)| l == which)
            .map(|(p, _)| p)
    }
}

/// Document rectangle size on the canvas, matching the quad's apparent
/// orientation: the longer canvas side follows the quad's longer side pair.
fn document_size(q: &Quad, r: f64, cfg: &ContrastConfig) -> (usize, usize) {
    let len = |i: usize| {
        let (a, b) = q.side(i);
        a.distance(b)
    };
    let along = (len(0) + len(2)) / (len(1) + len(3)).max(1e-9);
    let long = ((cfg.norm_height as f64 * r).round() as usize).max(1);
    let short = cfg.norm_height;
    if (along.ln() - r.ln()).abs() <= (along.ln() + r.ln()).abs() {
        (long, short)
    } else {
        (short, long)
    }
}

pub fn normalize_regions(
    img: &RgbImage,
    q: &Quad,
    r: f64,
    cfg: &ContrastConfig,
) -> Result<NormalizedRegions> {
    let (dw, dh) = document_size(q, r, cfg);
    let mx = (cfg.outer_margin * dw as f64).round() as usize;
    let my = (cfg.outer_margin * dh as f64).round() as usize;
    let ix = (cfg.inner_margin * dw as f64).round() as usize;
    let iy = (cfg.inner_margin * dh as f64).round() as usize;
    let (width, height) = (dw + 2 * mx, dh + 2 * my);
    let (x0, y0, x1, y1) = (mx as f64, my as f64, (mx + dw) as f64, (my + dh) as f64);
    let rect = [
        Point2::new(x0, y0),
        Point2::new(x1, y0),
        Point2::new(x1, y1),
        Point2::new(x0, y1),
    ];
    let to_image = Homography::from_correspondences(&rect, q.vertices())?;
    let mut pixels = Vec::with_capacity(width * height);
    let mut labels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let inner = x >= mx + ix && x < mx + dw - ix && y >= my + iy && y < my + dh - iy;
            let inside_doc = x >= mx && x < mx + dw && y >= my && y < my + dh;
            let label = if inner {
                Region::Inner
            } else if inside_doc {
                Region::Excluded
            } else {
                Region::Outer
            };
            let at = to_image.apply(Point2::new(x as f64 + 0.5, y as f64 + 0.5));
            let sample = at.and_then(|p| {
                let (sx, sy) = (p.x.floor(), p.y.floor());
                (sx >= 0.0 && sy >= 0.0 && sx < img.width() as f64 && sy < img.height() as f64)
                    .then(|| img.get(sx as usize, sy as usize))
            });
            match sample {
                Some(px) => {
                    pixels.push(px);
                    labels.push(label);
                }
                None => {
                    pixels.push([0; 3]);
                    labels.push(Region::OffImage);
                }
            }
        }
    }
    Ok(NormalizedRegions {
        width,
        height,
        pixels,
        labels,
    })
}

/// Scaled chi-square distance between inner and outer histograms; zero when
/// either region has no in-image samples.
pub fn contrast_score(img: &RgbImage, q: &Quad, r: f64, cfg: &ContrastConfig) -> Result<f64> {
    let regions = normalize_regions(img, q, r, cfg)?;
    let inner = ColorHistogram::from_pixels(cfg.bins_per_channel, regions.region(Region::Inner));
    let outer = ColorHistogram::from_pixels(cfg.bins_per_channel, regions.region(Region::Outer));
    if inner.is_empty() || outer.is_empty() {
        return Ok(0.0);
    }
    Ok(100.0 * chi_square(&inner, &outer))
}

/// Re-ranks the `k` best candidates by contour with the combined score.
pub fn rank_final(
    candidates: &[ScoredQuad],
    img: &RgbImage,
    r: f64,
    k: usize,
    cfg: &ContrastConfig,
) -> Option<ScoredQuad> {
    let mut top = candidates.to_vec();
    sort_by_contour(&mut top);
    top.truncate(k.max(1));
    for c in &mut top {
        c.contrast = contrast_score(img, &c.quad, r, cfg).unwrap_or(0.0);
        c.combined = c.contrast + cfg.combine_coeff * c.contour;
    }
    top.into_iter().reduce(|best, c| {
        let better = c
            .combined
            .total_cmp(&best.combined)
            .then(c.contour.total_cmp(&best.contour))
            .then(best.seq.cmp(&c.seq));
        if better.is_gt() {
            c
        } else {
            best
        }
    })
}
