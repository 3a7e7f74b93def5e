//! Quad overlays: detection in red, ground truth in green.

use crate::geometry::{Point2, Quad};
use crate::imaging::RgbImage;

pub const RESULT_COLOR: [u8; 3] = [255, 0, 0];
pub const TRUTH_COLOR: [u8; 3] = [0, 255, 0];

/// Draws a segment of the given thickness with a square brush.
pub fn draw_segment(img: &mut RgbImage, a: Point2, b: Point2, color: [u8; 3], thickness: usize) {
    let steps = (a.distance(b).ceil() as usize).max(1) * 2;
    let half = thickness as isize / 2;
    let (w, h) = (img.width() as isize, img.height() as isize);
    for s in 0..=steps {
        let p = a.lerp(b, s as f64 / steps as f64);
        let (cx, cy) = (p.x.floor() as isize, p.y.floor() as isize);
        for dy in -half..=half {
            for dx in -half..=half {
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && x < w && y < h {
                    img.put(x as usize, y as usize, color);
                }
            }
        }
    }
}

pub fn draw_quad(img: &mut RgbImage, q: &Quad, color: [u8; 3], thickness: usize) {
    for i in 0..4 {
        let (a, b) = q.side(i);
        draw_segment(img, a, b, color, thickness);
    }
}

/// Copy of `img` with the ground truth and the detection drawn on top.
pub fn render_overlay(img: &RgbImage, result: Option<&Quad>, truth: Option<&Quad>) -> RgbImage {
    let mut out = img.clone();
    let thickness = (img.short_side() / 240).max(1) + 1;
    if let Some(m) = truth {
        draw_quad(&mut out, m, TRUTH_COLOR, thickness);
    }
    if let Some(q) = result {
        draw_quad(&mut out, q, RESULT_COLOR, thickness);
    }
    out
}
