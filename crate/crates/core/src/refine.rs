//! Border refinement of a detected quad on a higher-resolution image.

use serde::{Deserialize, Serialize};

use crate::edges::{compute_edge_map, EdgeParams};
use crate::candidates::reconstruct_fourth_side;
use crate::geometry::{intersect_finite, CameraIntrinsics, HomoLine, Orientation, Point2, Quad};
use crate::hough::{fht_limited, inverse_peak, Band, HoughPeak, SlopeFamily};
use crate::imaging::{extract_strip, resize_short_side, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub enabled: bool,
    /// Refinement resolution as a multiple of the working resolution.
    pub scale: f64,
    /// Half-height of the search strip, working pixels.
    pub vicinity: f64,
    pub min_angle_deg: f64,
    /// Sides shorter than this (working pixels) are kept as they are.
    pub min_side: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            enabled: true,
            scale: 3.0,
            vicinity: 2.0,
            min_angle_deg: 10.0,
            min_side: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedSide {
    /// Line in refinement-image coordinates.
    pub line: HomoLine,
    pub refined: bool,
    /// Largest distance from the scaled input endpoints to `line`.
    pub displacement: f64,
}

fn fallback_side(side: (Point2, Point2), scale: f64) -> RefinedSide {
    let line = HomoLine::through(side.0 * scale, side.1 * scale)
        .unwrap_or_else(|_| HomoLine::new(0.0, 1.0, 0.0).unwrap());
    RefinedSide {
        line,
        refined: false,
        displacement: 0.0,
    }
}

/// Re-detects one side as the strongest straight edge in a thin strip
/// around it. `scale` maps working coordinates to `img` coordinates.
pub fn refine_side(
    img: &RgbImage,
    side: (Point2, Point2),
    scale: f64,
    cfg: &RefineConfig,
    params: &EdgeParams,
) -> RefinedSide {
    if side.0.distance(side.1) < cfg.min_side {
        return fallback_side(side, scale);
    }
    let Ok((strip, sim)) = extract_strip(img, side, cfg.vicinity, scale) else {
        return fallback_side(side, scale);
    };
    let map = compute_edge_map(&strip, Orientation::PrimarilyHorizontal, params);
    let (w, h) = (strip.width(), strip.height());
    let n = w.next_power_of_two();
    let limit = ((h - 1) * (n - 1)).div_ceil((w - 1).max(1));
    let band = Band::whole(&map);
    let mut best: Option<(HoughPeak, crate::hough::HoughImage)> = None;
    for family in SlopeFamily::pair(Orientation::PrimarilyHorizontal) {
        let hough = fht_limited(&map, band, family, limit);
        let (column, shift, value) = hough.argmax();
        if value > 0.0 && best.as_ref().is_none_or(|(p, _)| value > p.value) {
            best = Some((
                HoughPeak {
                    column,
                    shift,
                    value,
                    family,
                },
                hough,
            ));
        }
    }
    let Some((peak, hough)) = best else {
        return fallback_side(side, scale);
    };
    let found = inverse_peak(&peak, &hough, map.cell_offset());
    let (a, b) = found.endpoints;
    let Ok(line) = HomoLine::through(sim.apply(a), sim.apply(b)) else {
        return fallback_side(side, scale);
    };
    let displacement = line
        .signed_distance(side.0 * scale)
        .abs()
        .max(line.signed_distance(side.1 * scale).abs());
    if displacement > (cfg.vicinity + 1.0) * scale {
        return fallback_side(side, scale);
    }
    RefinedSide {
        line,
        refined: true,
        displacement,
    }
}

fn assemble(lines: &[HomoLine; 4], min_angle: f64) -> Option<Quad> {
    let mut v = [Point2::default(); 4];
    for i in 0..4 {
        v[i] = intersect_finite(&lines[(i + 3) % 4], &lines[i])?;
    }
    let q = Quad::new(v).ok()?;
    (q.min_angle_deg() >= min_angle).then_some(q)
}

/// A quad side that was not observed but reconstructed from the other three.
/// It is re-derived from the refined sides instead of being searched for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestoredHint {
    pub side: usize,
    /// Orientation class of the two sides adjacent to `side`.
    pub pair_orientation: Orientation,
    /// Camera in working coordinates.
    pub camera: CameraIntrinsics,
    pub aspect: f64,
}

fn restore_line(lines: &[HomoLine; 4], coarse: &HomoLine, hint: &RestoredHint, scale: f64) -> Option<HomoLine> {
    let k = hint.side;
    let (p0, p1, third) = (&lines[(k + 1) % 4], &lines[(k + 3) % 4], &lines[(k + 2) % 4]);
    let cam = hint.camera.scaled(scale);
    let recs = reconstruct_fourth_side((p0, p1), hint.pair_orientation, third, hint.aspect, &cam, None);
    // The coarse side is a reference for which of the two placements was found.
    let far = |l: &HomoLine| {
        let (a, b) = (intersect_finite(l, p0), intersect_finite(l, p1));
        match (a, b) {
            (Some(a), Some(b)) => coarse.signed_distance(a).abs().max(coarse.signed_distance(b).abs()),
            _ => f64::INFINITY,
        }
    };
    recs.into_iter()
        .map(|r| r.restored)
        .min_by(|a, b| far(a).total_cmp(&far(b)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    /// Quad in original-image coordinates.
    pub quad: Quad,
    pub refined_sides: [bool; 4],
}

/// Refines `q_working` on `img_hi`, the image at `hi_factor` original pixels
/// per pixel. `working_factor` is original pixels per working pixel.
pub fn refine_quad_on(
    img_hi: &RgbImage,
    hi_factor: f64,
    q_working: &Quad,
    working_factor: f64,
    cfg: &RefineConfig,
    params: &EdgeParams,
    restored: Option<&RestoredHint>,
) -> RefineOutcome {
    let scale = working_factor / hi_factor;
    let skip = restored.map(|h| h.side);
    let sides: [RefinedSide; 4] = std::array::from_fn(|i| {
        if skip == Some(i) {
            fallback_side(q_working.side(i), scale)
        } else {
            refine_side(img_hi, q_working.side(i), scale, cfg, params)
        }
    });
    let coarse: [HomoLine; 4] = std::array::from_fn(|i| fallback_side(q_working.side(i), scale).line);

    let mut use_refined = sides.map(|s| s.refined);
    let mut order: Vec<usize> = (0..4).filter(|&i| use_refined[i]).collect();
    order.sort_by(|&a, &b| sides[b].displacement.total_cmp(&sides[a].displacement).then(a.cmp(&b)));
    let mut reverted = order.into_iter();
    let quad_hi = loop {
        let mut lines = std::array::from_fn(|i| if use_refined[i] { sides[i].line } else { coarse[i] });
        if let Some(h) = restored {
            if let Some(l) = restore_line(&lines, &coarse[h.side], h, scale) {
                lines[h.side] = l;
            }
        }
        if let Some(q) = assemble(&lines, cfg.min_angle_deg) {
            break q;
        }
        match reverted.next() {
            Some(i) => use_refined[i] = false,
            None => break q_working.scaled(scale),
        }
    };
    RefineOutcome {
        quad: quad_hi.scaled(hi_factor),
        refined_sides: use_refined,
    }
}

/// Builds the refinement image from the original and refines.
pub fn refine_quad(
    original: &RgbImage,
    q_working: &Quad,
    working_factor: f64,
    working_short: usize,
    cfg: &RefineConfig,
    params: &EdgeParams,
    restored: Option<&RestoredHint>,
) -> RefineOutcome {
    let target = (working_short as f64 * cfg.scale).round() as usize;
    let hi = resize_short_side(original, target);
    refine_quad_on(&hi.image, hi.factor, q_working, working_factor, cfg, params, restored)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dark rectangle on a light background at 3x working resolution.
    fn scene(x0: f64, y0: f64, x1: f64, y1: f64) -> RgbImage {
        RgbImage::from_fn(360, 480, |x, y| {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            if cx > x0 && cx < x1 && cy > y0 && cy < y1 {
                [30, 30, 40]
            } else {
                [220, 215, 210]
            }
        })
        .unwrap()
    }

    #[test]
    fn offset_side_snaps_to_border() {
        // Border at y = 150 in 3x units, i.e. 50 working px; coarse side at 51.5.
        let img = scene(60.0, 150.0, 300.0, 400.0);
        let side = (Point2::new(30.0, 51.5), Point2::new(90.0, 51.5));
        let r = refine_side(&img, side, 3.0, &RefineConfig::default(), &EdgeParams::default());
        assert!(r.refined);
        for x in [100.0, 180.0, 260.0] {
            let y = r.line.y_at(x).unwrap();
            assert!((y - 150.0).abs() <= 0.5, "y {y}");
        }
    }

    #[test]
    fn blank_strip_falls_back() {
        let img = RgbImage::filled(360, 480, [100; 3]).unwrap();
        let side = (Point2::new(30.0, 50.0), Point2::new(90.0, 50.0));
        let r = refine_side(&img, side, 3.0, &RefineConfig::default(), &EdgeParams::default());
        assert!(!r.refined);
        assert!((r.line.y_at(10.0).unwrap() - 150.0).abs() < 1e-9);
    }

    #[test]
    fn exact_quad_is_nearly_fixed() {
        let img = scene(60.0, 90.0, 300.0, 420.0);
        let q = Quad::from_arrays([[20.0, 30.0], [100.0, 30.0], [100.0, 140.0], [20.0, 140.0]]).unwrap();
        let out = refine_quad_on(&img, 1.0, &q, 3.0, &RefineConfig::default(), &EdgeParams::default(), None);
        for (a, b) in out.quad.vertices().iter().zip(q.scaled(3.0).vertices()) {
            assert!(a.distance(*b) <= 1.5, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn off_frame_quad_stays_convex() {
        let img = scene(-100.0, -100.0, 200.0, 250.0);
        let q = Quad::from_arrays([[-40.0, -40.0], [66.7, -40.0], [66.7, 83.3], [-40.0, 83.3]]).unwrap();
        let out = refine_quad_on(&img, 1.0, &q, 3.0, &RefineConfig::default(), &EdgeParams::default(), None);
        assert!(out.quad.area() > 0.0);
        assert!(out.quad.min_angle_deg() >= 10.0);
    }
}
