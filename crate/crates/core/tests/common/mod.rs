#![allow(dead_code)]

use docloc_core::edges::EdgeMap;
use docloc_core::hough::{Band, SlopeFamily};
use docloc_core::{CameraIntrinsics, Point2, Quad, RgbImage};
use nalgebra::{Rotation3, Vector3};
use rand::Rng;

pub const ASPECTS: [f64; 3] = [1.586, 210.0 / 297.0, 0.63];

/// Pinhole view of the rectangle `[0, r] x [0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct PoseView {
    /// Corners in document order: (0,0), (r,0), (r,1), (0,1).
    pub corners: [Point2; 4],
    pub quad: Quad,
}

/// Views the rectangle under a rotation of at most `max_deg` about each
/// axis, placed so that all corners fall inside a `width x height` frame.
pub fn random_view<R: Rng>(
    rng: &mut R,
    r: f64,
    cam: &CameraIntrinsics,
    width: f64,
    height: f64,
    max_deg: f64,
) -> PoseView {
    loop {
        let a = max_deg.to_radians();
        let rot = Rotation3::from_euler_angles(
            rng.gen_range(-a..=a),
            rng.gen_range(-a..=a),
            rng.gen_range(-a..=a),
        );
        let fill = rng.gen_range(0.35..0.7);
        let depth = cam.focal_px * r.max(1.0) / (fill * width.min(height));
        let centre = Vector3::new(
            (rng.gen_range(0.35..0.65) * width - cam.principal.x) / cam.focal_px * depth,
            (rng.gen_range(0.35..0.65) * height - cam.principal.y) / cam.focal_px * depth,
            depth,
        );
        let doc = [(0.0, 0.0), (r, 0.0), (r, 1.0), (0.0, 1.0)];
        let pts: Vec<Option<Point2>> = doc
            .iter()
            .map(|&(x, y)| {
                let p = rot * Vector3::new(x - r / 2.0, y - 0.5, 0.0) + centre;
                (p.z > 1e-3).then(|| {
                    Point2::new(
                        cam.focal_px * p.x / p.z + cam.principal.x,
                        cam.focal_px * p.y / p.z + cam.principal.y,
                    )
                })
            })
            .collect();
        let Some(corners) = pts.iter().copied().collect::<Option<Vec<_>>>() else {
            continue;
        };
        let corners: [Point2; 4] = corners.try_into().unwrap();
        let inside = corners
            .iter()
            .all(|p| p.x > 1.0 && p.y > 1.0 && p.x < width - 1.0 && p.y < height - 1.0);
        if let (true, Ok(quad)) = (inside, Quad::new(corners)) {
            return PoseView { corners, quad };
        }
    }
}

/// Column offsets, row by row, of the dyadic pattern of `n` rows with total
/// shift `s`: each half follows the half-length pattern of shift `s / 2`,
/// the lower half displaced by `ceil(s / 2)`.
pub fn dyadic_offsets(n: usize, s: usize) -> Vec<usize> {
    if n == 1 {
        return vec![0];
    }
    let half = dyadic_offsets(n / 2, s / 2);
    let jump = s.div_ceil(2);
    half.iter().copied().chain(half.iter().map(|o| o + jump)).collect()
}

/// Direct summation over every pattern; indexed `[shift][column]` with
/// column `i` holding intercept `i - (n - 1)`.
pub fn brute_force_fht(map: &EdgeMap, band: Band, family: SlopeFamily) -> Vec<Vec<f64>> {
    let transposed = matches!(family, SlopeFamily::HorzPlus | SlopeFamily::HorzMinus);
    let minus = matches!(family, SlopeFamily::VertMinus | SlopeFamily::HorzMinus);
    let (along, across) = if transposed {
        (band.width, band.height)
    } else {
        (band.height, band.width)
    };
    let n = along.next_power_of_two();
    let limit = n - 1;
    let value = |row: usize, a: isize| -> f64 {
        if row >= along || a < 0 || a as usize >= across {
            return 0.0;
        }
        let a = a as usize;
        let a = if minus { across - 1 - a } else { a };
        let (x, y) = if transposed {
            (band.x0 + row, band.y0 + a)
        } else {
            (band.x0 + a, band.y0 + row)
        };
        map.get(x, y) as f64
    };
    (0..n)
        .map(|s| {
            let offsets = dyadic_offsets(n, s);
            (0..across + limit)
                .map(|i| {
                    let t = i as isize - limit as isize;
                    offsets
                        .iter()
                        .enumerate()
                        .map(|(row, &o)| value(row, t + o as isize))
                        .sum()
                })
                .collect()
        })
        .collect()
}

pub fn random_map<R: Rng>(rng: &mut R, width: usize, height: usize, orientation: docloc_core::Orientation) -> EdgeMap {
    let mut m = EdgeMap::zeros(width, height, orientation);
    for v in &mut m.values {
        *v = rng.gen_range(0.0f32..1.0);
    }
    m
}

/// Fills `quad` with `inside` over `outside`, 4x4 supersampled.
pub fn render_quad(width: usize, height: usize, quad: &Quad, inside: [u8; 3], outside: [u8; 3]) -> RgbImage {
    RgbImage::from_fn(width, height, |x, y| {
        let mut hits = 0u32;
        for sy in 0..4 {
            for sx in 0..4 {
                let p = Point2::new(x as f64 + (sx as f64 + 0.5) / 4.0, y as f64 + (sy as f64 + 0.5) / 4.0);
                hits += quad.contains(p) as u32;
            }
        }
        let t = hits as f64 / 16.0;
        std::array::from_fn(|c| (inside[c] as f64 * t + outside[c] as f64 * (1.0 - t)).round() as u8)
    })
    .unwrap()
}

/// Largest distance from the segment `(a, b)`, sampled at 11 points, to `line`.
pub fn segment_to_line(a: Point2, b: Point2, line: &docloc_core::HomoLine) -> f64 {
    (0..=10)
        .map(|k| line.signed_distance(a.lerp(b, k as f64 / 10.0)).abs())
        .fold(0.0, f64::max)
}
