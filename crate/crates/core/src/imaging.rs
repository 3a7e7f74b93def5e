//! RGB rasters, isotropic resampling and oriented strip extraction.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Row-major 8-bit RGB raster.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RgbImage({}x{})", self.width, self.height)
    }
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<RgbImage> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty {width}x{height} image")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "expected {} samples, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Result<RgbImage> {
        let data = color.iter().copied().cycle().take(width * height * 3).collect();
        RgbImage::new(width, height, data)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<RgbImage> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        RgbImage::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn short_side(&self) -> usize {
        self.width.min(self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    /// Sample with the pixel at the nearest integer location, clamped to the border.
    pub fn get_clamped(&self, x: isize, y: isize) -> [u8; 3] {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Bilinear sample at a continuous coordinate; pixel centers sit at
    /// half-integers and the border is replicated.
    pub fn bilinear(&self, p: Point2) -> [f64; 3] {
        let fx = p.x - 0.5;
        let fy = p.y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let (tx, ty) = (fx - x0, fy - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let c00 = self.get_clamped(x0, y0);
        let c10 = self.get_clamped(x0 + 1, y0);
        let c01 = self.get_clamped(x0, y0 + 1);
        let c11 = self.get_clamped(x0 + 1, y0 + 1);
        std::array::from_fn(|c| {
            let top = c00[c] as f64 * (1.0 - tx) + c10[c] as f64 * tx;
            let bottom = c01[c] as f64 * (1.0 - tx) + c11[c] as f64 * tx;
            top * (1.0 - ty) + bottom * ty
        })
    }

    pub fn transposed(&self) -> RgbImage {
        let mut data = vec![0u8; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                let src = (y * self.width + x) * 3;
                let dst = (x * self.height + y) * 3;
                data[dst..dst + 3].copy_from_slice(&self.data[src..src + 3]);
            }
        }
        RgbImage {
            width: self.height,
            height: self.width,
            data,
        }
    }

    /// Rotates the image by 180 degrees.
    pub fn rotated_180(&self) -> RgbImage {
        let mut data = Vec::with_capacity(self.data.len());
        for px in self.data.chunks_exact(3).rev() {
            data.extend_from_slice(px);
        }
        RgbImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn from_image(img: image::RgbImage) -> Result<RgbImage> {
        let (w, h) = img.dimensions();
        RgbImage::new(w as usize, h as usize, img.into_raw())
    }

    pub fn to_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length matches dimensions")
    }

    /// Decodes any supported format; alpha is discarded.
    pub fn load(path: impl AsRef<Path>) -> Result<RgbImage> {
        let img = image::open(path.as_ref())?;
        RgbImage::from_image(img.to_rgb8())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_image().save(path.as_ref())?;
        Ok(())
    }
}

/// An image resampled by an isotropic factor: `original = factor * resampled`.
#[derive(Debug, Clone)]
pub struct Rescaled {
    pub image: RgbImage,
    pub factor: f64,
    /// False when the input was returned unchanged.
    pub resampled: bool,
}

/// Downscales so that the shortest side equals `target_short`, with area
/// averaging. Inputs already at or below the target are returned as is.
pub fn downscale_working(img: &RgbImage, target_short: usize) -> Rescaled {
    if img.short_side() <= target_short {
        return Rescaled {
            image: img.clone(),
            factor: 1.0,
            resampled: false,
        };
    }
    resize_short_side(img, target_short)
}

/// Output size for an isotropic resize to the given short side; the long side
/// is rounded to the nearest integer.
pub fn scaled_dimensions(width: usize, height: usize, target_short: usize) -> (usize, usize, f64) {
    let factor = width.min(height) as f64 / target_short as f64;
    let long = |n: usize| ((n as f64 / factor).round() as usize).max(1);
    if width <= height {
        (target_short, long(height), factor)
    } else {
        (long(width), target_short, factor)
    }
}

/// Isotropic resize to the given short side: area averaging when shrinking,
/// bilinear interpolation when enlarging.
pub fn resize_short_side(img: &RgbImage, target_short: usize) -> Rescaled {
    let (w, h, factor) = scaled_dimensions(img.width, img.height, target_short);
    if w == img.width && h == img.height {
        return Rescaled {
            image: img.clone(),
            factor: 1.0,
            resampled: false,
        };
    }
    let image = if factor > 1.0 {
        area_resize(img, w, h, factor)
    } else {
        bilinear_resize(img, w, h, factor)
    };
    Rescaled {
        image,
        factor,
        resampled: true,
    }
}

/// Per output index, the (source index, weight) pairs covering
/// `[i * factor, (i + 1) * factor)`, normalized to sum 1.
fn area_weights(src_len: usize, dst_len: usize, factor: f64) -> Vec<Vec<(usize, f32)>> {
    (0..dst_len)
        .map(|i| {
            let lo = i as f64 * factor;
            let hi = ((i + 1) as f64 * factor).min(src_len as f64);
            let mut taps = Vec::new();
            let mut j = lo.floor() as usize;
            let mut total = 0.0;
            while (j as f64) < hi && j < src_len {
                let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((j, overlap as f32));
                    total += overlap;
                }
                j += 1;
            }
            if taps.is_empty() {
                taps.push((src_len - 1, 1.0));
                total = 1.0;
            }
            for t in &mut taps {
                t.1 /= total as f32;
            }
            taps
        })
        .collect()
}

fn area_resize(img: &RgbImage, w: usize, h: usize, factor: f64) -> RgbImage {
    let wx = area_weights(img.width, w, factor);
    let wy = area_weights(img.height, h, factor);
    // Horizontal pass into f32 rows.
    let mut rows = vec![0f32; img.height * w * 3];
    for y in 0..img.height {
        let src = &img.data[y * img.width * 3..(y + 1) * img.width * 3];
        for (x, taps) in wx.iter().enumerate() {
            let mut acc = [0f32; 3];
            for &(j, wt) in taps {
                for c in 0..3 {
                    acc[c] += src[j * 3 + c] as f32 * wt;
                }
            }
            rows[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&acc);
        }
    }
    let mut data = vec![0u8; w * h * 3];
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..w {
            let mut acc = [0f32; 3];
            for &(j, wt) in taps {
                for c in 0..3 {
                    acc[c] += rows[(j * w + x) * 3 + c] * wt;
                }
            }
            for c in 0..3 {
                data[(y * w + x) * 3 + c] = acc[c].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    RgbImage {
        width: w,
        height: h,
        data,
    }
}

fn bilinear_resize(img: &RgbImage, w: usize, h: usize, factor: f64) -> RgbImage {
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let p = Point2::new((x as f64 + 0.5) * factor, (y as f64 + 0.5) * factor);
            let c = img.bilinear(p);
            data.extend(c.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
        }
    }
    RgbImage {
        width: w,
        height: h,
        data,
    }
}

/// `p -> scale * R(rotation) * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: f64,
    pub translation: [f64; 2],
}

impl Similarity {
    pub fn apply(&self, p: Point2) -> Point2 {
        let (s, c) = self.rotation.sin_cos();
        Point2::new(
            self.scale * (c * p.x - s * p.y) + self.translation[0],
            self.scale * (s * p.x + c * p.y) + self.translation[1],
        )
    }

    pub fn apply_inverse(&self, p: Point2) -> Point2 {
        let (s, c) = self.rotation.sin_cos();
        let d = Point2::new(p.x - self.translation[0], p.y - self.translation[1]);
        Point2::new(
            (c * d.x + s * d.y) / self.scale,
            (-s * d.x + c * d.y) / self.scale,
        )
    }
}

/// Resamples a band of half-height `vicinity_working * scale` around a
/// working-resolution segment from an image at `scale` times the working
/// resolution, so that the segment runs along the strip's central row.
///
/// The returned similarity maps strip coordinates into `img` coordinates.
/// The center of strip pixel `(0, half)` lands on the scaled start point.
pub fn extract_strip(
    img: &RgbImage,
    segment: (Point2, Point2),
    vicinity_working: f64,
    scale: f64,
) -> Result<(RgbImage, Similarity)> {
    let p = segment.0 * scale;
    let q = segment.1 * scale;
    let len = p.distance(q);
    if !(len > 1e-9) {
        return Err(Error::ZeroLengthSegment);
    }
    let width = len.round() as usize + 1;
    let half = (vicinity_working * scale).round() as usize;
    let height = 2 * half + 1;
    let rotation = (q.y - p.y).atan2(q.x - p.x);
    let (s, c) = rotation.sin_cos();
    let offset = Point2::new(0.5, half as f64 + 0.5);
    let translation = [
        p.x - (c * offset.x - s * offset.y),
        p.y - (s * offset.x + c * offset.y),
    ];
    let sim = Similarity {
        scale: 1.0,
        rotation,
        translation,
    };
    let mut data = Vec::with_capacity(width * height * 3);
    for j in 0..height {
        for i in 0..width {
            let at = sim.apply(Point2::new(i as f64 + 0.5, j as f64 + 0.5));
            data.extend(img.bilinear(at).iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
        }
    }
    Ok((RgbImage::new(width, height, data)?, sim))
}
