//! Directional edge maps: per-column (or per-row) morphology, derivative,
//! non-maximum suppression, connected-component filtering and blur.

use serde::{Deserialize, Serialize};

use crate::geometry::Orientation;
use crate::imaging::RgbImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeParams {
    pub morph_wing: usize,
    pub nms_abs_threshold: f32,
    pub neighbor_reach: usize,
    pub size_fraction: f64,
    pub fill_value: f32,
    pub blur_sigma: f64,
    pub blur_wing: usize,
}

impl Default for EdgeParams {
    fn default() -> Self {
        EdgeParams {
            morph_wing: 1,
            nms_abs_threshold: 1.0,
            neighbor_reach: 3,
            size_fraction: 0.10,
            fill_value: 1.0,
            blur_sigma: 1.0,
            blur_wing: 3,
        }
    }
}

/// Non-negative edge raster.
///
/// A primarily horizontal map stores at `(x, y)` the response of the
/// boundary between rows `y - 1` and `y`, located at `(x + 0.5, y)` in
/// continuous image coordinates. A primarily vertical map is the transposed
/// convention, located at `(x, y + 0.5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub orientation: Orientation,
}

impl EdgeMap {
    pub fn zeros(width: usize, height: usize, orientation: Orientation) -> EdgeMap {
        EdgeMap {
            width,
            height,
            values: vec![0.0; width * height],
            orientation,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Value at a signed location; zero outside the raster.
    #[inline]
    pub fn get_or_zero(&self, x: isize, y: isize) -> f32 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0.0
        } else {
            self.get(x as usize, y as usize)
        }
    }

    /// Continuous-coordinate offset of a raster cell relative to its index.
    pub fn cell_offset(&self) -> (f64, f64) {
        match self.orientation {
            Orientation::PrimarilyHorizontal => (0.5, 0.0),
            Orientation::PrimarilyVertical => (0.0, 0.5),
        }
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Swaps axes; a horizontal map becomes a vertical one and vice versa.
    pub fn transposed(&self) -> EdgeMap {
        let mut values = vec![0.0; self.values.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                values[x * self.height + y] = self.values[y * self.width + x];
            }
        }
        EdgeMap {
            width: self.height,
            height: self.width,
            values,
            orientation: self.orientation.other(),
        }
    }

    /// Grayscale rendering normalized to the map maximum.
    pub fn to_gray_image(&self) -> image::GrayImage {
        let max = self.max_value();
        let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Luma([(self.get(x as usize, y as usize) * scale).round() as u8])
        })
    }
}

/// Both directional maps of one image.
#[derive(Debug, Clone)]
pub struct EdgeMaps {
    pub horizontal: EdgeMap,
    pub vertical: EdgeMap,
}

impl EdgeMaps {
    pub fn compute(img: &RgbImage, params: &EdgeParams) -> EdgeMaps {
        EdgeMaps {
            horizontal: compute_edge_map(img, Orientation::PrimarilyHorizontal, params),
            vertical: compute_edge_map(img, Orientation::PrimarilyVertical, params),
        }
    }

    pub fn for_orientation(&self, o: Orientation) -> &EdgeMap {
        match o {
            Orientation::PrimarilyHorizontal => &self.horizontal,
            Orientation::PrimarilyVertical => &self.vertical,
        }
    }
}

pub fn compute_edge_map(img: &RgbImage, orientation: Orientation, params: &EdgeParams) -> EdgeMap {
    let (w, h) = (img.width(), img.height());
    match orientation {
        // Filter along columns: one line per column, positions are rows.
        Orientation::PrimarilyHorizontal => {
            let lines = line_major_response(w, h, |l, p| img.get(l, p), params);
            let mut values = vec![0.0; w * h];
            for l in 0..w {
                for p in 0..h {
                    values[p * w + l] = lines[l * h + p];
                }
            }
            EdgeMap {
                width: w,
                height: h,
                values,
                orientation,
            }
        }
        Orientation::PrimarilyVertical => EdgeMap {
            width: w,
            height: h,
            values: line_major_response(h, w, |l, p| img.get(p, l), params),
            orientation,
        },
    }
}

/// Runs the 1-D pipeline along `n_lines` independent lines of length `len`;
/// the result is stored line-major.
fn line_major_response(
    n_lines: usize,
    len: usize,
    pixel: impl Fn(usize, usize) -> [u8; 3],
    params: &EdgeParams,
) -> Vec<f32> {
    let mut deriv = vec![0f32; n_lines * len];
    let mut chan = vec![vec![0u8; len]; 3];
    let mut tmp = vec![0u8; len];
    for l in 0..n_lines {
        for p in 0..len {
            let px = pixel(l, p);
            for (c, ch) in chan.iter_mut().enumerate() {
                ch[p] = px[c];
            }
        }
        let d = &mut deriv[l * len..(l + 1) * len];
        for s in chan.iter_mut() {
            // Opening, then closing.
            erode(s, &mut tmp, params.morph_wing);
            dilate(&tmp, s, params.morph_wing);
            dilate(s, &mut tmp, params.morph_wing);
            erode(&tmp, s, params.morph_wing);
            for p in 1..len {
                d[p] += s[p] as f32 - s[p - 1] as f32;
            }
        }
        for v in d.iter_mut() {
            *v /= 3.0;
        }
    }

    let survivors = suppress_non_maxima(&deriv, n_lines, len, params.nms_abs_threshold);
    let kept = filter_components(&survivors, n_lines, len, params);

    let mut filled = vec![0f32; n_lines * len];
    for &idx in &kept {
        filled[idx] = params.fill_value;
    }
    let kernel = gaussian_kernel(params.blur_sigma, params.blur_wing);
    let mut out = vec![0f32; n_lines * len];
    for l in 0..n_lines {
        blur_line(
            &filled[l * len..(l + 1) * len],
            &mut out[l * len..(l + 1) * len],
            &kernel,
        );
    }
    out
}

fn erode(src: &[u8], dst: &mut [u8], wing: usize) {
    window_extreme(src, dst, wing, u8::min);
}

fn dilate(src: &[u8], dst: &mut [u8], wing: usize) {
    window_extreme(src, dst, wing, u8::max);
}

fn window_extreme(src: &[u8], dst: &mut [u8], wing: usize, pick: fn(u8, u8) -> u8) {
    let n = src.len();
    for (i, d) in dst.iter_mut().enumerate().take(n) {
        let lo = i.saturating_sub(wing);
        let hi = (i + wing).min(n - 1);
        *d = src[lo..=hi].iter().copied().reduce(pick).unwrap();
    }
}

/// Flat indices (line-major) of local maxima of `|d|` along each line.
fn suppress_non_maxima(deriv: &[f32], n_lines: usize, len: usize, threshold: f32) -> Vec<usize> {
    let mut out = Vec::new();
    for l in 0..n_lines {
        let d = &deriv[l * len..(l + 1) * len];
        for p in 0..len {
            let v = d[p].abs();
            let prev = if p > 0 { d[p - 1].abs() } else { 0.0 };
            let next = if p + 1 < len { d[p + 1].abs() } else { 0.0 };
            if v > threshold && v > prev && v >= next {
                out.push(l * len + p);
            }
        }
    }
    out
}

struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a as usize] < self.size[b as usize] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b as usize] = a;
        self.size[a as usize] += self.size[b as usize];
    }
}

/// Groups survivors under the slope-cone adjacency and drops small components.
fn filter_components(
    survivors: &[usize],
    n_lines: usize,
    len: usize,
    params: &EdgeParams,
) -> Vec<usize> {
    if survivors.is_empty() {
        return Vec::new();
    }
    let mut label = vec![u32::MAX; n_lines * len];
    for (k, &idx) in survivors.iter().enumerate() {
        label[idx] = k as u32;
    }
    let mut sets = DisjointSet::new(survivors.len());
    let reach = params.neighbor_reach as isize;
    for (k, &idx) in survivors.iter().enumerate() {
        let (l, p) = ((idx / len) as isize, (idx % len) as isize);
        for dl in 1..=reach {
            let l2 = l + dl;
            if l2 >= n_lines as isize {
                break;
            }
            for dp in -dl..=dl {
                let p2 = p + dp;
                if p2 < 0 || p2 >= len as isize {
                    continue;
                }
                let other = label[l2 as usize * len + p2 as usize];
                if other != u32::MAX {
                    sets.union(k as u32, other);
                }
            }
        }
    }
    let roots: Vec<u32> = (0..survivors.len() as u32).map(|k| sets.find(k)).collect();
    let largest = roots
        .iter()
        .map(|&r| sets.size[r as usize])
        .max()
        .unwrap_or(0) as f64;
    let threshold = params.size_fraction * largest.min(n_lines as f64 / 2.0);
    survivors
        .iter()
        .zip(&roots)
        .filter(|(_, &r)| sets.size[r as usize] as f64 >= threshold)
        .map(|(&idx, _)| idx)
        .collect()
}

/// Normalized sampled Gaussian on `[-wing, wing]`.
pub fn gaussian_kernel(sigma: f64, wing: usize) -> Vec<f32> {
    let raw: Vec<f64> = (-(wing as isize)..=wing as isize)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| (v / total) as f32).collect()
}

fn blur_line(src: &[f32], dst: &mut [f32], kernel: &[f32]) {
    let n = src.len() as isize;
    let wing = (kernel.len() / 2) as isize;
    if src.iter().all(|&v| v == 0.0) {
        dst.fill(0.0);
        return;
    }
    for i in 0..n {
        let mut acc = 0.0;
        for (k, &wt) in kernel.iter().enumerate() {
            let j = (i + k as isize - wing).clamp(0, n - 1);
            acc += src[j as usize] * wt;
        }
        dst[i as usize] = acc;
    }
}
