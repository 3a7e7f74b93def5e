//! Fast Hough Transform over dyadic line patterns, peak selection and
//! conversion of accumulator peaks back into image lines.
//!
//! The core transform handles patterns that advance by `0..=limit` columns
//! while descending all (padded) rows of a band. The other three slope
//! families are obtained by mirroring and transposing the band on read.

use serde::{Deserialize, Serialize};

use crate::edges::EdgeMap;
use crate::geometry::{HomoLine, Orientation, Point2};

/// Slope family of a transform: `Vert*` patterns descend rows, `Horz*`
/// patterns advance along columns; `Plus` drifts towards increasing
/// coordinates, `Minus` towards decreasing ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SlopeFamily {
    VertPlus,
    VertMinus,
    HorzPlus,
    HorzMinus,
}

impl SlopeFamily {
    pub fn orientation(self) -> Orientation {
        match self {
            SlopeFamily::VertPlus | SlopeFamily::VertMinus => Orientation::PrimarilyVertical,
            SlopeFamily::HorzPlus | SlopeFamily::HorzMinus => Orientation::PrimarilyHorizontal,
        }
    }

    pub fn pair(o: Orientation) -> [SlopeFamily; 2] {
        match o {
            Orientation::PrimarilyVertical => [SlopeFamily::VertPlus, SlopeFamily::VertMinus],
            Orientation::PrimarilyHorizontal => [SlopeFamily::HorzPlus, SlopeFamily::HorzMinus],
        }
    }

    fn is_minus(self) -> bool {
        matches!(self, SlopeFamily::VertMinus | SlopeFamily::HorzMinus)
    }

    fn is_transposed(self) -> bool {
        matches!(self, SlopeFamily::HorzPlus | SlopeFamily::HorzMinus)
    }
}

/// Axis-aligned sub-rectangle of an edge map, in cell indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Band {
    pub fn whole(map: &EdgeMap) -> Band {
        Band {
            x0: 0,
            y0: 0,
            width: map.width,
            height: map.height,
        }
    }

    /// Splits `extent` cells into `parts` runs; the remainder goes to the last.
    pub fn split(extent: usize, parts: usize) -> Vec<(usize, usize)> {
        let parts = parts.max(1).min(extent.max(1));
        let base = extent / parts;
        (0..parts)
            .map(|k| {
                let start = k * base;
                let len = if k + 1 == parts { extent - start } else { base };
                (start, len)
            })
            .collect()
    }
}

/// Accumulator of one slope family over one band.
///
/// The cell at column `i` and row `s` holds the sum along the pattern with
/// intercept `i - limit` and total shift `s`.
#[derive(Debug, Clone)]
pub struct HoughImage {
    pub accumulator: Vec<f64>,
    /// Number of intercept columns: band extent across the pattern plus `limit`.
    pub columns: usize,
    pub limit: usize,
    /// Padded length of the recursion axis (a power of two).
    pub padded: usize,
    pub family: SlopeFamily,
    pub band: Band,
    pub band_index: usize,
}

impl HoughImage {
    pub fn shifts(&self) -> usize {
        self.limit + 1
    }

    #[inline]
    pub fn get(&self, column: usize, shift: usize) -> f64 {
        self.accumulator[shift * self.columns + column]
    }

    pub fn intercept(&self, column: usize) -> isize {
        column as isize - self.limit as isize
    }

    pub fn max_value(&self) -> f64 {
        self.accumulator.iter().copied().fold(0.0, f64::max)
    }

    /// (column, shift, value) of the largest cell; the first in row-major
    /// order wins ties.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for s in 0..self.shifts() {
            for i in 0..self.columns {
                let v = self.get(i, s);
                if v > best.2 {
                    best = (i, s, v);
                }
            }
        }
        best
    }

    /// Band extent along and across the pattern direction.
    fn extents(&self) -> (usize, usize) {
        if self.family.is_transposed() {
            (self.band.width, self.band.height)
        } else {
            (self.band.height, self.band.width)
        }
    }

    /// Endpoints, in map cell indices, of the pattern with the given
    /// intercept and shift: the first and the last padded row.
    pub fn pattern_endpoints(&self, intercept: isize, shift: usize) -> ((f64, f64), (f64, f64)) {
        let (_, across) = self.extents();
        let last = (self.padded - 1) as f64;
        let (a0, a1) = if self.family.is_minus() {
            let top = across as f64 - 1.0 - intercept as f64;
            (top, top - shift as f64)
        } else {
            (intercept as f64, (intercept + shift as isize) as f64)
        };
        let (x0, y0) = (self.band.x0 as f64, self.band.y0 as f64);
        if self.family.is_transposed() {
            ((x0, y0 + a0), (x0 + last, y0 + a1))
        } else {
            ((x0 + a0, y0), (x0 + a1, y0 + last))
        }
    }

    /// Peak location in a space shared by both sign families of a band:
    /// the unmirrored starting coordinate and the signed shift.
    fn common_coords(&self, column: usize, shift: usize) -> (f64, f64) {
        let t = self.intercept(column);
        let (_, across) = self.extents();
        if self.family.is_minus() {
            (across as f64 - 1.0 - t as f64, -(shift as f64))
        } else {
            (t as f64, shift as f64)
        }
    }
}

/// Full transform: every slope from 0 to 1 over the padded band.
pub fn fht(map: &EdgeMap, band: Band, family: SlopeFamily) -> HoughImage {
    let along = if family.is_transposed() {
        band.width
    } else {
        band.height
    };
    let n = along.max(1).next_power_of_two();
    fht_limited(map, band, family, n - 1)
}

/// Transform restricted to total shifts `0..=limit` (clamped to the padded
/// length minus one).
pub fn fht_limited(map: &EdgeMap, band: Band, family: SlopeFamily, limit: usize) -> HoughImage {
    let (along, across) = if family.is_transposed() {
        (band.width, band.height)
    } else {
        (band.height, band.width)
    };
    let n = along.max(1).next_power_of_two();
    let limit = limit.min(n - 1);
    let cols = across + limit;

    // Oriented source: row r, column j holds the band cell at (along r, across j - limit).
    let mut src = vec![0f64; n * cols];
    for r in 0..along {
        let row = &mut src[r * cols..(r + 1) * cols];
        for a in 0..across {
            let a_src = if family.is_minus() { across - 1 - a } else { a };
            let (x, y) = if family.is_transposed() {
                (band.x0 + r, band.y0 + a_src)
            } else {
                (band.x0 + a_src, band.y0 + r)
            };
            row[limit + a] = map.get(x, y) as f64;
        }
    }

    let accumulator = dyadic_sums(src, n, cols, limit);
    HoughImage {
        accumulator,
        columns: cols,
        limit,
        padded: n,
        family,
        band,
        band_index: 0,
    }
}

/// Bottom-up merging of dyadic blocks. Level buffers are laid out as
/// `(block, shift, column)`.
fn dyadic_sums(src: Vec<f64>, n: usize, cols: usize, limit: usize) -> Vec<f64> {
    let total_levels = n.trailing_zeros();
    let shifts_at = |m: usize| {
        let level_gap = total_levels - m.trailing_zeros();
        (m - 1).min(limit >> level_gap) + 1
    };
    let mut cur = src;
    let mut next = vec![0f64; n * cols];
    let mut m = 1;
    while m < n {
        let k_in = shifts_at(m);
        let k_out = shifts_at(2 * m);
        let blocks = n / (2 * m);
        for b in 0..blocks {
            let top_base = (2 * b) * k_in * cols;
            let bot_base = (2 * b + 1) * k_in * cols;
            for s in 0..k_out {
                let hs = s >> 1;
                let off = (s + 1) >> 1;
                let top = &cur[top_base + hs * cols..top_base + (hs + 1) * cols];
                let bot = &cur[bot_base + hs * cols..bot_base + (hs + 1) * cols];
                let out_base = (b * k_out + s) * cols;
                let out = &mut next[out_base..out_base + cols];
                let split = cols.saturating_sub(off);
                for i in 0..split {
                    out[i] = top[i] + bot[i + off];
                }
                out[split..].copy_from_slice(&top[split..]);
            }
        }
        std::mem::swap(&mut cur, &mut next);
        m *= 2;
    }
    cur.truncate(shifts_at(n) * cols);
    cur
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoughPeak {
    pub column: usize,
    pub shift: usize,
    pub value: f64,
    pub family: SlopeFamily,
}

/// Line recovered from an accumulator peak, in full-image continuous
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedLine {
    pub line: HomoLine,
    /// Class of the line set this line belongs to.
    pub orientation: Orientation,
    pub band_index: usize,
    pub peak_value: f64,
    pub family: SlopeFamily,
    pub intercept: isize,
    pub shift: usize,
    /// Pattern endpoints in continuous coordinates.
    pub endpoints: (Point2, Point2),
}

/// Converts a peak of `hough` into the straight line through its pattern's
/// endpoints. `cell_offset` is the continuous position of cell (0, 0).
pub fn inverse_peak(peak: &HoughPeak, hough: &HoughImage, cell_offset: (f64, f64)) -> DetectedLine {
    let t = hough.intercept(peak.column);
    let (a, b) = hough.pattern_endpoints(t, peak.shift);
    let p = Point2::new(a.0 + cell_offset.0, a.1 + cell_offset.1);
    let q = Point2::new(b.0 + cell_offset.0, b.1 + cell_offset.1);
    DetectedLine {
        line: HomoLine::through(p, q).expect("pattern endpoints are distinct rows"),
        orientation: peak.family.orientation(),
        band_index: hough.band_index,
        peak_value: peak.value,
        family: peak.family,
        intercept: t,
        shift: peak.shift,
        endpoints: (p, q),
    }
}

fn is_local_max(h: &HoughImage, i: usize, s: usize) -> bool {
    let v = h.get(i, s);
    for ds in -1isize..=1 {
        for di in -1isize..=1 {
            if ds == 0 && di == 0 {
                continue;
            }
            let (s2, i2) = (s as isize + ds, i as isize + di);
            if s2 < 0 || i2 < 0 || s2 as usize >= h.shifts() || i2 as usize >= h.columns {
                continue;
            }
            let u = h.get(i2 as usize, s2 as usize);
            let strict = (ds == -1 && di == 0) || (ds == 0 && di == -1);
            if u > v || (strict && u == v) {
                return false;
            }
        }
    }
    true
}

/// Greedy selection of accumulator local maxima over the images of one part.
pub fn select_peaks(
    images: &[&HoughImage],
    count: usize,
    rel_threshold: f64,
    min_sep: f64,
    global_max: f64,
) -> Vec<(usize, HoughPeak)> {
    if !(global_max > 0.0) || count == 0 {
        return Vec::new();
    }
    let threshold = rel_threshold * global_max;
    let mut cands: Vec<(usize, HoughPeak)> = Vec::new();
    for (k, h) in images.iter().enumerate() {
        for s in 0..h.shifts() {
            for i in 0..h.columns {
                let v = h.get(i, s);
                if v > 0.0 && v >= threshold && is_local_max(h, i, s) {
                    cands.push((
                        k,
                        HoughPeak {
                            column: i,
                            shift: s,
                            value: v,
                            family: h.family,
                        },
                    ));
                }
            }
        }
    }
    cands.sort_by(|a, b| {
        b.1.value
            .total_cmp(&a.1.value)
            .then(a.0.cmp(&b.0))
            .then(a.1.shift.cmp(&b.1.shift))
            .then(a.1.column.cmp(&b.1.column))
    });
    let mut accepted: Vec<(usize, HoughPeak)> = Vec::new();
    let mut coords: Vec<(f64, f64)> = Vec::new();
    for (k, p) in cands {
        let c = images[k].common_coords(p.column, p.shift);
        if coords
            .iter()
            .all(|o| (c.0 - o.0).hypot(c.1 - o.1) > min_sep)
        {
            accepted.push((k, p));
            coords.push(c);
            if accepted.len() == count {
                break;
            }
        }
    }
    accepted
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughConfig {
    pub peaks_per_part: usize,
    pub rel_threshold: f64,
    pub min_separation: f64,
    pub bands: usize,
}

impl Default for HoughConfig {
    fn default() -> Self {
        HoughConfig {
            peaks_per_part: 15,
            rel_threshold: 0.2,
            min_separation: 10.0,
            bands: 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LineSet {
    pub horizontal: Vec<DetectedLine>,
    pub vertical: Vec<DetectedLine>,
}

impl LineSet {
    pub fn get(&self, o: Orientation) -> &[DetectedLine] {
        match o {
            Orientation::PrimarilyHorizontal => &self.horizontal,
            Orientation::PrimarilyVertical => &self.vertical,
        }
    }
}

/// Transforms one map split into bands across its recursion axis and selects
/// peaks per band against the maximum over all bands.
fn detect_banded(map: &EdgeMap, bands: &[Band], cfg: &HoughConfig) -> Vec<DetectedLine> {
    let families = SlopeFamily::pair(map.orientation);
    let images: Vec<[HoughImage; 2]> = bands
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            families.map(|f| {
                let mut h = fht(map, b, f);
                h.band_index = k;
                h
            })
        })
        .collect();
    let global_max = images
        .iter()
        .flat_map(|p| p.iter().map(HoughImage::max_value))
        .fold(0.0, f64::max);
    let mut lines = Vec::new();
    for part in &images {
        let refs = [&part[0], &part[1]];
        let peaks = select_peaks(
            &refs,
            cfg.peaks_per_part,
            cfg.rel_threshold,
            cfg.min_separation,
            global_max,
        );
        for (k, p) in peaks {
            lines.push(inverse_peak(&p, refs[k], map.cell_offset()));
        }
    }
    lines
}

/// Detects primarily horizontal lines on `h_map` and primarily vertical ones
/// on `v_map`. The orientation running along the longer image dimension is
/// searched in `cfg.bands` parts stacked along that dimension.
pub fn detect_lines(h_map: &EdgeMap, v_map: &EdgeMap, cfg: &HoughConfig) -> LineSet {
    let tall = v_map.height >= v_map.width;
    let whole_h = [Band::whole(h_map)];
    let whole_v = [Band::whole(v_map)];
    if tall {
        let bands: Vec<Band> = Band::split(v_map.height, cfg.bands)
            .into_iter()
            .map(|(y0, height)| Band {
                x0: 0,
                y0,
                width: v_map.width,
                height,
            })
            .collect();
        LineSet {
            horizontal: detect_banded(h_map, &whole_h, cfg),
            vertical: detect_banded(v_map, &bands, cfg),
        }
    } else {
        let bands: Vec<Band> = Band::split(h_map.width, cfg.bands)
            .into_iter()
            .map(|(x0, width)| Band {
                x0,
                y0: 0,
                width,
                height: h_map.height,
            })
            .collect();
        LineSet {
            horizontal: detect_banded(h_map, &bands, cfg),
            vertical: detect_banded(v_map, &whole_v, cfg),
        }
    }
}
