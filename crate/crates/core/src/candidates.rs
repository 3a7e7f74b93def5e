//! Quadrilateral hypotheses from line combinations: line profiles with prefix
//! sums, border statistics, the contour score, fourth-side reconstruction
//! from three lines, the projective filter and the top-K search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::edges::{EdgeMap, EdgeMaps};
use crate::geometry::{
    intersect_finite, intersect_lines, rectify_to_parallelogram, CameraIntrinsics, HomoLine,
    Orientation, Point2, Quad,
};
use crate::hough::LineSet;

/// Number of raster points in each flank segment beyond a side's endpoints.
pub const FLANK_POINTS: usize = 10;

const NONZERO_EPS: f32 = 1e-6;

/// Raster of one line over one edge map. Lines with slope in `(-1, 1]` step
/// over columns, all others over rows.
#[derive(Debug, Clone)]
pub struct LineProfile {
    pub line: HomoLine,
    /// Cells visited, in increasing major-axis order, restricted to the map.
    pub raster: Vec<(usize, usize)>,
    pub prefix_intensity: Vec<f64>,
    pub prefix_nonzero: Vec<u32>,
    /// Major-axis index of `raster[0]`.
    start: isize,
    major_is_x: bool,
    offset: (f64, f64),
}

/// Round half up, stable for negative inputs.
#[inline]
fn round_index(v: f64) -> isize {
    (v + 0.5).floor() as isize
}

/// Map cell hit by the line at major-axis index `k`, possibly outside the map.
#[inline]
fn raster_cell(line: &HomoLine, major_is_x: bool, offset: (f64, f64), k: isize) -> (isize, isize) {
    if major_is_x {
        let x = k as f64 + offset.0;
        let y = line.y_at(x).unwrap_or(f64::NAN);
        (k, round_index(y - offset.1))
    } else {
        let y = k as f64 + offset.1;
        let x = line.x_at(y).unwrap_or(f64::NAN);
        (round_index(x - offset.0), k)
    }
}

fn in_map(map: &EdgeMap, c: (isize, isize)) -> Option<(usize, usize)> {
    (c.0 >= 0 && c.1 >= 0 && (c.0 as usize) < map.width && (c.1 as usize) < map.height)
        .then_some((c.0 as usize, c.1 as usize))
}

fn major_is_x(line: &HomoLine) -> bool {
    line.orientation() == Orientation::PrimarilyHorizontal
}

/// Inclusive major-axis index range whose continuous positions lie within
/// the segment's extent.
fn major_range(seg: (Point2, Point2), major_is_x: bool, offset: (f64, f64)) -> (isize, isize) {
    let (a, b, o) = if major_is_x {
        (seg.0.x, seg.1.x, offset.0)
    } else {
        (seg.0.y, seg.1.y, offset.1)
    };
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    ((lo - o).ceil() as isize, (hi - o).floor() as isize)
}

pub fn build_profile(line: &HomoLine, map: &EdgeMap) -> LineProfile {
    let mx = major_is_x(line);
    let offset = map.cell_offset();
    let extent = if mx { map.width } else { map.height };
    let mut raster = Vec::new();
    let mut start = 0isize;
    for k in 0..extent as isize {
        if let Some(cell) = in_map(map, raster_cell(line, mx, offset, k)) {
            if raster.is_empty() {
                start = k;
            } else if k != start + raster.len() as isize {
                // A straight line leaves a rectangle at most once.
                break;
            }
            raster.push(cell);
        }
    }
    let mut prefix_intensity = Vec::with_capacity(raster.len() + 1);
    let mut prefix_nonzero = Vec::with_capacity(raster.len() + 1);
    prefix_intensity.push(0.0);
    prefix_nonzero.push(0);
    let (mut acc, mut cnt) = (0.0f64, 0u32);
    for &(x, y) in &raster {
        let v = map.get(x, y);
        acc += v as f64;
        cnt += (v > NONZERO_EPS) as u32;
        prefix_intensity.push(acc);
        prefix_nonzero.push(cnt);
    }
    LineProfile {
        line: *line,
        raster,
        prefix_intensity,
        prefix_nonzero,
        start,
        major_is_x: mx,
        offset,
    }
}

/// Edge statistics of one quadrilateral side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BorderStats {
    pub w: f64,
    pub w_prime: f64,
    pub c: f64,
}

impl LineProfile {
    pub fn is_empty(&self) -> bool {
        self.raster.is_empty()
    }

    /// Sums over major indices `lo..=hi`, clipped to the raster.
    fn range_sums(&self, lo: isize, hi: isize) -> (f64, u32) {
        let n = self.raster.len() as isize;
        let a = (lo - self.start).clamp(0, n);
        let b = (hi - self.start + 1).clamp(0, n);
        if b <= a {
            return (0.0, 0);
        }
        let (a, b) = (a as usize, b as usize);
        (
            self.prefix_intensity[b] - self.prefix_intensity[a],
            self.prefix_nonzero[b] - self.prefix_nonzero[a],
        )
    }

    /// Constant-time statistics of a segment lying on the profile's line.
    pub fn border_stats(&self, segment: (Point2, Point2)) -> BorderStats {
        let (lo, hi) = major_range(segment, self.major_is_x, self.offset);
        let nominal = hi - lo + 1;
        if nominal <= 0 {
            return BorderStats::default();
        }
        let (w, nz) = self.range_sums(lo, hi);
        let f = FLANK_POINTS as isize;
        let (before, _) = self.range_sums(lo - f, lo - 1);
        let (after, _) = self.range_sums(hi + 1, hi + f);
        BorderStats {
            w,
            w_prime: before + after,
            c: nz as f64 / nominal as f64,
        }
    }
}

/// Same statistics as [`LineProfile::border_stats`], computed by walking
/// only the segment and its flanks.
pub fn segment_stats(line: &HomoLine, map: &EdgeMap, segment: (Point2, Point2)) -> BorderStats {
    let mx = major_is_x(line);
    let offset = map.cell_offset();
    let (lo, hi) = major_range(segment, mx, offset);
    let nominal = hi - lo + 1;
    if nominal <= 0 {
        return BorderStats::default();
    }
    let sample = |k: isize| {
        in_map(map, raster_cell(line, mx, offset, k))
            .map(|(x, y)| map.get(x, y))
            .unwrap_or(0.0)
    };
    let f = FLANK_POINTS as isize;
    let mut s = BorderStats::default();
    let mut nz = 0u32;
    for k in lo..=hi {
        let v = sample(k);
        s.w += v as f64;
        nz += (v > NONZERO_EPS) as u32;
    }
    for k in (lo - f..lo).chain(hi + 1..=hi + f) {
        s.w_prime += sample(k) as f64;
    }
    s.c = nz as f64 / nominal as f64;
    s
}

/// `sum(w) / (1 + sum(1 - c)) - sum(w')`.
pub fn contour_score(sides: &[BorderStats; 4]) -> f64 {
    let reward: f64 = sides.iter().map(|s| s.w).sum();
    let missing: f64 = sides.iter().map(|s| 1.0 - s.c).sum();
    let overshoot: f64 = sides.iter().map(|s| s.w_prime).sum();
    reward / (1.0 + missing) - overshoot
}

/// Image rectangle expanded by a relative margin on every side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub min_inside: usize,
}

impl Frame {
    pub fn new(width: usize, height: usize, margin: f64) -> Frame {
        Frame {
            width: width as f64,
            height: height as f64,
            margin,
            min_inside: 3,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        let (mx, my) = (self.margin * self.width, self.margin * self.height);
        p.x >= -mx && p.x <= self.width + mx && p.y >= -my && p.y <= self.height + my
    }

    pub fn admits(&self, q: &Quad) -> bool {
        q.vertices().iter().filter(|&&p| self.contains(p)).count() >= self.min_inside
    }
}

/// A quad built from two lines of one class, one line of the other class and
/// the reconstructed fourth side. `a`, `b` lie on the third line, `c` and
/// `d` on the first and second pair lines respectively.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    pub quad: Quad,
    pub a: Point2,
    pub b: Point2,
    pub c: Point2,
    pub d: Point2,
    pub restored: HomoLine,
}

/// Completes a three-line configuration into the central projection of a
/// rectangle of aspect `r` (width over height). A primarily horizontal pair
/// runs along the document width. Both placements on either side of the
/// third line are tried; quads that are not convex or fall outside `frame`
/// are dropped.
pub fn reconstruct_fourth_side(
    pair: (&HomoLine, &HomoLine),
    pair_orientation: Orientation,
    third: &HomoLine,
    r: f64,
    cam: &CameraIntrinsics,
    frame: Option<&Frame>,
) -> Vec<Reconstruction> {
    let mut out = Vec::new();
    let (Some(a), Some(b)) = (
        intersect_finite(pair.0, third),
        intersect_finite(pair.1, third),
    ) else {
        return out;
    };
    let Ok(vanishing) = intersect_lines(pair.0, pair.1) else {
        return out;
    };
    let d_pair = cam.back_project(&vanishing);
    let d_third = d_pair.cross(&cam.line_plane_normal(third));
    let normal = d_pair.cross(&d_third);
    let scale = d_pair.norm() * d_third.norm();
    if !(scale > 0.0) || normal.norm() < 1e-12 * scale {
        return out;
    }
    let mut normal = normal.normalize();
    let (ra, rb) = (cam.back_project_point(a), cam.back_project_point(b));
    if normal.dot(&ra) < 0.0 {
        normal = -normal;
    }
    let (sa, sb) = (normal.dot(&ra), normal.dot(&rb));
    if !(sa > 1e-12 && sb > 1e-12) {
        return out;
    }
    let (a3, b3) = (ra / sa, rb / sb);
    let known = (b3 - a3).norm();
    let offset = match pair_orientation {
        Orientation::PrimarilyHorizontal => r * known,
        Orientation::PrimarilyVertical => known / r,
    };
    let u = d_pair.normalize();
    for sign in [1.0, -1.0] {
        let c3 = a3 + u * (sign * offset);
        let d3 = b3 + u * (sign * offset);
        if !(c3.z > 1e-12 && d3.z > 1e-12) {
            continue;
        }
        let (Some(c), Some(d)) = (
            cam.project(&c3).and_then(|p| p.to_point()),
            cam.project(&d3).and_then(|p| p.to_point()),
        ) else {
            continue;
        };
        let Ok(quad) = Quad::new([a, c, d, b]) else {
            continue;
        };
        if frame.is_some_and(|f| !f.admits(&quad)) {
            continue;
        }
        let Ok(restored) = HomoLine::through(c, d) else {
            continue;
        };
        out.push(Reconstruction {
            quad,
            a,
            b,
            c,
            d,
            restored,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CandidateConfig {
    pub k: usize,
    pub aspect_tol: f64,
    pub angle_tol: f64,
    pub c_min: f64,
    pub w_min: f64,
    pub w_prime_max: f64,
    /// Relative expansion of the image rectangle used to admit quads.
    pub frame_margin: f64,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig {
            k: 4,
            aspect_tol: 0.07,
            angle_tol: 5.0,
            c_min: 0.8,
            w_min: 1.0,
            w_prime_max: f64::INFINITY,
            frame_margin: 0.25,
        }
    }
}

impl CandidateConfig {
    pub fn side_ok(&self, s: &BorderStats) -> bool {
        s.c >= self.c_min && s.w >= self.w_min && s.w_prime <= self.w_prime_max
    }
}

/// Rectifies `q` and accepts it when its aspect is within `aspect_tol` of
/// `r` or `1 / r` and its corner angle within `angle_tol` degrees of 90.
pub fn passes_projective_filter(
    q: &Quad,
    cam: &CameraIntrinsics,
    r: f64,
    cfg: &CandidateConfig,
) -> bool {
    let Ok(p) = rectify_to_parallelogram(q, cam) else {
        return false;
    };
    let aspect_ok = (p.aspect - r).abs() <= cfg.aspect_tol * r
        || (p.aspect - 1.0 / r).abs() <= cfg.aspect_tol / r;
    aspect_ok && (p.corner_angle - 90.0).abs() <= cfg.angle_tol
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    FourLine,
    ThreeLine,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::FourLine => "four_line",
            Provenance::ThreeLine => "three_line",
        })
    }
}

/// Reference into a [`LineSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRef {
    pub orientation: Orientation,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredQuad {
    pub quad: Quad,
    pub contour: f64,
    pub contrast: f64,
    pub combined: f64,
    pub provenance: Provenance,
    pub source_lines: Vec<LineRef>,
    /// Canonical side index of the reconstructed side.
    pub restored_side: Option<usize>,
    /// Enumeration order; earlier wins ties.
    pub seq: u64,
}

struct Ranked(ScoredQuad);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    // Greater is better: higher score, then earlier sequence number.
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .contour
            .total_cmp(&other.0.contour)
            .then(other.0.seq.cmp(&self.0.seq))
    }
}

/// Sorts best first: contour descending, then enumeration order.
pub fn sort_by_contour(v: &mut [ScoredQuad]) {
    v.sort_by(|a, b| b.contour.total_cmp(&a.contour).then(a.seq.cmp(&b.seq)));
}

/// Search strategy for the best `k` candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Size-`k` min-heap with early rejection on the edge reward.
    Pruned,
    /// Scores every candidate and sorts.
    Exhaustive,
}

struct Collector {
    k: usize,
    mode: SearchMode,
    heap: BinaryHeap<std::cmp::Reverse<Ranked>>,
    all: Vec<ScoredQuad>,
    scored: usize,
}

impl Collector {
    fn new(k: usize, mode: SearchMode) -> Self {
        Collector {
            k,
            mode,
            heap: BinaryHeap::new(),
            all: Vec::new(),
            scored: 0,
        }
    }

    fn offer(&mut self, reward: f64, make: impl FnOnce() -> ScoredQuad) {
        if self.k == 0 {
            return;
        }
        match self.mode {
            SearchMode::Exhaustive => {
                self.scored += 1;
                self.all.push(make());
            }
            SearchMode::Pruned => {
                let full = self.heap.len() == self.k;
                let root = self.heap.peek().map(|r| r.0 .0.contour);
                if full && reward < root.unwrap() {
                    return;
                }
                self.scored += 1;
                let cand = make();
                if !full {
                    self.heap.push(std::cmp::Reverse(Ranked(cand)));
                } else if cand.contour > root.unwrap() {
                    self.heap.pop();
                    self.heap.push(std::cmp::Reverse(Ranked(cand)));
                }
            }
        }
    }

    fn finish(self) -> Vec<ScoredQuad> {
        let mut v: Vec<ScoredQuad> = match self.mode {
            SearchMode::Exhaustive => self.all,
            SearchMode::Pruned => self.heap.into_iter().map(|r| r.0 .0).collect(),
        };
        sort_by_contour(&mut v);
        v.truncate(self.k);
        v
    }
}

/// Counters from one candidate search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub four_line_combinations: usize,
    pub three_line_combinations: usize,
    pub admitted: usize,
    pub scored: usize,
}

/// Line profiles over their matching maps.
pub struct ProfileSet {
    pub horizontal: Vec<LineProfile>,
    pub vertical: Vec<LineProfile>,
}

impl ProfileSet {
    pub fn build(lines: &LineSet, maps: &EdgeMaps) -> ProfileSet {
        let prof = |l: &HomoLine| build_profile(l, maps.for_orientation(l.orientation()));
        ProfileSet {
            horizontal: lines.horizontal.iter().map(|d| prof(&d.line)).collect(),
            vertical: lines.vertical.iter().map(|d| prof(&d.line)).collect(),
        }
    }

    fn get(&self, o: Orientation) -> &[LineProfile] {
        match o {
            Orientation::PrimarilyHorizontal => &self.horizontal,
            Orientation::PrimarilyVertical => &self.vertical,
        }
    }
}

fn restored_side_index(q: &Quad, c: Point2, d: Point2) -> Option<usize> {
    (0..4).find(|&i| {
        let (p0, p1) = q.side(i);
        (p0 == c && p1 == d) || (p0 == d && p1 == c)
    })
}

/// Runs the four-line and three-line searches. Returns the best `k` of each,
/// four-line first, each group sorted best first.
#[allow(clippy::too_many_arguments)]
pub fn enumerate_candidates(
    lines: &LineSet,
    maps: &EdgeMaps,
    cam: &CameraIntrinsics,
    r: f64,
    cfg: &CandidateConfig,
    frame: &Frame,
    mode: SearchMode,
) -> (Vec<ScoredQuad>, SearchStats) {
    let profiles = ProfileSet::build(lines, maps);
    enumerate_with_profiles(lines, &profiles, maps, cam, r, cfg, frame, mode)
}

#[allow(clippy::too_many_arguments)]
pub fn enumerate_with_profiles(
    lines: &LineSet,
    profiles: &ProfileSet,
    maps: &EdgeMaps,
    cam: &CameraIntrinsics,
    r: f64,
    cfg: &CandidateConfig,
    frame: &Frame,
    mode: SearchMode,
) -> (Vec<ScoredQuad>, SearchStats) {
    use Orientation::{PrimarilyHorizontal as H, PrimarilyVertical as V};
    let hl = &lines.horizontal;
    let vl = &lines.vertical;
    let (nh, nv) = (hl.len(), vl.len());
    let mut stats = SearchStats::default();
    let mut seq = 0u64;

    let cross: Vec<Option<Point2>> = (0..nh * nv)
        .map(|idx| intersect_finite(&hl[idx / nv].line, &vl[idx % nv].line))
        .collect();
    let x = |i: usize, k: usize| cross[i * nv + k];

    let mut four = Collector::new(cfg.k, mode);
    for i in 0..nh {
        for j in i + 1..nh {
            for k in 0..nv {
                for l in k + 1..nv {
                    stats.four_line_combinations += 1;
                    let (Some(p_ik), Some(p_il), Some(p_jl), Some(p_jk)) =
                        (x(i, k), x(i, l), x(j, l), x(j, k))
                    else {
                        continue;
                    };
                    let Ok(quad) = Quad::new([p_ik, p_il, p_jl, p_jk]) else {
                        continue;
                    };
                    if !frame.admits(&quad) {
                        continue;
                    }
                    let sides = [
                        profiles.horizontal[i].border_stats((p_ik, p_il)),
                        profiles.vertical[l].border_stats((p_il, p_jl)),
                        profiles.horizontal[j].border_stats((p_jk, p_jl)),
                        profiles.vertical[k].border_stats((p_ik, p_jk)),
                    ];
                    if !sides.iter().all(|s| cfg.side_ok(s)) {
                        continue;
                    }
                    if !passes_projective_filter(&quad, cam, r, cfg) {
                        continue;
                    }
                    stats.admitted += 1;
                    seq += 1;
                    let reward = sides.iter().map(|s| s.w).sum();
                    let this_seq = seq;
                    four.offer(reward, || ScoredQuad {
                        quad,
                        contour: contour_score(&sides),
                        contrast: 0.0,
                        combined: 0.0,
                        provenance: Provenance::FourLine,
                        source_lines: vec![
                            LineRef { orientation: H, index: i },
                            LineRef { orientation: H, index: j },
                            LineRef { orientation: V, index: k },
                            LineRef { orientation: V, index: l },
                        ],
                        restored_side: None,
                        seq: this_seq,
                    });
                }
            }
        }
    }

    let mut three = Collector::new(cfg.k, mode);
    for pair_o in [H, V] {
        let third_o = pair_o.other();
        let pair_lines = lines.get(pair_o);
        let third_lines = lines.get(third_o);
        let pair_prof = profiles.get(pair_o);
        let third_prof = profiles.get(third_o);
        for i in 0..pair_lines.len() {
            for j in i + 1..pair_lines.len() {
                for k in 0..third_lines.len() {
                    stats.three_line_combinations += 1;
                    let Some(third_stats) = (|| {
                        let (a, b) = match pair_o {
                            H => (x(i, k)?, x(j, k)?),
                            V => (x(k, i)?, x(k, j)?),
                        };
                        let s = third_prof[k].border_stats((a, b));
                        cfg.side_ok(&s).then_some(s)
                    })() else {
                        continue;
                    };
                    let recs = reconstruct_fourth_side(
                        (&pair_lines[i].line, &pair_lines[j].line),
                        pair_o,
                        &third_lines[k].line,
                        r,
                        cam,
                        Some(frame),
                    );
                    for rec in recs {
                        let s_i = pair_prof[i].border_stats((rec.a, rec.c));
                        let s_j = pair_prof[j].border_stats((rec.b, rec.d));
                        if !(cfg.side_ok(&s_i) && cfg.side_ok(&s_j)) {
                            continue;
                        }
                        let restored_map = maps.for_orientation(rec.restored.orientation());
                        let s_r = segment_stats(&rec.restored, restored_map, (rec.c, rec.d));
                        let sides = [third_stats, s_i, s_j, s_r];
                        stats.admitted += 1;
                        seq += 1;
                        let reward = sides.iter().map(|s| s.w).sum();
                        let this_seq = seq;
                        three.offer(reward, || ScoredQuad {
                            quad: rec.quad,
                            contour: contour_score(&sides),
                            contrast: 0.0,
                            combined: 0.0,
                            provenance: Provenance::ThreeLine,
                            source_lines: vec![
                                LineRef { orientation: pair_o, index: i },
                                LineRef { orientation: pair_o, index: j },
                                LineRef { orientation: third_o, index: k },
                            ],
                            restored_side: restored_side_index(&rec.quad, rec.c, rec.d),
                            seq: this_seq,
                        });
                    }
                }
            }
        }
    }

    stats.scored = four.scored + three.scored;
    let mut out = four.finish();
    out.extend(three.finish());
    (out, stats)
}
