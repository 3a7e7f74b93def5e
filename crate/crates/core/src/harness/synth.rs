//! Seeded synthetic scenes: a rectangle of known aspect rendered under a
//! random pinhole pose over a textured background.

use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, HomoLine, Homography, Point2, Quad};
use crate::harness::manifest::{write_manifest, ManifestEntry};
use crate::imaging::RgbImage;
use crate::metrics::GroundTruth;
use crate::pipeline::TemplateSpec;

/// Aspect ratios drawn by [`SceneSpec::random`].
pub const SCENE_ASPECTS: [f64; 3] = [1.586, 210.0 / 297.0, 0.63];

const MAX_TRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    Flat,
    Stripes,
    Checker,
    Noise,
}

impl Background {
    pub const ALL: [Background; 4] = [
        Background::Flat,
        Background::Stripes,
        Background::Checker,
        Background::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Background::Flat => "flat",
            Background::Stripes => "stripes",
            Background::Checker => "checker",
            Background::Noise => "noise",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Document width over height.
    pub aspect: f64,
    pub doc_color: [u8; 3],
    pub clutter_lines: usize,
    pub background: Background,
    pub background_color: [u8; 3],
    /// Stripe half-period, checker cell or noise correlation length, pixels.
    pub texture_scale: f64,
    /// Range of the luminance step between stripe or checker phases.
    pub texture_contrast: (f64, f64),
    /// Amplitude of the sinusoidal warp of stripes and checkers, pixels.
    pub texture_warp: f64,
    /// Maximum angle between the document normal and the optical axis.
    pub max_tilt_deg: f64,
    pub max_roll_deg: f64,
    /// Range of the document's longer extent as a fraction of the shorter
    /// image side.
    pub size_range: (f64, f64),
    /// Side (in canonical quad order) whose border is hidden.
    pub occluded_side: Option<usize>,
    pub occluder_color: [u8; 3],
    pub noise_sigma: f64,
    pub focal_coeff: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// Scene `index` of a suite seeded by `seed`. Backgrounds cycle through
    /// the four textures.
    pub fn random(seed: u64, index: usize, occlude: bool) -> SceneSpec {
        let scene_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
        let aspect = SCENE_ASPECTS[rng.gen_range(0..SCENE_ASPECTS.len())];
        let light_doc = rng.gen_bool(0.75);
        let doc_color = if light_doc {
            let base = rng.gen_range(200..=245);
            [0, 1, 2].map(|_| (base + rng.gen_range(-12i32..=8)).clamp(0, 255) as u8)
        } else {
            let base = rng.gen_range(40..=90);
            [0, 1, 2].map(|_| (base + rng.gen_range(-20i32..=20)).clamp(0, 255) as u8)
        };
        let background_color = loop {
            let c: [u8; 3] = [0, 1, 2].map(|_| rng.gen_range(20..=235));
            if (luminance(c) - luminance(doc_color)).abs() >= 70.0 {
                break c;
            }
        };
        let occluder_color = loop {
            let c: [u8; 3] = [0, 1, 2].map(|_| rng.gen_range(20..=235));
            if (luminance(c) - luminance(doc_color)).abs() >= 60.0 {
                break c;
            }
        };
        SceneSpec {
            width: 720,
            height: 1280,
            aspect,
            doc_color,
            clutter_lines: rng.gen_range(0..=6),
            background: Background::ALL[index % 4],
            background_color,
            texture_scale: match Background::ALL[index % 4] {
                Background::Noise => 40.0,
                _ => 90.0,
            },
            texture_contrast: (25.0, 45.0),
            texture_warp: 24.0,
            max_tilt_deg: 40.0,
            max_roll_deg: 20.0,
            size_range: (0.5, 0.85),
            occluded_side: occlude.then(|| rng.gen_range(0..4)),
            occluder_color,
            noise_sigma: 3.0,
            focal_coeff: 0.705,
            seed: scene_seed,
        }
    }

    /// Scene `index` of the standard suite: one scene in four has an
    /// occluded side, spread evenly over the backgrounds.
    pub fn suite(seed: u64, index: usize) -> SceneSpec {
        SceneSpec::random(seed, index, (index / 4) % 4 == 3)
    }

    /// Like [`SceneSpec::suite`] with fine stripes and checkers, whose
    /// edges cover most of the background at working resolution.
    pub fn stress(seed: u64, index: usize) -> SceneSpec {
        let base = SceneSpec::suite(seed, index);
        match base.background {
            Background::Stripes | Background::Checker => SceneSpec {
                texture_scale: 28.0,
                texture_warp: 16.0,
                ..base
            },
            _ => base,
        }
    }

    pub fn template(&self) -> TemplateSpec {
        TemplateSpec::new(self.aspect, 1.0).expect("positive aspect")
    }
}

pub fn luminance(c: [u8; 3]) -> f64 {
    0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub image: RgbImage,
    pub truth: GroundTruth,
    /// Document corners in document order, starting at `(0, 0)`.
    pub corners: [Point2; 4],
    /// Homography from document coordinates `[0, r] x [0, 1]` to the image.
    pub homography: Homography,
}

struct Pose {
    quad: Quad,
    corners: [Point2; 4],
}

fn sample_pose(spec: &SceneSpec, cam: &CameraIntrinsics, rng: &mut ChaCha8Rng) -> Option<Pose> {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let short = w.min(h);
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    let tilt = rng.gen_range(0.0..=spec.max_tilt_deg).to_radians();
    let roll = rng.gen_range(-spec.max_roll_deg..=spec.max_roll_deg).to_radians();
    let axis = Unit::new_normalize(Vector3::new(phi.cos(), phi.sin(), 0.0));
    let rot = Rotation3::from_axis_angle(&axis, tilt) * Rotation3::from_axis_angle(&Vector3::z_axis(), roll);
    let k = rng.gen_range(spec.size_range.0..=spec.size_range.1);
    let extent = spec.aspect.max(1.0);
    let depth = cam.focal_px * extent / (k * short);
    let spread = 0.5 * (1.0 - k) * 0.8;
    let center = Point2::new(
        cam.principal.x + rng.gen_range(-spread..=spread) * w,
        cam.principal.y + rng.gen_range(-spread..=spread) * h,
    );
    let t = cam.back_project_point(center) * depth;
    let r = spec.aspect;
    let doc = [(0.0, 0.0), (r, 0.0), (r, 1.0), (0.0, 1.0)];
    let mut corners = [Point2::default(); 4];
    for (dst, &(x, y)) in corners.iter_mut().zip(&doc) {
        let p = rot * Vector3::new(x - r / 2.0, y - 0.5, 0.0) + t;
        if p.z <= 1e-6 {
            return None;
        }
        *dst = cam.project(&p)?.to_point()?;
    }
    let margin = 0.03 * short;
    let inside = corners
        .iter()
        .all(|p| p.x >= margin && p.x <= w - margin && p.y >= margin && p.y <= h - margin);
    let quad = Quad::new(corners).ok()?;
    (inside && quad.min_angle_deg() > 20.0).then_some(Pose { quad, corners })
}

/// Smooth random field: white noise on a coarse lattice, Gaussian-blurred
/// and sampled bilinearly.
struct NoiseField {
    step: f64,
    cols: usize,
    rows: usize,
    values: Vec<f32>,
}

impl NoiseField {
    const STEP: f64 = 8.0;

    fn new(width: usize, height: usize, sigma: f64, amplitude: f64, rng: &mut ChaCha8Rng) -> Self {
        let step = Self::STEP;
        let cols = (width as f64 / step).ceil() as usize + 2;
        let rows = (height as f64 / step).ceil() as usize + 2;
        let white: Vec<f32> = (0..cols * rows).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let s = sigma / step;
        let wing = (3.0 * s).ceil() as isize;
        let kernel: Vec<f32> = (-wing..=wing)
            .map(|i| (-(i * i) as f64 / (2.0 * s * s)).exp() as f32)
            .collect();
        let blur = |src: &[f32], stride: usize, step: usize, len: usize, lines: usize| {
            let mut out = vec![0.0f32; src.len()];
            for line in 0..lines {
                let base = line * stride;
                for i in 0..len {
                    let mut acc = 0.0;
                    for (k, w) in kernel.iter().enumerate() {
                        let j = (i as isize + k as isize - wing).clamp(0, len as isize - 1) as usize;
                        acc += w * src[base + j * step];
                    }
                    out[base + i * step] = acc;
                }
            }
            out
        };
        let blurred = blur(&white, cols, 1, cols, rows);
        let mut values = blur(&blurred, 1, cols, rows, cols);
        let n = values.len() as f64;
        let std = (values.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / n).sqrt();
        let gain = if std > 0.0 { (amplitude / std) as f32 } else { 0.0 };
        values.iter_mut().for_each(|v| *v *= gain);
        NoiseField { step, cols, rows, values }
    }

    fn at(&self, p: Point2) -> f64 {
        let gx = (p.x / self.step).clamp(0.0, (self.cols - 2) as f64);
        let gy = (p.y / self.step).clamp(0.0, (self.rows - 2) as f64);
        let (i, j) = ((gx as usize).min(self.cols - 2), (gy as usize).min(self.rows - 2));
        let (fx, fy) = ((gx - i as f64) as f32, (gy - j as f64) as f32);
        let v = |a: usize, b: usize| self.values[b * self.cols + a];
        let top = v(i, j) * (1.0 - fx) + v(i + 1, j) * fx;
        let bottom = v(i, j + 1) * (1.0 - fx) + v(i + 1, j + 1) * fx;
        (top * (1.0 - fy) + bottom * fy) as f64
    }
}

struct Warp {
    amplitude: f64,
    wavelength: [f64; 2],
    phase: [f64; 2],
}

impl Warp {
    fn new(amplitude: f64, rng: &mut ChaCha8Rng) -> Warp {
        Warp {
            amplitude,
            wavelength: [
                amplitude * rng.gen_range(3.5..=6.0),
                amplitude * rng.gen_range(3.5..=6.0),
            ],
            phase: [rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU)],
        }
    }

    fn apply(&self, p: Point2) -> Point2 {
        let tau = std::f64::consts::TAU;
        p + Point2::new(
            (tau * p.y / self.wavelength[0] + self.phase[0]).sin(),
            (tau * p.x / self.wavelength[1] + self.phase[1]).sin(),
        ) * self.amplitude
    }
}

enum Texture {
    Flat,
    Stripes { dir: Point2, period: f64, delta: f64, warp: Warp },
    Checker { u: Point2, v: Point2, cell: f64, delta: f64, warp: Warp },
    Noise(NoiseField),
}

impl Texture {
    fn new(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Texture {
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let (lo, hi) = spec.texture_contrast;
        let delta = rng.gen_range(lo..=hi) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let scale = spec.texture_scale * rng.gen_range(0.8..=1.25);
        match spec.background {
            Background::Flat => Texture::Flat,
            Background::Stripes => Texture::Stripes {
                dir: Point2::new(angle.cos(), angle.sin()),
                period: 2.0 * scale,
                delta,
                warp: Warp::new(spec.texture_warp, rng),
            },
            Background::Checker => Texture::Checker {
                u: Point2::new(angle.cos(), angle.sin()),
                v: Point2::new(-angle.sin(), angle.cos()),
                cell: scale,
                delta,
                warp: Warp::new(spec.texture_warp, rng),
            },
            Background::Noise => {
                Texture::Noise(NoiseField::new(spec.width, spec.height, scale, 6.0, rng))
            }
        }
    }

    fn offset(&self, p: Point2) -> f64 {
        match self {
            Texture::Flat => 0.0,
            Texture::Stripes { dir, period, delta, warp } => {
                if (warp.apply(p).dot(*dir) / period).rem_euclid(1.0) < 0.5 {
                    *delta
                } else {
                    0.0
                }
            }
            Texture::Checker { u, v, cell, delta, warp } => {
                let p = warp.apply(p);
                let a = (p.dot(*u) / cell).floor() as i64;
                let b = (p.dot(*v) / cell).floor() as i64;
                if (a + b).rem_euclid(2) == 0 {
                    *delta
                } else {
                    0.0
                }
            }
            Texture::Noise(n) => n.at(p),
        }
    }
}

/// Round occluder centered beyond one side, covering the side and both
/// its corners. Its boundary crosses the document as a pronounced arc.
struct Occluder {
    center: Point2,
    radius: f64,
}

impl Occluder {
    fn new(side: (Point2, Point2), inward: Point2, rng: &mut ChaCha8Rng) -> Occluder {
        let len = side.0.distance(side.1);
        let mid = side.0.lerp(side.1, 0.5);
        let h = len * rng.gen_range(0.8..=1.2);
        let center = mid - inward * h;
        let radius = (0.25 * len * len + h * h).sqrt() + len * rng.gen_range(0.02..=0.05);
        Occluder { center, radius }
    }

    fn covers(&self, p: Point2) -> bool {
        p.distance(self.center) <= self.radius
    }

    fn near_boundary(&self, p: Point2) -> bool {
        (p.distance(self.center) - self.radius).abs() < 1.0
    }
}

/// Text-like dark bars inside the document, in document coordinates.
struct Clutter {
    bars: Vec<(bool, f64, f64, f64, f64)>,
    color: [f64; 3],
}

impl Clutter {
    fn new(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Clutter {
        let r = spec.aspect;
        let bars = (0..spec.clutter_lines)
            .map(|_| {
                let horizontal = rng.gen_bool(0.7);
                let (len_extent, across_extent) = if horizontal { (r, 1.0) } else { (1.0, r) };
                let at = rng.gen_range(0.15..=0.85) * across_extent;
                let start = rng.gen_range(0.1..=0.4) * len_extent;
                let end = rng.gen_range(0.6..=0.9) * len_extent;
                let half = rng.gen_range(0.004..=0.012);
                (horizontal, at, start, end, half)
            })
            .collect();
        let lum = luminance(spec.doc_color);
        let shade = if lum > 128.0 { -rng.gen_range(70.0..=120.0) } else { rng.gen_range(70.0..=120.0) };
        Clutter {
            bars,
            color: spec.doc_color.map(|c| (c as f64 + shade).clamp(0.0, 255.0)),
        }
    }

    fn hit(&self, u: f64, v: f64) -> bool {
        self.bars.iter().any(|&(horizontal, at, start, end, half)| {
            let (along, across) = if horizontal { (u, v) } else { (v, u) };
            (across - at).abs() <= half && along >= start && along <= end
        })
    }
}

/// Renders the scene. The returned ground truth is the exact projected
/// rectangle in image pixels.
pub fn synthesize_scene(spec: &SceneSpec) -> Result<Scene> {
    if !(spec.aspect > 0.0) || spec.width < 64 || spec.height < 64 {
        return Err(Error::Harness("invalid scene spec".into()));
    }
    if spec.occluded_side.is_some_and(|k| k > 3) {
        return Err(Error::Harness("occluded side must be in 0..4".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cam = CameraIntrinsics::for_image(spec.width, spec.height, spec.focal_coeff);
    let pose = (0..MAX_TRIES)
        .find_map(|_| sample_pose(spec, &cam, &mut rng))
        .ok_or_else(|| Error::Harness(format!("no admissible pose after {MAX_TRIES} tries")))?;
    let r = spec.aspect;
    let doc_corners = [
        Point2::new(0.0, 0.0),
        Point2::new(r, 0.0),
        Point2::new(r, 1.0),
        Point2::new(0.0, 1.0),
    ];
    let to_image = Homography::from_correspondences(&doc_corners, &pose.corners)?;
    let to_doc = to_image.inverse()?;
    let texture = Texture::new(spec, &mut rng);
    let clutter = Clutter::new(spec, &mut rng);
    let noise = Normal::new(0.0, spec.noise_sigma.max(1e-9)).expect("finite sigma");

    // Oriented so that inside is positive.
    let sides: [HomoLine; 4] = std::array::from_fn(|i| {
        let (a, b) = pose.quad.side(i);
        HomoLine::through(b, a).expect("distinct vertices")
    });
    let inside_sign = {
        let c = pose.quad.vertices().iter().fold(Point2::default(), |s, &p| s + p) * 0.25;
        sides.map(|l| l.signed_distance(c).signum())
    };
    let dist = |i: usize, p: Point2| sides[i].signed_distance(p) * inside_sign[i];
    let occluder = spec.occluded_side.map(|k| {
        let (a, b) = pose.quad.side(k);
        let n = Point2::new(sides[k].coeffs()[0], sides[k].coeffs()[1]) * inside_sign[k];
        Occluder::new((a, b), n, &mut rng)
    });
    let occluder_color = spec.occluder_color.map(|c| c as f64);
    let bg = spec.background_color.map(|c| c as f64);
    let doc = spec.doc_color.map(|c| c as f64);
    let background_at = |p: Point2| -> [f64; 3] {
        let o = texture.offset(p);
        bg.map(|c| c + o)
    };
    let document_at = |p: Point2| -> [f64; 3] {
        match to_doc.apply(p) {
            Some(d) if clutter.hit(d.x, d.y) => clutter.color,
            _ => doc,
        }
    };
    let inside = |p: Point2| (0..4).all(|i| dist(i, p) >= 0.0);
    let color_at = |p: Point2| -> [f64; 3] {
        if occluder.as_ref().is_some_and(|o| o.covers(p)) {
            occluder_color
        } else if inside(p) {
            document_at(p)
        } else {
            background_at(p)
        }
    };

    const SS: usize = 4;
    let (w, h) = (spec.width, spec.height);
    let center = |x: usize, y: usize| Point2::new(x as f64 + 0.5, y as f64 + 0.5);
    let mut plain = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            plain.push(color_at(center(x, y)));
        }
    }
    let differs = |a: [f64; 3], b: [f64; 3]| (0..3).any(|k| (a[k] - b[k]).abs() > 2.0);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let c0 = plain[y * w + x];
            let p = center(x, y);
            let near_edge = (x > 0 && differs(c0, plain[y * w + x - 1]))
                || (x + 1 < w && differs(c0, plain[y * w + x + 1]))
                || (y > 0 && differs(c0, plain[(y - 1) * w + x]))
                || (y + 1 < h && differs(c0, plain[(y + 1) * w + x]))
                || (0..4).any(|i| dist(i, p).abs() < 1.0)
                || occluder.as_ref().is_some_and(|o| o.near_boundary(p));
            let color = if near_edge {
                let mut acc = [0.0; 3];
                for sy in 0..SS {
                    for sx in 0..SS {
                        let q = Point2::new(
                            x as f64 + (sx as f64 + 0.5) / SS as f64,
                            y as f64 + (sy as f64 + 0.5) / SS as f64,
                        );
                        let c = color_at(q);
                        for k in 0..3 {
                            acc[k] += c[k];
                        }
                    }
                }
                acc.map(|v| v / (SS * SS) as f64)
            } else {
                c0
            };
            for c in color {
                let v = c + noise.sample(&mut rng);
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    let image = RgbImage::new(spec.width, spec.height, data)?;
    Ok(Scene {
        image,
        truth: GroundTruth::from_document_order(pose.corners, spec.template(), (spec.width, spec.height))?,
        corners: pose.corners,
        homography: to_image,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteKind {
    /// [`SceneSpec::suite`]: one scene in four occluded.
    Standard,
    /// Every scene has an occluded side.
    Occluded,
    /// [`SceneSpec::stress`].
    Stress,
}

impl SuiteKind {
    pub fn spec(self, seed: u64, index: usize) -> SceneSpec {
        match self {
            SuiteKind::Standard => SceneSpec::suite(seed, index),
            SuiteKind::Occluded => SceneSpec::random(seed, index, true),
            SuiteKind::Stress => SceneSpec::stress(seed, index),
        }
    }
}

/// Manifest entry of a rendered scene stored at `image`.
pub fn manifest_entry(spec: &SceneSpec, scene: &Scene, image: PathBuf) -> ManifestEntry {
    let mut tags = vec![spec.background.name().to_string()];
    tags.push(if spec.occluded_side.is_some() { "occluded" } else { "unoccluded" }.into());
    ManifestEntry {
        image,
        gt: scene.corners.map(|p| [p.x, p.y]),
        aspect: spec.aspect,
        tags,
        focal_coeff: Some(spec.focal_coeff),
    }
}

/// Renders `count` scenes into `out_dir` as PNG files plus `manifest.jsonl`
/// with image paths relative to `out_dir`.
pub fn write_suite(out_dir: &Path, count: usize, seed: u64, kind: SuiteKind) -> Result<Vec<ManifestEntry>> {
    std::fs::create_dir_all(out_dir)?;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let spec = kind.spec(seed, i);
        let scene = synthesize_scene(&spec)?;
        let name = format!("scene_{i:04}.png");
        scene.image.save(out_dir.join(&name))?;
        entries.push(manifest_entry(&spec, &scene, PathBuf::from(name)));
    }
    write_manifest(&out_dir.join(SUITE_MANIFEST), &entries)?;
    Ok(entries)
}

pub const SUITE_MANIFEST: &str = "manifest.jsonl";
