//! End-to-end localization: working-resolution downscale, edge maps, line
//! detection, candidate search, final ranking and refinement.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::candidates::{
    enumerate_candidates, segment_stats, BorderStats, CandidateConfig, Frame, Provenance, ScoredQuad, SearchMode, SearchStats,
};
use crate::contrast::{rank_final, ContrastConfig};
use crate::edges::{EdgeMaps, EdgeParams};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Point2, Quad};
use crate::hough::{detect_lines, HoughConfig, LineSet};
use crate::imaging::{downscale_working, RgbImage};
use crate::refine::{refine_quad, RefineConfig, RestoredHint};

pub const MIN_INPUT_SIDE: usize = 64;

/// Document template: physical size and the aspect ratio width / height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub width: f64,
    pub height: f64,
}

impl TemplateSpec {
    pub fn new(width: f64, height: f64) -> Result<TemplateSpec> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::Config(format!("invalid template size {width}x{height}")));
        }
        Ok(TemplateSpec { width, height })
    }

    /// Template of unit height.
    pub fn from_aspect(r: f64) -> Result<TemplateSpec> {
        TemplateSpec::new(r, 1.0)
    }

    pub fn aspect(&self) -> f64 {
        self.width / self.height
    }

    pub fn transposed(&self) -> TemplateSpec {
        TemplateSpec {
            width: self.height,
            height: self.width,
        }
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.width + self.height)
    }

    pub fn corners(&self) -> [Point2; 4] {
        [
            Point2::new(0.0, 0.0),
            Point2::new(self.width, 0.0),
            Point2::new(self.width, self.height),
            Point2::new(0.0, self.height),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub working_short: usize,
    /// Focal length as a fraction of the working-image diagonal.
    pub focal_coeff: f64,
    pub edges: EdgeParams,
    pub hough: HoughConfig,
    pub candidates: CandidateConfig,
    pub contrast: ContrastConfig,
    pub refine: RefineConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            working_short: 240,
            focal_coeff: 0.705,
            edges: EdgeParams::default(),
            hough: HoughConfig::default(),
            candidates: CandidateConfig::default(),
            contrast: ContrastConfig::default(),
            refine: RefineConfig::default(),
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            _ => out.push((key, v.clone())),
        }
    }
}

impl PipelineConfig {
    /// Applies `section.key = value` overrides (dotted keys or TOML
    /// sections) on top of the defaults. Unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<PipelineConfig> {
        let overrides: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut pairs = Vec::new();
        flatten("", &overrides, &mut pairs);
        let mut base = toml::Table::try_from(PipelineConfig::default())
            .map_err(|e| Error::Config(e.to_string()))?;
        for (key, value) in pairs {
            let mut slot = &mut base;
            let parts: Vec<&str> = key.split('.').collect();
            for part in &parts[..parts.len() - 1] {
                slot = match slot.get_mut(*part) {
                    Some(toml::Value::Table(t)) => t,
                    _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                };
            }
            let leaf = parts[parts.len() - 1];
            let current = slot
                .get(leaf)
                .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
            let value = match (current, value) {
                (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
                (c, v) if std::mem::discriminant(c) == std::mem::discriminant(&v) => v,
                (c, v) => {
                    return Err(Error::Config(format!(
                        "`{key}` expects {}, got {}",
                        c.type_str(),
                        v.type_str()
                    )))
                }
            };
            slot.insert(leaf.to_string(), value);
        }
        let cfg: PipelineConfig = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        PipelineConfig::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Every effective setting as `key = value` lines.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.working_short < 16 {
            return bad("working_short must be at least 16");
        }
        if !(self.focal_coeff > 0.0) {
            return bad("focal_coeff must be positive");
        }
        if self.candidates.k == 0 {
            return bad("candidates.k must be at least 1");
        }
        if !(2..=32).contains(&self.contrast.bins_per_channel) {
            return bad("contrast.bins_per_channel must lie in 2..=32");
        }
        let m = [self.contrast.outer_margin, self.contrast.inner_margin];
        if m.iter().any(|&v| !(v > 0.0 && v < 0.5)) {
            return bad("contrast margins must lie in (0, 0.5)");
        }
        if !(self.refine.scale > 0.0) {
            return bad("refine.scale must be positive");
        }
        if self.edges.blur_sigma <= 0.0 || self.edges.size_fraction < 0.0 {
            return bad("edge parameters must be positive");
        }
        Ok(())
    }
}

/// Wall time per stage, milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub downscale: f64,
    pub edges: f64,
    pub lines: f64,
    pub candidates: f64,
    pub ranking: f64,
    pub refine: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    /// Quad in original-image pixels.
    pub quad: Quad,
    /// Unrefined quad in working-resolution pixels.
    pub working_quad: Quad,
    pub contour: f64,
    pub contrast: f64,
    pub combined: f64,
    pub provenance: Provenance,
    pub restored_side: Option<usize>,
    /// Original pixels per working pixel.
    pub working_factor: f64,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Detected(LocalizationResult),
    NoDetection { timings: StageTimings },
}

impl Outcome {
    pub fn result(&self) -> Option<&LocalizationResult> {
        match self {
            Outcome::Detected(r) => Some(r),
            Outcome::NoDetection { .. } => None,
        }
    }

    pub fn timings(&self) -> &StageTimings {
        match self {
            Outcome::Detected(r) => &r.timings,
            Outcome::NoDetection { timings } => timings,
        }
    }
}

/// Intermediate products of one run.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub working: RgbImage,
    pub working_factor: f64,
    pub camera: CameraIntrinsics,
    pub maps: EdgeMaps,
    pub lines: LineSet,
    pub candidates: Vec<ScoredQuad>,
    pub search: SearchStats,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Edge statistics of side `k` and its edge mass per unit length.
fn side_support(maps: &EdgeMaps, q: &Quad, k: usize) -> (BorderStats, f64) {
    let line = q.side_line(k);
    let (a, b) = q.side(k);
    let stats = segment_stats(&line, maps.for_orientation(line.orientation()), (a, b));
    (stats, stats.w / a.distance(b).max(1e-9))
}

pub fn localize(img: &RgbImage, template: &TemplateSpec, cfg: &PipelineConfig) -> Result<Outcome> {
    localize_with_diagnostics(img, template, cfg).map(|(o, _)| o)
}

pub fn localize_with_diagnostics(
    img: &RgbImage,
    template: &TemplateSpec,
    cfg: &PipelineConfig,
) -> Result<(Outcome, Diagnostics)> {
    if img.width() < MIN_INPUT_SIDE || img.height() < MIN_INPUT_SIDE {
        return Err(Error::InvalidImage(format!(
            "{}x{} is below the {MIN_INPUT_SIDE}x{MIN_INPUT_SIDE} minimum",
            img.width(),
            img.height()
        )));
    }
    let r = template.aspect();
    let start = Instant::now();
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let working = downscale_working(img, cfg.working_short);
    timings.downscale = ms_since(t);
    let (w, h) = (working.image.width(), working.image.height());
    let camera = CameraIntrinsics::for_image(w, h, cfg.focal_coeff);

    let t = Instant::now();
    let maps = EdgeMaps::compute(&working.image, &cfg.edges);
    timings.edges = ms_since(t);

    let t = Instant::now();
    let lines = detect_lines(&maps.horizontal, &maps.vertical, &cfg.hough);
    timings.lines = ms_since(t);

    let t = Instant::now();
    let frame = Frame::new(w, h, cfg.candidates.frame_margin);
    let (candidates, search) = enumerate_candidates(
        &lines,
        &maps,
        &camera,
        r,
        &cfg.candidates,
        &frame,
        SearchMode::Pruned,
    );
    timings.candidates = ms_since(t);

    let t = Instant::now();
    let best = rank_final(&candidates, &working.image, r, cfg.candidates.k, &cfg.contrast);
    timings.ranking = ms_since(t);

    let outcome = match best {
        None => {
            timings.total = ms_since(start);
            Outcome::NoDetection { timings }
        }
        Some(best) => {
            let t = Instant::now();
            // A restored side that the edge map supports as well as the
            // other sides is refined like them.
            let unsupported = best.restored_side.filter(|&k| {
                let (stats, density) = side_support(&maps, &best.quad, k);
                let others = (0..4).filter(|&j| j != k).map(|j| side_support(&maps, &best.quad, j).1).sum::<f64>() / 3.0;
                !(cfg.candidates.side_ok(&stats) && density >= 0.5 * others)
            });
            let hint = unsupported.zip(best.source_lines.first()).map(|(side, l)| RestoredHint {
                side,
                pair_orientation: l.orientation,
                camera,
                aspect: r,
            });
            let quad = if cfg.refine.enabled {
                refine_quad(
                    img,
                    &best.quad,
                    working.factor,
                    cfg.working_short,
                    &cfg.refine,
                    &cfg.edges,
                    hint.as_ref(),
                )
                .quad
            } else {
                best.quad.scaled(working.factor)
            };
            timings.refine = ms_since(t);
            timings.total = ms_since(start);
            Outcome::Detected(LocalizationResult {
                quad,
                working_quad: best.quad,
                contour: best.contour,
                contrast: best.contrast,
                combined: best.combined,
                provenance: best.provenance,
                restored_side: best.restored_side,
                working_factor: working.factor,
                timings,
            })
        }
    };
    let diagnostics = Diagnostics {
        working: working.image,
        working_factor: working.factor,
        camera,
        maps,
        lines,
        candidates,
        search,
    };
    Ok((outcome, diagnostics))
}
