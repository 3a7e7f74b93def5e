//! Converters from the distributed MIDV-500 and SmartDoc layouts to
//! manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::harness::manifest::ManifestEntry;

pub const SMARTDOC_ASPECT: f64 = 210.0 / 297.0;
/// SmartDoc backgrounds used for evaluation; the fifth is excluded.
pub const SMARTDOC_BACKGROUNDS: [u32; 4] = [1, 2, 3, 4];

pub const MIDV500_LAYOUT: &str = "\
<root>/<NN_type>/ground_truth/<NN_type>.json   template quad {\"quad\": [[x, y] x4]}
<root>/<NN_type>/ground_truth/<clip>/<frame>.json   frame quad {\"quad\": [[x, y] x4]}
<root>/<NN_type>/images/<clip>/<frame>.(tif|png|jpg)";

pub const SMARTDOC_LAYOUT: &str = "\
<root>/backgroundNN/<doc>.gt.xml   (or <doc>.xml) with <frame index=\"i\"> and points tl, tr, br, bl
<root>/backgroundNN/<doc>/<...i>.(jpg|jpeg|png|tif)   one extracted image per frame, index from the trailing digits of the file stem";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Midv500,
    SmartDoc,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<DatasetKind> {
        match s {
            "midv500" => Ok(DatasetKind::Midv500),
            "smartdoc" => Ok(DatasetKind::SmartDoc),
            _ => Err(Error::Config(format!("unknown dataset kind {s:?} (expected midv500 or smartdoc)"))),
        }
    }
}

#[derive(Debug, Default)]
pub struct AdaptReport {
    pub entries: Vec<ManifestEntry>,
    /// Frames that could not be converted, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

/// Tags describing how many ground-truth vertices fall inside the frame.
pub fn frame_tags(gt: &[[f64; 2]; 4], size: (u32, u32)) -> Vec<String> {
    let (w, h) = (size.0 as f64, size.1 as f64);
    let n = gt
        .iter()
        .filter(|p| p[0] >= 0.0 && p[0] <= w && p[1] >= 0.0 && p[1] <= h)
        .count();
    let mut tags = vec![format!("{n}-vertices-in-frame")];
    if n >= 3 {
        tags.push("at-least-3-vertices-in-frame".into());
    }
    if n == 0 {
        tags.push("out-of-frame".into());
    }
    tags
}

const IMAGE_EXTENSIONS: [&str; 5] = ["tif", "tiff", "png", "jpg", "jpeg"];

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    v.sort();
    Ok(v)
}

fn finish(mut entry: ManifestEntry, path: &Path, report: &mut AdaptReport) {
    match image::image_dimensions(&entry.image) {
        Ok(size) => {
            entry.tags.extend(frame_tags(&entry.gt, size));
            match entry.validate() {
                Ok(()) => report.entries.push(entry),
                Err(e) => report.skipped.push((path.to_path_buf(), e)),
            }
        }
        Err(e) => report.skipped.push((entry.image.clone(), e.to_string())),
    }
}

#[derive(Deserialize)]
struct MidvQuad {
    quad: Vec<[f64; 2]>,
}

fn read_midv_quad(path: &Path) -> std::result::Result<[[f64; 2]; 4], String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let q: MidvQuad = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    q.quad
        .try_into()
        .map_err(|_| "quad must have 4 points".to_string())
}

fn template_aspect(q: &[[f64; 2]; 4]) -> f64 {
    let d = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    (d(q[0], q[1]) + d(q[3], q[2])) / (d(q[0], q[3]) + d(q[1], q[2]))
}

fn find_image(dir: &Path, stem: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .flat_map(|e| [e.to_string(), e.to_ascii_uppercase()])
        .map(|e| dir.join(format!("{stem}.{e}")))
        .find(|p| p.is_file())
}

/// Converts a MIDV-500 tree. Aspects come from each type's template quad
/// unless `aspect_table` (type name to aspect) provides one.
pub fn adapt_midv500(root: &Path, aspect_table: Option<&BTreeMap<String, f64>>) -> Result<AdaptReport> {
    let layout_error = || Error::DatasetLayout {
        root: root.to_path_buf(),
        expected: format!("MIDV-500 layout\n{MIDV500_LAYOUT}"),
    };
    if !root.is_dir() {
        return Err(layout_error());
    }
    let root = root.canonicalize()?;
    let mut report = AdaptReport::default();
    let mut types = 0;
    for type_dir in sorted_dir(&root)? {
        let Some(name) = type_dir.file_name().and_then(|n| n.to_str()).map(str::to_owned) else {
            continue;
        };
        let gt_dir = type_dir.join("ground_truth");
        let images_dir = type_dir.join("images");
        if !gt_dir.is_dir() || !images_dir.is_dir() {
            continue;
        }
        types += 1;
        let aspect = match aspect_table.and_then(|t| t.get(&name)) {
            Some(&a) => a,
            None => {
                let template = gt_dir.join(format!("{name}.json"));
                match read_midv_quad(&template) {
                    Ok(q) => template_aspect(&q),
                    Err(e) => {
                        report.skipped.push((template, format!("no aspect for {name}: {e}")));
                        continue;
                    }
                }
            }
        };
        for clip_dir in sorted_dir(&gt_dir)?.into_iter().filter(|p| p.is_dir()) {
            let clip = clip_dir.file_name().expect("read_dir entry").to_owned();
            for gt_path in sorted_dir(&clip_dir)? {
                if gt_path.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                let stem = gt_path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                let gt = match read_midv_quad(&gt_path) {
                    Ok(q) => q,
                    Err(e) => {
                        report.skipped.push((gt_path.clone(), e));
                        continue;
                    }
                };
                let Some(image) = find_image(&images_dir.join(&clip), stem) else {
                    report.skipped.push((gt_path.clone(), "no matching image".into()));
                    continue;
                };
                let entry = ManifestEntry {
                    image,
                    gt,
                    aspect,
                    tags: vec![format!("type:{name}"), format!("clip:{}", clip.to_string_lossy())],
                    focal_coeff: None,
                };
                finish(entry, &gt_path, &mut report);
            }
        }
    }
    if types == 0 {
        return Err(layout_error());
    }
    Ok(report)
}

fn background_number(dir: &Path) -> Option<u32> {
    dir.file_name()?.to_str()?.strip_prefix("background")?.parse().ok()
}

fn trailing_number(stem: &str) -> Option<u32> {
    let digits: String = stem
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

struct SmartDocFrame {
    index: u32,
    gt: [[f64; 2]; 4],
}

fn parse_smartdoc_xml(text: &str) -> std::result::Result<Vec<SmartDocFrame>, String> {
    let doc = roxmltree::Document::parse(text).map_err(|e| e.to_string())?;
    let mut frames = Vec::new();
    for frame in doc.descendants().filter(|n| n.has_tag_name("frame")) {
        if frame.attribute("rejected") == Some("true") {
            continue;
        }
        let index: u32 = frame
            .attribute("index")
            .and_then(|v| v.parse().ok())
            .ok_or("frame without a numeric index")?;
        let mut gt = [[f64::NAN; 2]; 4];
        for point in frame.children().filter(|n| n.has_tag_name("point")) {
            let slot = match point.attribute("name") {
                Some("tl") => 0,
                Some("tr") => 1,
                Some("br") => 2,
                Some("bl") => 3,
                _ => continue,
            };
            let coord = |k: &str| point.attribute(k).and_then(|v| v.parse::<f64>().ok());
            let (Some(x), Some(y)) = (coord("x"), coord("y")) else {
                return Err(format!("frame {index}: bad point coordinates"));
            };
            gt[slot] = [x, y];
        }
        if gt.iter().flatten().any(|v| v.is_nan()) {
            return Err(format!("frame {index}: expected points tl, tr, br, bl"));
        }
        frames.push(SmartDocFrame { index, gt });
    }
    Ok(frames)
}

/// Converts a SmartDoc tree, keeping backgrounds 1 to 4.
pub fn adapt_smartdoc(root: &Path) -> Result<AdaptReport> {
    let layout_error = || Error::DatasetLayout {
        root: root.to_path_buf(),
        expected: format!("SmartDoc layout\n{SMARTDOC_LAYOUT}"),
    };
    if !root.is_dir() {
        return Err(layout_error());
    }
    let root = root.canonicalize()?;
    let backgrounds: Vec<(u32, PathBuf)> = sorted_dir(&root)?
        .into_iter()
        .filter(|p| p.is_dir())
        .filter_map(|p| background_number(&p).map(|n| (n, p)))
        .collect();
    if backgrounds.is_empty() {
        return Err(layout_error());
    }
    let mut report = AdaptReport::default();
    for (n, dir) in backgrounds {
        if !SMARTDOC_BACKGROUNDS.contains(&n) {
            continue;
        }
        for xml in sorted_dir(&dir)? {
            let Some(file) = xml.file_name().and_then(|f| f.to_str()) else {
                continue;
            };
            let Some(doc) = file.strip_suffix(".gt.xml").or_else(|| file.strip_suffix(".xml")) else {
                continue;
            };
            let frames_dir = dir.join(doc);
            let frames = match fs::read_to_string(&xml).map_err(|e| e.to_string()).and_then(|t| parse_smartdoc_xml(&t)) {
                Ok(f) => f,
                Err(e) => {
                    report.skipped.push((xml.clone(), e));
                    continue;
                }
            };
            let mut images = BTreeMap::new();
            if frames_dir.is_dir() {
                for p in sorted_dir(&frames_dir)?.into_iter().filter(|p| is_image(p)) {
                    if let Some(i) = p.file_stem().and_then(|s| s.to_str()).and_then(trailing_number) {
                        images.entry(i).or_insert(p);
                    }
                }
            }
            for f in frames {
                let Some(image) = images.get(&f.index).cloned() else {
                    report.skipped.push((xml.clone(), format!("frame {}: no extracted image in {}", f.index, frames_dir.display())));
                    continue;
                };
                let entry = ManifestEntry {
                    image,
                    gt: f.gt,
                    aspect: SMARTDOC_ASPECT,
                    tags: vec![format!("background{n:02}"), format!("doc:{doc}")],
                    focal_coeff: None,
                };
                finish(entry, &xml, &mut report);
            }
        }
    }
    Ok(report)
}

pub fn adapt_dataset(root: &Path, kind: DatasetKind, aspect_table: Option<&BTreeMap<String, f64>>) -> Result<AdaptReport> {
    match kind {
        DatasetKind::Midv500 => adapt_midv500(root, aspect_table),
        DatasetKind::SmartDoc => adapt_smartdoc(root),
    }
}

/// Reads a JSON object mapping MIDV-500 type names to aspect ratios.
pub fn load_aspect_table(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = fs::read_to_string(path)?;
    let table: BTreeMap<String, f64> =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if let Some((k, v)) = table.iter().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Config(format!("{}: aspect for {k} must be positive, got {v}", path.display())));
    }
    Ok(table)
}
