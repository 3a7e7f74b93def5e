//! JSON-lines manifests: one `{"image", "gt", "aspect", "tags"}` object per
//! line. `gt` lists the document corners in document order (the first two
//! span the template width), in original-resolution pixels.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Quad};
use crate::metrics::GroundTruth;
use crate::pipeline::TemplateSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// As written in the manifest; see [`ManifestEntry::resolve_image`].
    pub image: PathBuf,
    pub gt: [[f64; 2]; 4],
    pub aspect: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    /// Per-image override of the pipeline's focal coefficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_coeff: Option<f64>,
}

#[derive(Deserialize)]
struct RawEntry {
    image: Option<String>,
    gt: Option<Vec<Vec<f64>>>,
    aspect: Option<f64>,
    #[serde(default)]
    tags: Vec<String>,
    focal_coeff: Option<f64>,
}

impl ManifestEntry {
    pub fn template(&self) -> TemplateSpec {
        TemplateSpec::from_aspect(self.aspect).expect("validated aspect")
    }

    pub fn gt_points(&self) -> [Point2; 4] {
        self.gt.map(Point2::from)
    }

    pub fn gt_quad(&self) -> Quad {
        Quad::from_arrays(self.gt).expect("validated quad")
    }

    pub fn ground_truth(&self, image_size: (usize, usize)) -> GroundTruth {
        GroundTruth::from_document_order(self.gt_points(), self.template(), image_size)
            .expect("validated quad")
    }

    /// Relative image paths are taken relative to the manifest's directory.
    pub fn resolve_image(&self, manifest_dir: &Path) -> PathBuf {
        if self.image.is_absolute() {
            self.image.clone()
        } else {
            manifest_dir.join(&self.image)
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.aspect > 0.0 && self.aspect.is_finite()) {
            return Err(format!("aspect must be positive, got {}", self.aspect));
        }
        if self.gt.iter().flatten().any(|v| !v.is_finite()) {
            return Err("gt has non-finite coordinates".into());
        }
        if Quad::canonical_permutation(&self.gt_points()).is_none() {
            return Err("gt is not a convex quadrilateral".into());
        }
        if let Some(f) = self.focal_coeff {
            if !(f > 0.0 && f.is_finite()) {
                return Err(format!("focal_coeff must be positive, got {f}"));
            }
        }
        Ok(())
    }
}

fn parse_line(text: &str) -> std::result::Result<ManifestEntry, String> {
    let raw: RawEntry = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let image = raw.image.ok_or("missing field `image`")?;
    let gt = raw.gt.ok_or("missing field `gt`")?;
    let aspect = raw.aspect.ok_or("missing field `aspect`")?;
    if gt.len() != 4 || gt.iter().any(|p| p.len() != 2) {
        return Err("gt must be an array of 4 [x, y] pairs".into());
    }
    let entry = ManifestEntry {
        image: PathBuf::from(image),
        gt: std::array::from_fn(|i| [gt[i][0], gt[i][1]]),
        aspect,
        tags: raw.tags,
        focal_coeff: raw.focal_coeff,
    };
    entry.validate()?;
    Ok(entry)
}

/// A rejected manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub path: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub skipped: Vec<Skipped>,
}

impl Manifest {
    pub fn base_dir(&self) -> PathBuf {
        self.path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    }
}

/// Parses manifest text. Invalid lines are collected in `skipped`, or abort
/// the load in strict mode. Blank lines are ignored.
pub fn parse_manifest(text: &str, path: &Path, strict: bool) -> Result<Manifest> {
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Ok(e) => entries.push(e),
            Err(message) if strict => {
                return Err(Error::Manifest {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                })
            }
            Err(message) => skipped.push(Skipped { line: i + 1, message }),
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyManifest(path.to_path_buf()));
    }
    Ok(Manifest {
        path: path.to_path_buf(),
        entries,
        skipped,
    })
}

pub fn load_manifest(path: &Path, strict: bool) -> Result<Manifest> {
    let text = fs::read_to_string(path)?;
    parse_manifest(&text, path, strict)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut out, e).map_err(|e| Error::Harness(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"image": "a.png", "gt": [[0,0],[30,0],[30,20],[0,20]], "aspect": 1.5}"#;

    #[test]
    fn three_valid_lines() {
        let text = [GOOD, GOOD, GOOD].join("\n");
        let m = parse_manifest(&text, Path::new("m.jsonl"), true).unwrap();
        assert_eq!(m.entries.len(), 3);
        assert!(m.skipped.is_empty());
    }

    #[test]
    fn bad_lines_are_skipped_with_line_numbers() {
        let bowtie = r#"{"image": "b.png", "gt": [[0,0],[30,20],[30,0],[0,20]], "aspect": 1.5}"#;
        let no_aspect = r#"{"image": "c.png", "gt": [[0,0],[30,0],[30,20],[0,20]]}"#;
        let text = format!("{GOOD}\n{bowtie}\n\n{no_aspect}\nnot json\n");
        let m = parse_manifest(&text, Path::new("m.jsonl"), false).unwrap();
        assert_eq!(m.entries.len(), 1);
        let lines: Vec<usize> = m.skipped.iter().map(|s| s.line).collect();
        assert_eq!(lines, vec![2, 4, 5]);
        assert!(m.skipped[0].message.contains("convex"));
        assert!(m.skipped[1].message.contains("aspect"));
    }

    #[test]
    fn strict_mode_aborts() {
        let text = format!("{GOOD}\n{{\"image\": 1}}\n");
        match parse_manifest(&text, Path::new("m.jsonl"), true) {
            Err(Error::Manifest { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn no_valid_entries_is_an_error() {
        assert!(matches!(
            parse_manifest("\n\n", Path::new("m.jsonl"), false),
            Err(Error::EmptyManifest(_))
        ));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut e = parse_line(GOOD).unwrap();
        e.tags = vec!["4-vertices-in-frame".into()];
        e.focal_coeff = Some(0.8);
        write_manifest(&path, &[e.clone(), e.clone()]).unwrap();
        let m = load_manifest(&path, true).unwrap();
        assert_eq!(m.entries, vec![e.clone(), e.clone()]);
        assert_eq!(m.entries[0].resolve_image(&m.base_dir()), dir.path().join("a.png"));
    }
}
