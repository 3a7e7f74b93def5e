//! Batch evaluation of a manifest: per-entry CSV, aggregate JSON and
//! quantile overlays.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::Provenance;
use crate::error::{Error, Result};
use crate::geometry::Quad;
use crate::harness::manifest::{Manifest, ManifestEntry};
use crate::harness::overlay::render_overlay;
use crate::imaging::RgbImage;
use crate::metrics::{MetricsReport, IOU_SUCCESS, MIN_D_SUCCESS};
use crate::pipeline::{localize, Outcome, PipelineConfig};

pub const CSV_HEADER: [&str; 9] = [
    "index", "image", "detected", "min_d", "iou", "iou_gt", "mean_iou", "ms", "provenance",
];
pub const SUMMARY_FILE: &str = "summary.json";
pub const ENTRIES_FILE: &str = "entries.csv";
/// Quantile levels of the overlay images, ordered by IoU in the
/// ground-truth frame.
pub const QUANTILES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryResult {
    pub index: usize,
    pub image: PathBuf,
    pub tags: Vec<String>,
    pub detected: bool,
    /// `None` when the entry could not be processed at all.
    pub metrics: Option<MetricsReport>,
    pub ms: f64,
    pub provenance: Option<Provenance>,
    pub quad: Option<Quad>,
    pub error: Option<String>,
}

impl EntryResult {
    pub fn success(&self) -> bool {
        self.metrics.is_some_and(|m| m.min_d <= MIN_D_SUCCESS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub detected: usize,
    pub errors: usize,
    pub mean_iou: f64,
    pub mean_iou_gt: f64,
    pub mean_mean_iou: f64,
    /// Over detected entries only.
    pub mean_min_d_detected: f64,
    pub rate_min_d: f64,
    pub rate_iou: f64,
    pub three_line: usize,
    pub median_ms: f64,
}

impl Aggregate {
    pub fn of<'a>(entries: impl IntoIterator<Item = &'a EntryResult>) -> Aggregate {
        let entries: Vec<&EntryResult> = entries.into_iter().collect();
        let n = entries.len();
        let scored: Vec<MetricsReport> = entries.iter().map(|e| e.metrics.unwrap_or(MetricsReport::zero())).collect();
        let mean = |f: &dyn Fn(&MetricsReport) -> f64| {
            if n == 0 {
                0.0
            } else {
                scored.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let detected: Vec<f64> = entries
            .iter()
            .filter(|e| e.detected)
            .filter_map(|e| e.metrics.map(|m| m.min_d))
            .collect();
        let mut ms: Vec<f64> = entries.iter().map(|e| e.ms).collect();
        ms.sort_by(f64::total_cmp);
        Aggregate {
            count: n,
            detected: entries.iter().filter(|e| e.detected).count(),
            errors: entries.iter().filter(|e| e.error.is_some()).count(),
            mean_iou: mean(&|m| m.iou),
            mean_iou_gt: mean(&|m| m.iou_gt),
            mean_mean_iou: mean(&|m| m.mean_iou),
            mean_min_d_detected: if detected.is_empty() {
                f64::NAN
            } else {
                detected.iter().sum::<f64>() / detected.len() as f64
            },
            rate_min_d: rate(entries.iter().filter(|e| e.success()).count()),
            rate_iou: rate(entries.iter().filter(|e| e.metrics.is_some_and(|m| m.iou >= IOU_SUCCESS)).count()),
            three_line: entries.iter().filter(|e| e.provenance == Some(Provenance::ThreeLine)).count(),
            median_ms: if ms.is_empty() { 0.0 } else { ms[ms.len() / 2] },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<EntryResult>,
    pub overall: Aggregate,
    pub by_tag: BTreeMap<String, Aggregate>,
    /// Manifest indices at [`QUANTILES`] of IoU^gt, lowest first.
    pub quantile_indices: Vec<usize>,
}

impl EvalReport {
    pub fn from_entries(entries: Vec<EntryResult>) -> EvalReport {
        let overall = Aggregate::of(&entries);
        let mut groups: BTreeMap<String, Vec<&EntryResult>> = BTreeMap::new();
        for e in &entries {
            for t in &e.tags {
                groups.entry(t.clone()).or_default().push(e);
            }
        }
        let by_tag = groups.into_iter().map(|(k, v)| (k, Aggregate::of(v))).collect();
        let quantile_indices = quantile_indices(&entries);
        EvalReport {
            entries,
            overall,
            by_tag,
            quantile_indices,
        }
    }
}

fn quantile_indices(entries: &[EntryResult]) -> Vec<usize> {
    if entries.is_empty() {
        return Vec::new();
    }
    let key = |e: &EntryResult| e.metrics.map_or(f64::NEG_INFINITY, |m| m.iou_gt);
    let mut order: Vec<&EntryResult> = entries.iter().collect();
    order.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.index.cmp(&b.index)));
    QUANTILES
        .iter()
        .map(|q| order[(q * (order.len() - 1) as f64).round() as usize].index)
        .collect()
}

fn config_for(entry: &ManifestEntry, cfg: &PipelineConfig) -> PipelineConfig {
    let mut c = *cfg;
    if let Some(f) = entry.focal_coeff {
        c.focal_coeff = f;
    }
    c
}

/// Localizes one manifest entry and scores it.
pub fn evaluate_entry(index: usize, entry: &ManifestEntry, base_dir: &Path, cfg: &PipelineConfig) -> EntryResult {
    let path = entry.resolve_image(base_dir);
    let mut result = EntryResult {
        index,
        image: entry.image.clone(),
        tags: entry.tags.clone(),
        detected: false,
        metrics: None,
        ms: 0.0,
        provenance: None,
        quad: None,
        error: None,
    };
    let outcome = RgbImage::load(&path).and_then(|img| {
        let gt = entry.ground_truth((img.width(), img.height()));
        localize(&img, &entry.template(), &config_for(entry, cfg)).map(|o| (o, gt))
    });
    match outcome {
        Ok((Outcome::Detected(r), gt)) => {
            result.detected = true;
            result.metrics = Some(MetricsReport::compute(&r.quad, &gt));
            result.ms = r.timings.total;
            result.provenance = Some(r.provenance);
            result.quad = Some(r.quad);
        }
        Ok((Outcome::NoDetection { timings }, gt)) => {
            result.metrics = Some(MetricsReport::missed(&gt));
            result.ms = timings.total;
        }
        Err(e) => result.error = Some(format!("{}: {e}", path.display())),
    }
    result
}

/// Evaluates every entry with `jobs` worker threads. Results are in
/// manifest order whatever the number of workers.
pub fn evaluate_entries(manifest: &Manifest, cfg: &PipelineConfig, jobs: usize) -> Result<Vec<EntryResult>> {
    let base = manifest.base_dir();
    let run = || -> Vec<EntryResult> {
        manifest
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, e)| evaluate_entry(i, e, &base, cfg))
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Harness(e.to_string()))?;
    Ok(pool.install(run))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Harness(format!("csv: {e}"))
}

pub fn write_entries_csv(path: &Path, entries: &[EntryResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    let num = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v}"));
    for e in entries {
        let m = e.metrics;
        w.write_record([
            e.index.to_string(),
            e.image.display().to_string(),
            e.detected.to_string(),
            num(m.map(|m| m.min_d)),
            num(m.map(|m| m.iou)),
            num(m.map(|m| m.iou_gt)),
            num(m.map(|m| m.mean_iou)),
            format!("{:.3}", e.ms),
            e.provenance.map_or(String::new(), |p| p.to_string()),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    overall: &'a Aggregate,
    by_tag: &'a BTreeMap<String, Aggregate>,
    quantiles: Vec<QuantileRef<'a>>,
    errors: Vec<&'a str>,
}

#[derive(Serialize)]
struct QuantileRef<'a> {
    level: f64,
    index: usize,
    image: &'a Path,
}

/// Runs the evaluation and writes `entries.csv`, `summary.json` and one
/// overlay per quantile into `out_dir`.
pub fn evaluate(manifest: &Manifest, cfg: &PipelineConfig, out_dir: &Path, jobs: usize) -> Result<EvalReport> {
    fs::create_dir_all(out_dir)?;
    let report = EvalReport::from_entries(evaluate_entries(manifest, cfg, jobs)?);
    write_entries_csv(&out_dir.join(ENTRIES_FILE), &report.entries)?;
    let summary = Summary {
        overall: &report.overall,
        by_tag: &report.by_tag,
        quantiles: QUANTILES
            .iter()
            .zip(&report.quantile_indices)
            .map(|(&level, &index)| QuantileRef {
                level,
                index,
                image: &report.entries[index].image,
            })
            .collect(),
        errors: report.entries.iter().filter_map(|e| e.error.as_deref()).collect(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Harness(e.to_string()))?;
    fs::write(out_dir.join(SUMMARY_FILE), json)?;
    let base = manifest.base_dir();
    for (&level, &index) in QUANTILES.iter().zip(&report.quantile_indices) {
        let entry = &manifest.entries[index];
        let Ok(img) = RgbImage::load(entry.resolve_image(&base)) else {
            continue;
        };
        let truth = entry.gt_quad();
        let overlay = render_overlay(&img, report.entries[index].quad.as_ref(), Some(&truth));
        overlay.save(out_dir.join(format!("quantile_{:03}.png", (level * 100.0).round() as u32)))?;
    }
    Ok(report)
}
