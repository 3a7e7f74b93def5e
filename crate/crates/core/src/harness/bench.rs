//! Single-threaded per-stage timing over a manifest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::manifest::Manifest;
use crate::imaging::RgbImage;
use crate::pipeline::{localize, PipelineConfig, StageTimings, TemplateSpec};

pub const MIN_BENCH_IMAGES: usize = 10;

pub const STAGES: [&str; 7] = ["downscale", "edges", "lines", "candidates", "ranking", "refine", "total"];

fn stage_values(t: &StageTimings) -> [f64; 7] {
    [t.downscale, t.edges, t.lines, t.candidates, t.ranking, t.refine, t.total]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub median: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub images: usize,
    pub repetitions: usize,
    /// Per stage in [`STAGES`] order: statistics over images of each
    /// image's median across repetitions, milliseconds.
    pub stages: Vec<(String, StageStats)>,
}

impl BenchReport {
    pub fn stage(&self, name: &str) -> Option<StageStats> {
        self.stages.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }
}

/// Nearest-rank quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Times `reps` runs on each image. Images are decoded once, up front.
pub fn bench_images(images: &[(RgbImage, TemplateSpec)], reps: usize, cfg: &PipelineConfig) -> Result<BenchReport> {
    if images.len() < MIN_BENCH_IMAGES {
        return Err(Error::Harness(format!(
            "bench needs at least {MIN_BENCH_IMAGES} images, got {}",
            images.len()
        )));
    }
    if reps == 0 {
        return Err(Error::Config("repetitions must be positive".into()));
    }
    let mut per_image: Vec<[f64; 7]> = Vec::with_capacity(images.len());
    for (img, template) in images {
        let mut runs: Vec<[f64; 7]> = Vec::with_capacity(reps);
        for _ in 0..reps {
            runs.push(stage_values(localize(img, template, cfg)?.timings()));
        }
        per_image.push(std::array::from_fn(|s| median(&runs.iter().map(|r| r[s]).collect::<Vec<_>>())));
    }
    let stages = STAGES
        .iter()
        .enumerate()
        .map(|(s, name)| {
            let mut v: Vec<f64> = per_image.iter().map(|r| r[s]).collect();
            v.sort_by(f64::total_cmp);
            (
                name.to_string(),
                StageStats {
                    median: median(&v),
                    p95: quantile(&v, 0.95),
                },
            )
        })
        .collect();
    Ok(BenchReport {
        images: images.len(),
        repetitions: reps,
        stages,
    })
}

pub fn bench(manifest: &Manifest, reps: usize, cfg: &PipelineConfig) -> Result<BenchReport> {
    let base = manifest.base_dir();
    let images = manifest
        .entries
        .iter()
        .map(|e| Ok((RgbImage::load(e.resolve_image(&base))?, e.template())))
        .collect::<Result<Vec<_>>>()?;
    bench_images(&images, reps, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.95), 19.0);
        assert_eq!(quantile(&v, 1.0), 20.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn too_few_images_is_an_error() {
        let img = RgbImage::filled(80, 80, [0; 3]).unwrap();
        let t = TemplateSpec::from_aspect(1.0).unwrap();
        let few = vec![(img, t); 3];
        assert!(bench_images(&few, 1, &PipelineConfig::default()).is_err());
    }
}
