use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use docloc_core::harness::adapt::{adapt_dataset, load_aspect_table, DatasetKind};
use docloc_core::harness::bench::bench;
use docloc_core::harness::eval::{evaluate, ENTRIES_FILE, SUMMARY_FILE};
use docloc_core::harness::manifest::{load_manifest, write_manifest};
use docloc_core::harness::overlay::render_overlay;
use docloc_core::harness::synth::{write_suite, SuiteKind, SUITE_MANIFEST};
use docloc_core::{localize_with_diagnostics, Outcome, PipelineConfig, RgbImage, TemplateSpec};

#[derive(Parser)]
#[command(name = "docloc", version, about = "Locate rectangular documents of known aspect ratio")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate the document in one image.
    Locate {
        image: PathBuf,
        /// Document width over height.
        #[arg(long)]
        aspect: f64,
        /// TOML file overriding pipeline parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the image with the detected quad drawn in red.
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Print the result as JSON.
        #[arg(long)]
        json: bool,
        /// Write the working-resolution edge maps as PNG files into this directory.
        #[arg(long)]
        dump_edges: Option<PathBuf>,
    },
    /// Evaluate a manifest and write CSV, JSON and overlays.
    Eval {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Abort on the first invalid manifest line.
        #[arg(long)]
        strict: bool,
    },
    /// Render a seeded synthetic suite with its manifest.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Give every scene one fully occluded side.
        #[arg(long, conflicts_with = "stress")]
        occlude_side: bool,
        /// Use fine stripe and checker textures.
        #[arg(long)]
        stress: bool,
    },
    /// Convert a dataset's native ground truth into a manifest.
    Adapt {
        #[arg(long)]
        kind: DatasetKind,
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON object mapping MIDV-500 document types to aspect ratios.
        #[arg(long)]
        aspect_table: Option<PathBuf>,
    },
    /// Time the pipeline stages over a manifest, single-threaded.
    Bench {
        manifest: PathBuf,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::from_file(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

fn locate(
    image: &Path,
    aspect: f64,
    config: Option<&Path>,
    overlay: Option<&Path>,
    json: bool,
    dump_edges: Option<&Path>,
) -> Result<bool> {
    let cfg = load_config(config)?;
    let img = RgbImage::load(image).with_context(|| format!("reading {}", image.display()))?;
    let template = TemplateSpec::from_aspect(aspect)?;
    let (outcome, diag) = localize_with_diagnostics(&img, &template, &cfg)?;
    if let Some(dir) = dump_edges {
        std::fs::create_dir_all(dir)?;
        diag.maps.horizontal.to_gray_image().save(dir.join("edges_horizontal.png"))?;
        diag.maps.vertical.to_gray_image().save(dir.join("edges_vertical.png"))?;
    }
    if let Some(path) = overlay {
        render_overlay(&img, outcome.result().map(|r| &r.quad), None).save(path)?;
    }
    match &outcome {
        Outcome::Detected(r) if json => println!("{}", serde_json::to_string_pretty(r)?),
        Outcome::Detected(r) => {
            for p in r.quad.vertices() {
                println!("{:.2} {:.2}", p.x, p.y);
            }
            println!(
                "provenance {}  contour {:.2}  contrast {:.2}  combined {:.2}  {:.1} ms",
                r.provenance, r.contour, r.contrast, r.combined, r.timings.total
            );
        }
        Outcome::NoDetection { timings } if json => println!(
            "{}",
            serde_json::json!({ "detected": false, "timings": timings })
        ),
        Outcome::NoDetection { .. } => println!("no document found"),
    }
    Ok(outcome.result().is_some())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Locate {
            image,
            aspect,
            config,
            overlay,
            json,
            dump_edges,
        } => locate(&image, aspect, config.as_deref(), overlay.as_deref(), json, dump_edges.as_deref()),
        Command::Eval {
            manifest,
            out,
            jobs,
            config,
            strict,
        } => {
            let cfg = load_config(config.as_deref())?;
            let m = load_manifest(&manifest, strict)?;
            for s in &m.skipped {
                eprintln!("{}:{}: skipped: {}", manifest.display(), s.line, s.message);
            }
            let report = evaluate(&m, &cfg, &out, jobs)?;
            let o = &report.overall;
            println!(
                "{} entries  detected {}  MinD<=0.017 {:.2}%  IoU>=0.9 {:.2}%  mean IoU^gt {:.4}  mean MeanIoU {:.4}  median {:.1} ms",
                o.count,
                o.detected,
                100.0 * o.rate_min_d,
                100.0 * o.rate_iou,
                o.mean_iou_gt,
                o.mean_mean_iou,
                o.median_ms
            );
            for e in report.entries.iter().filter_map(|e| e.error.as_deref()) {
                eprintln!("error: {e}");
            }
            println!("wrote {} and {} to {}", ENTRIES_FILE, SUMMARY_FILE, out.display());
            Ok(true)
        }
        Command::Synth {
            count,
            seed,
            out,
            occlude_side,
            stress,
        } => {
            let kind = match (occlude_side, stress) {
                (true, _) => SuiteKind::Occluded,
                (_, true) => SuiteKind::Stress,
                _ => SuiteKind::Standard,
            };
            let entries = write_suite(&out, count, seed, kind)?;
            println!("wrote {} scenes and {}", entries.len(), out.join(SUITE_MANIFEST).display());
            Ok(true)
        }
        Command::Adapt {
            kind,
            root,
            out,
            aspect_table,
        } => {
            let table = aspect_table.as_deref().map(load_aspect_table).transpose()?;
            let report = adapt_dataset(&root, kind, table.as_ref())?;
            for (path, why) in &report.skipped {
                eprintln!("skipped {}: {why}", path.display());
            }
            if report.entries.is_empty() {
                bail!("no frames converted under {}", root.display());
            }
            write_manifest(&out, &report.entries)?;
            println!("wrote {} entries to {}", report.entries.len(), out.display());
            Ok(true)
        }
        Command::Bench { manifest, reps, config } => {
            let cfg = load_config(config.as_deref())?;
            let m = load_manifest(&manifest, false)?;
            let report = bench(&m, reps, &cfg)?;
            println!("{} images x {} repetitions (ms)", report.images, report.repetitions);
            println!("{:<12} {:>9} {:>9}", "stage", "median", "p95");
            for (name, s) in &report.stages {
                println!("{name:<12} {:>9.2} {:>9.2}", s.median, s.p95);
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
