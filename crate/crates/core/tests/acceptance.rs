//! Acceptance suite: one PASS/FAIL/SKIP line per criterion, nonzero exit on
//! any failure.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::{brute_force_fht, random_map, random_view, ASPECTS};
use docloc_core::candidates::{
    enumerate_candidates, passes_projective_filter, reconstruct_fourth_side, CandidateConfig, Frame, SearchMode,
};
use docloc_core::edges::EdgeMap;
use docloc_core::harness::eval::evaluate;
use docloc_core::harness::manifest::load_manifest;
use docloc_core::harness::synth::{synthesize_scene, Scene, SceneSpec};
use docloc_core::hough::{fht, inverse_peak, Band, HoughPeak, SlopeFamily};
use docloc_core::metrics::{discrepancy_d, iou, mean_iou, min_d, MIN_D_SUCCESS};
use docloc_core::pipeline::localize_with_diagnostics;
use docloc_core::{
    localize, CameraIntrinsics, MetricsReport, Orientation, PipelineConfig, Point2, Provenance, Quad, TemplateSpec,
};
use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Line {
    name: &'static str,
    verdict: Verdict,
    detail: String,
}

fn check(name: &'static str, ok: bool, detail: String) -> Line {
    Line {
        name,
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

const FAMILIES: [SlopeFamily; 4] = [
    SlopeFamily::VertPlus,
    SlopeFamily::VertMinus,
    SlopeFamily::HorzPlus,
    SlopeFamily::HorzMinus,
];

fn working_camera() -> (CameraIntrinsics, f64, f64) {
    let (w, h) = (240.0, 426.0);
    (CameraIntrinsics::for_image(240, 426, 0.705), w, h)
}

fn fht_exactness() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut elapsed = 0.0;
    for k in 0..100 {
        let orientation = if k % 2 == 0 {
            Orientation::PrimarilyVertical
        } else {
            Orientation::PrimarilyHorizontal
        };
        let map = random_map(&mut rng, 32, 32, orientation);
        for family in FAMILIES {
            let t = Instant::now();
            let h = fht(&map, Band::whole(&map), family);
            elapsed += t.elapsed().as_secs_f64();
            let oracle = brute_force_fht(&map, Band::whole(&map), family);
            assert_eq!(h.shifts(), oracle.len());
            for (s, row) in oracle.iter().enumerate() {
                assert_eq!(h.columns, row.len());
                for (i, &v) in row.iter().enumerate() {
                    worst = worst.max((h.get(i, s) - v).abs() / v.abs().max(1.0));
                }
            }
        }
    }
    check(
        "fht exactness",
        worst <= 1e-9 && elapsed < 1.0,
        format!("100 maps x 4 families, max rel err {worst:.1e}, fht time {:.3} s", elapsed),
    )
}

fn inverse_round_trip() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut recovered = 0;
    let total = 500;
    for _ in 0..total {
        let family = FAMILIES[rng.gen_range(0..4)];
        let transposed = family.orientation() == Orientation::PrimarilyHorizontal;
        let along = [16usize, 32, 64][rng.gen_range(0..3)];
        let across = rng.gen_range(along.min(24)..=64);
        let (w, h) = if transposed { (along, across) } else { (across, along) };
        let map = EdgeMap::zeros(w, h, family.orientation());
        let probe = fht(&map, Band::whole(&map), family);
        let shift = rng.gen_range(0..along.min(across));
        let t = rng.gen_range(0..across - shift) as isize;
        let peak = HoughPeak {
            column: (t + probe.limit as isize) as usize,
            shift,
            value: 1.0,
            family,
        };
        let line = inverse_peak(&peak, &probe, map.cell_offset()).line;
        let (ox, oy) = map.cell_offset();
        let mut raster = map.clone();
        for r in 0..along {
            if transposed {
                let y = line.y_at(r as f64 + ox).unwrap() - oy;
                let y = y.round() as isize;
                if (0..h as isize).contains(&y) {
                    raster.values[y as usize * w + r] = 1.0;
                }
            } else {
                let x = line.x_at(r as f64 + oy).unwrap() - ox;
                let x = x.round() as isize;
                if (0..w as isize).contains(&x) {
                    raster.values[r * w + x as usize] = 1.0;
                }
            }
        }
        let again = fht(&raster, Band::whole(&raster), family);
        let (column, s, _) = again.argmax();
        recovered += (column == peak.column && s == peak.shift) as usize;
    }
    check(
        "inverse round trip",
        recovered == total,
        format!("{recovered}/{total} peaks recovered"),
    )
}

/// Canonical side `i` of `quad` spans the document width.
fn is_width_side(corners: &[Point2; 4], i: usize) -> bool {
    let perm = Quad::canonical_permutation(corners).unwrap();
    perm[i] / 2 == perm[(i + 1) % 4] / 2
}

fn reconstruction() -> Line {
    let (cam, w, h) = working_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = Instant::now();
    let (mut ok, mut worst, mut role_mismatch) = (0usize, 0.0f64, 0usize);
    let trials = 1000 * 4;
    for n in 0..1000 {
        let r = ASPECTS[n % 3];
        let view = random_view(&mut rng, r, &cam, w, h, 40.0);
        let q = view.quad;
        for k in 0..4 {
            let (p0, p1, third) = (q.side_line((k + 1) % 4), q.side_line((k + 3) % 4), q.side_line((k + 2) % 4));
            let role = if is_width_side(&view.corners, (k + 1) % 4) {
                Orientation::PrimarilyHorizontal
            } else {
                Orientation::PrimarilyVertical
            };
            role_mismatch += (role != p0.orientation()) as usize;
            let err = reconstruct_fourth_side((&p0, &p1), role, &third, r, &cam, None)
                .iter()
                .map(|rec| {
                    q.vertices()
                        .iter()
                        .map(|v| rec.quad.vertices().iter().map(|u| u.distance(*v)).fold(f64::INFINITY, f64::min))
                        .fold(0.0, f64::max)
                })
                .fold(f64::INFINITY, f64::min);
            if err <= 1e-6 {
                ok += 1;
                worst = worst.max(err);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        "fourth-side reconstruction",
        ok == trials && secs < 5.0,
        format!(
            "{ok}/{trials} within 1e-6 px (worst {worst:.1e}), {role_mismatch} pairs whose image orientation differs from their document role, {secs:.2} s"
        ),
    )
}

fn projective_filter() -> Line {
    let (cam, w, h) = working_camera();
    let cfg = CandidateConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut accepted, mut rejected_aspect, mut rejected_shear) = (0, 0, 0);
    for n in 0..1000 {
        let r = ASPECTS[n % 3];
        let view = random_view(&mut rng, r, &cam, w, h, 40.0);
        accepted += passes_projective_filter(&view.quad, &cam, r, &cfg) as usize;
        // The same pose, applied to perturbed document rectangles.
        let to_image = docloc_core::Homography::from_correspondences(
            &[
                Point2::new(0.0, 0.0),
                Point2::new(r, 0.0),
                Point2::new(r, 1.0),
                Point2::new(0.0, 1.0),
            ],
            &view.corners,
        )
        .unwrap();
        let project = |pts: [(f64, f64); 4]| Quad::new(pts.map(|(x, y)| to_image.apply(Point2::new(x, y)).unwrap()));
        let wide = 1.10 * r;
        let inflated = project([(0.0, 0.0), (wide, 0.0), (wide, 1.0), (0.0, 1.0)]);
        rejected_aspect += inflated.map_or(true, |q| !passes_projective_filter(&q, &cam, r, &cfg)) as usize;
        let tilt = rng.gen_range(6.05f64..15.0).to_radians().tan() * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let sheared = project([(0.0, 0.0), (r, 0.0), (r + tilt, 1.0), (tilt, 1.0)]);
        rejected_shear += sheared.map_or(true, |q| !passes_projective_filter(&q, &cam, r, &cfg)) as usize;
    }
    check(
        "projective filter",
        accepted == 1000 && rejected_aspect >= 990 && rejected_shear >= 990,
        format!("accepted {accepted}/1000 true, rejected {rejected_aspect}/1000 at 1.10x aspect, {rejected_shear}/1000 sheared beyond 6 deg"),
    )
}

/// Homography `src -> dst` from the null vector of the 8x9 DLT system.
fn dlt(src: &[Point2; 4], dst: &[Point2; 4]) -> Matrix3<f64> {
    let mut a = DMatrix::<f64>::zeros(9, 9);
    for (i, (p, q)) in src.iter().zip(dst).enumerate() {
        a.row_mut(2 * i)
            .copy_from_slice(&[p.x, p.y, 1.0, 0.0, 0.0, 0.0, -q.x * p.x, -q.x * p.y, -q.x]);
        a.row_mut(2 * i + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, p.x, p.y, 1.0, -q.y * p.x, -q.y * p.y, -q.y]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let (idx, _) = svd.singular_values.argmin();
    Matrix3::from_fn(|i, j| v_t[(idx, 3 * i + j)])
}

fn brute_min_d(q: &Quad, m: &Quad, t: &TemplateSpec) -> f64 {
    let corners = t.corners();
    let mut best = f64::INFINITY;
    for k in 0..4 {
        let renum: [Point2; 4] = std::array::from_fn(|i| q.vertex((i + k) % 4));
        let h = dlt(&renum, &corners);
        let d = m
            .vertices()
            .iter()
            .zip(&corners)
            .map(|(p, c)| {
                let v = h * Vector3::new(p.x, p.y, 1.0);
                Point2::new(v.x / v.z, v.y / v.z).distance(*c)
            })
            .fold(0.0, f64::max);
        best = best.min(d / t.perimeter());
    }
    best
}

fn brute_mean_iou(q: &Quad, m: &Quad, size: usize) -> f64 {
    let inside = |quad: &Quad, x: f64, y: f64| {
        let v = quad.vertices();
        (0..4).all(|i| {
            let (a, b) = (v[i], v[(i + 1) % 4]);
            (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x) >= 0.0
        })
    };
    let (mut fi, mut fu, mut bi, mut bu) = (0usize, 0usize, 0usize, 0usize);
    for y in 0..size {
        for x in 0..size {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            let (a, b) = (inside(q, cx, cy), inside(m, cx, cy));
            fi += (a && b) as usize;
            fu += (a || b) as usize;
            bi += (!a && !b) as usize;
            bu += (!a || !b) as usize;
        }
    }
    let ratio = |i: usize, u: usize| if u == 0 { 1.0 } else { i as f64 / u as f64 };
    0.5 * (ratio(fi, fu) + ratio(bi, bu))
}

fn random_convex(rng: &mut ChaCha8Rng, extent: f64) -> Quad {
    loop {
        let c = Point2::new(rng.gen_range(0.3..0.7) * extent, rng.gen_range(0.3..0.7) * extent);
        let base = rng.gen_range(0.0..std::f64::consts::TAU);
        let pts: [Point2; 4] = std::array::from_fn(|i| {
            let a = base + i as f64 * std::f64::consts::FRAC_PI_2 + rng.gen_range(-0.5..0.5);
            let rad = rng.gen_range(0.15..0.45) * extent;
            c + Point2::new(a.cos(), a.sin()) * rad
        });
        if let Ok(q) = Quad::new(pts) {
            if q.area() > 1.0 {
                return q;
            }
        }
    }
}

fn metric_identities() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (cam, w, h) = working_camera();
    let mut problems = Vec::new();
    let (mut d_self, mut cyclic_ok, mut brute_err) = (0.0f64, true, 0.0f64);
    for n in 0..200 {
        let r = ASPECTS[n % 3];
        let t = TemplateSpec::from_aspect(r).unwrap();
        let m = random_view(&mut rng, r, &cam, w, h, 40.0).quad;
        let q = random_convex(&mut rng, 240.0);
        d_self = d_self.max(discrepancy_d(&m, &m, &t));
        let base = min_d(&q, &m, &t);
        for k in 1..4 {
            let shifted = Quad::new(std::array::from_fn(|i| q.vertex((i + k) % 4))).unwrap();
            cyclic_ok &= min_d(&shifted, &m, &t).to_bits() == base.to_bits();
        }
        let oracle = brute_min_d(&q, &m, &t);
        brute_err = brute_err.max((base - oracle).abs() / oracle.max(1.0));
    }
    if d_self > 1e-12 {
        problems.push(format!("D(m,m) = {d_self:.1e}"));
    }
    if !cyclic_ok {
        problems.push("MinD changes under cyclic renumbering".to_string());
    }
    if brute_err > 1e-9 {
        problems.push(format!("MinD vs explicit renumbering {brute_err:.1e}"));
    }
    let a = Quad::from_arrays([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
    let b = Quad::from_arrays([[0.5, 0.0], [1.5, 0.0], [1.5, 1.0], [0.5, 1.0]]).unwrap();
    let half = iou(&a, &b);
    if (half - 1.0 / 3.0).abs() > 1e-12 {
        problems.push(format!("half-overlap IoU {half}"));
    }
    let mut mask_mismatch = 0;
    for _ in 0..200 {
        let (q, m) = (random_convex(&mut rng, 64.0), random_convex(&mut rng, 64.0));
        mask_mismatch += (mean_iou(&q, &m, (64, 64)) != brute_mean_iou(&q, &m, 64)) as usize;
    }
    if mask_mismatch > 0 {
        problems.push(format!("{mask_mismatch}/200 mean_iou mismatches"));
    }
    let detail = if problems.is_empty() {
        format!("D(m,m) <= {d_self:.1e}, MinD cyclic exact, MinD vs oracle {brute_err:.1e}, IoU half {half:.15}, mean_iou 200/200 exact")
    } else {
        problems.join("; ")
    };
    check("metric identities", problems.is_empty(), detail)
}

fn pruning(scenes: &[(SceneSpec, Scene)], cfg: &PipelineConfig) -> Line {
    let mut equal = 0;
    let (mut pruned_scored, mut all_scored) = (0usize, 0usize);
    for (spec, scene) in scenes.iter().take(50) {
        let (_, diag) = localize_with_diagnostics(&scene.image, &spec.template(), cfg).unwrap();
        let frame = Frame::new(diag.working.width(), diag.working.height(), cfg.candidates.frame_margin);
        let run = |mode| {
            enumerate_candidates(
                &diag.lines,
                &diag.maps,
                &diag.camera,
                spec.aspect,
                &cfg.candidates,
                &frame,
                mode,
            )
        };
        let (a, sa) = run(SearchMode::Pruned);
        let (b, sb) = run(SearchMode::Exhaustive);
        pruned_scored += sa.scored;
        all_scored += sb.scored;
        equal += (a == b) as usize;
    }
    check(
        "pruning admissibility",
        equal == 50,
        format!("{equal}/50 scenes identical; pruned search scored {pruned_scored} of {all_scored} candidates"),
    )
}

struct SuiteRun {
    success: usize,
    occluded: usize,
    occluded_three_line: usize,
    ms: Vec<f64>,
    secs: f64,
}

fn run_suite(scenes: &[(SceneSpec, Scene)], cfg: &PipelineConfig, render_secs: f64) -> SuiteRun {
    let start = Instant::now();
    let mut run = SuiteRun {
        success: 0,
        occluded: 0,
        occluded_three_line: 0,
        ms: Vec::new(),
        secs: 0.0,
    };
    for (spec, scene) in scenes {
        let outcome = localize(&scene.image, &spec.template(), cfg).unwrap();
        run.ms.push(outcome.timings().total);
        let ok_with = outcome.result().map(|res| {
            let m = MetricsReport::compute(&res.quad, &scene.truth);
            (m.min_d <= MIN_D_SUCCESS, res.provenance)
        });
        let success = matches!(ok_with, Some((true, _)));
        run.success += success as usize;
        if spec.occluded_side.is_some() {
            run.occluded += 1;
            run.occluded_three_line += matches!(ok_with, Some((true, Provenance::ThreeLine))) as usize;
        }
    }
    run.secs = start.elapsed().as_secs_f64() + render_secs;
    run
}

fn end_to_end(run: &SuiteRun, total: usize) -> Line {
    let rate = run.success as f64 / total as f64;
    let occ = run.occluded_three_line as f64 / run.occluded.max(1) as f64;
    check(
        "end-to-end synthetic suite",
        rate >= 0.95 && occ >= 0.80 && run.secs < 60.0,
        format!(
            "MinD<=0.017 in {}/{total} ({:.1}%), occluded three-line {}/{} ({:.1}%), {:.1} s including rendering",
            run.success,
            100.0 * rate,
            run.occluded_three_line,
            run.occluded,
            100.0 * occ,
            run.secs
        ),
    )
}

fn performance(run: &SuiteRun) -> Line {
    let mut ms = run.ms.clone();
    ms.sort_by(f64::total_cmp);
    let median = 0.5 * (ms[(ms.len() - 1) / 2] + ms[ms.len() / 2]);
    let note = if median <= 150.0 {
        "within the 150 ms target"
    } else {
        "above the 150 ms target (report only)"
    };
    check(
        "performance",
        median <= 500.0,
        format!("median localize {median:.1} ms over {} images, {note}", ms.len()),
    )
}

fn extended(name: &'static str, var: &str, judge: impl Fn(&docloc_core::harness::eval::EvalReport) -> (bool, String)) -> Line {
    let Some(path) = std::env::var_os(var) else {
        return Line {
            name,
            verdict: Verdict::Skip,
            detail: format!("set {var} to a manifest to run"),
        };
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let out = tempfile::tempdir().unwrap();
    let result = load_manifest(Path::new(&path), false)
        .and_then(|m| evaluate(&m, &PipelineConfig::default(), out.path(), jobs));
    match result {
        Ok(report) => {
            let (ok, detail) = judge(&report);
            check(name, ok, detail)
        }
        Err(e) => check(name, false, format!("evaluation failed: {e}")),
    }
}

fn main() -> ExitCode {
    let cfg = PipelineConfig::default();
    let mut lines = vec![
        fht_exactness(),
        inverse_round_trip(),
        reconstruction(),
        projective_filter(),
        metric_identities(),
    ];

    let start = Instant::now();
    let scenes: Vec<(SceneSpec, Scene)> = (0..200)
        .map(|i| {
            let spec = SceneSpec::suite(7, i);
            let scene = synthesize_scene(&spec).unwrap();
            (spec, scene)
        })
        .collect();
    let render_secs = start.elapsed().as_secs_f64();
    lines.push(pruning(&scenes, &cfg));
    let run = run_suite(&scenes, &cfg, render_secs);
    lines.push(end_to_end(&run, scenes.len()));
    lines.push(performance(&run));

    lines.push(extended("extended: SmartDoc", "DOCLOC_SMARTDOC_MANIFEST", |r| {
        let o = &r.overall;
        (o.mean_iou_gt >= 0.96, format!("mean IoU^gt {:.4} over {} frames", o.mean_iou_gt, o.count))
    }));
    lines.push(extended("extended: MIDV-500", "DOCLOC_MIDV500_MANIFEST", |r| {
        let o = &r.overall;
        (
            o.mean_iou_gt >= 0.85 && o.rate_min_d >= 0.75,
            format!(
                "mean IoU^gt {:.4}, MinD<=0.017 {:.2}% over {} frames",
                o.mean_iou_gt,
                100.0 * o.rate_min_d,
                o.count
            ),
        )
    }));

    let mut failed = 0;
    for l in &lines {
        let tag = match l.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::Skip => "SKIP",
        };
        println!("{tag} {}: {}", l.name, l.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
