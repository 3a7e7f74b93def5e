mod common;

use common::{render_quad, segment_to_line, ASPECTS};
use docloc_core::candidates::{enumerate_candidates, sort_by_contour, CandidateConfig, Frame, SearchMode};
use docloc_core::contrast::{normalize_regions, rank_final, ContrastConfig, Region};
use docloc_core::edges::{EdgeMap, EdgeMaps, EdgeParams};
use docloc_core::harness::synth::{synthesize_scene, Background, Scene, SceneSpec};
use docloc_core::hough::{detect_lines, HoughConfig, LineSet};
use docloc_core::metrics::{min_d, MIN_D_SUCCESS};
use docloc_core::refine::{refine_quad, RefineConfig};
use docloc_core::{
    localize, CameraIntrinsics, MetricsReport, Outcome, PipelineConfig, Point2, Provenance, Quad, RgbImage,
    ScoredQuad,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn clean(seed: u64, aspect: f64) -> SceneSpec {
    SceneSpec {
        aspect,
        background: Background::Flat,
        clutter_lines: 0,
        noise_sigma: 0.0,
        occluded_side: None,
        ..SceneSpec::random(seed, 0, false)
    }
}

/// Document `quad` in working pixels, dark on light, 240 x 320.
fn dark_rectangle() -> (RgbImage, Quad) {
    let q = Quad::from_arrays([[52.3, 61.7], [190.4, 70.2], [184.1, 262.8], [45.6, 251.9]]).unwrap();
    (render_quad(240, 320, &q, [35, 30, 40], [235, 232, 228]), q)
}

fn working_lines(img: &RgbImage) -> (EdgeMaps, LineSet) {
    let maps = EdgeMaps::compute(img, &EdgeParams::default());
    let lines = detect_lines(&maps.horizontal, &maps.vertical, &HoughConfig::default());
    (maps, lines)
}

fn max_vertex_distance(a: &Quad, b: &Quad) -> f64 {
    a.vertices()
        .iter()
        .zip(b.vertices())
        .map(|(p, q)| p.distance(*q))
        .fold(0.0, f64::max)
}

#[test]
fn dark_rectangle_borders_are_detected() {
    let (img, q) = dark_rectangle();
    let (_, lines) = working_lines(&img);
    assert!(lines.horizontal.len() <= 15 && lines.vertical.len() <= 45);
    for i in 0..4 {
        let (a, b) = q.side(i);
        let o = q.side_line(i).orientation();
        let best = lines
            .get(o)
            .iter()
            .map(|l| segment_to_line(a, b, &l.line))
            .fold(f64::INFINITY, f64::min);
        assert!(best <= 1.0, "side {i}: nearest detected line {best:.2} px away");
    }
}

fn union_by_contour(img: &RgbImage, r: f64, maps: &EdgeMaps, lines: &LineSet) -> Vec<ScoredQuad> {
    let cam = CameraIntrinsics::for_image(img.width(), img.height(), 0.705);
    let frame = Frame::new(img.width(), img.height(), 0.25);
    let (mut all, _) = enumerate_candidates(lines, maps, &cam, r, &CandidateConfig::default(), &frame, SearchMode::Pruned);
    sort_by_contour(&mut all);
    all
}

#[test]
fn clean_scene_puts_the_document_first_by_contour() {
    let spec = SceneSpec {
        width: 240,
        height: 426,
        ..clean(3, 210.0 / 297.0)
    };
    let scene = synthesize_scene(&spec).unwrap();
    let (maps, lines) = working_lines(&scene.image);
    let union = union_by_contour(&scene.image, spec.aspect, &maps, &lines);
    let top = &union[0];
    let d = min_d(&top.quad, &scene.truth.m, &scene.truth.template);
    assert!(d <= MIN_D_SUCCESS, "top candidate MinD {d}");
    assert_eq!(top.provenance, Provenance::FourLine);
}

fn erase_near(map: &mut EdgeMap, a: Point2, b: Point2, reach: f64) {
    let (ox, oy) = map.cell_offset();
    let line = docloc_core::HomoLine::through(a, b).unwrap();
    for y in 0..map.height {
        for x in 0..map.width {
            let p = Point2::new(x as f64 + ox, y as f64 + oy);
            let t = (p - a).dot(b - a) / (b - a).dot(b - a);
            if line.signed_distance(p).abs() <= reach && (-0.2..=1.2).contains(&t) {
                map.values[y * map.width + x] = 0.0;
            }
        }
    }
}

#[test]
fn erased_border_is_restored_from_three_lines() {
    let mut hits = 0;
    let mut misses = Vec::new();
    for seed in 0..30u64 {
        let spec = SceneSpec {
            width: 240,
            height: 426,
            size_range: (0.7, 0.85),
            max_tilt_deg: 25.0,
            ..clean(seed, ASPECTS[seed as usize % 3])
        };
        for (side, best) in erased_border_case(&spec).into_iter().enumerate() {
            if best <= MIN_D_SUCCESS {
                hits += 1;
            } else {
                misses.push((seed, side, best));
            }
        }
    }
    assert!(hits >= 114, "{hits}/120 restored; misses {misses:?}");
}

/// Best three-line MinD in the union with each side erased in turn.
fn erased_border_case(spec: &SceneSpec) -> Vec<f64> {
    let scene = synthesize_scene(spec).unwrap();
    (0..4)
        .map(|side| {
            let mut maps = EdgeMaps::compute(&scene.image, &EdgeParams::default());
            let (a, b) = scene.truth.m.side(side);
            erase_near(&mut maps.horizontal, a, b, 4.0);
            erase_near(&mut maps.vertical, a, b, 4.0);
            let lines = detect_lines(&maps.horizontal, &maps.vertical, &HoughConfig::default());
            union_by_contour(&scene.image, spec.aspect, &maps, &lines)
                .iter()
                .filter(|c| c.provenance == Provenance::ThreeLine)
                .map(|c| min_d(&c.quad, &scene.truth.m, &scene.truth.template))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[test]
fn scaled_edge_maps_keep_the_candidate_order() {
    let spec = SceneSpec {
        width: 240,
        height: 426,
        ..SceneSpec::random(11, 2, false)
    };
    let scene = synthesize_scene(&spec).unwrap();
    let cam = CameraIntrinsics::for_image(240, 426, 0.705);
    let frame = Frame::new(240, 426, 0.25);
    let (maps, lines) = working_lines(&scene.image);
    let a = 2.5f32;
    let scale = |m: &EdgeMap| EdgeMap {
        values: m.values.iter().map(|v| v * a).collect(),
        ..m.clone()
    };
    let scaled = EdgeMaps {
        horizontal: scale(&maps.horizontal),
        vertical: scale(&maps.vertical),
    };
    let cfg = CandidateConfig::default();
    let cfg_scaled = CandidateConfig {
        w_min: cfg.w_min * a as f64,
        ..cfg
    };
    let (base, _) = enumerate_candidates(&lines, &maps, &cam, spec.aspect, &cfg, &frame, SearchMode::Exhaustive);
    let (big, _) = enumerate_candidates(&lines, &scaled, &cam, spec.aspect, &cfg_scaled, &frame, SearchMode::Exhaustive);
    assert!(!base.is_empty());
    assert_eq!(base.len(), big.len());
    for (x, y) in base.iter().zip(&big) {
        assert_eq!(x.quad, y.quad);
        assert!((x.contour * a as f64 - y.contour).abs() <= 1e-4 * y.contour.abs().max(1.0));
    }
}

#[test]
fn description_regions_match_the_rendered_document() {
    let spec = clean(8, 0.63);
    let scene = synthesize_scene(&spec).unwrap();
    let regions = normalize_regions(&scene.image, &scene.truth.m, spec.aspect, &ContrastConfig::default()).unwrap();
    let lum = |c: &[u8; 3]| 0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64;
    let doc = lum(&spec.doc_color);
    let inner: Vec<_> = regions.region(Region::Inner).collect();
    let outer: Vec<_> = regions.region(Region::Outer).collect();
    assert!(!inner.is_empty() && !outer.is_empty());
    assert!(inner.iter().all(|&&c| c == spec.doc_color));
    assert!(outer.iter().all(|c| (lum(c) - doc).abs() >= 50.0));
}

#[test]
fn contrast_overrules_a_stronger_false_contour() {
    // Candidate `b` follows the document, `a` a band straddling its left border.
    let (img, truth) = dark_rectangle();
    let shifted = Quad::new(truth.vertices().map(|p| p + Point2::new(-60.0, 0.0))).unwrap();
    let mk = |quad: Quad, contour: f64, seq: u64| ScoredQuad {
        quad,
        contour,
        contrast: 0.0,
        combined: 0.0,
        provenance: Provenance::FourLine,
        source_lines: Vec::new(),
        restored_side: None,
        seq,
    };
    let cands = [mk(shifted, 300.0, 0), mk(truth, 220.0, 1)];
    let best = rank_final(&cands, &img, 0.727, 4, &ContrastConfig::default()).unwrap();
    assert_eq!(best.quad, truth);
    assert!(best.contrast > 150.0);
}

fn refine_cfg() -> (RefineConfig, EdgeParams) {
    (RefineConfig::default(), EdgeParams::default())
}

fn perturbed(q: &Quad, rng: &mut ChaCha8Rng, reach: f64) -> Quad {
    loop {
        let v = q.vertices().map(|p| {
            let (a, r) = (rng.gen_range(0.0..std::f64::consts::TAU), reach * rng.gen_range(0.0f64..1.0).sqrt());
            p + Point2::new(a.cos(), a.sin()) * r
        });
        if let Ok(out) = Quad::new(v) {
            return out;
        }
    }
}

fn refinement_scenes() -> Vec<Scene> {
    (0..20)
        .map(|i| {
            let spec = SceneSpec {
                width: 480,
                height: 852,
                clutter_lines: 0,
                occluded_side: None,
                ..SceneSpec::random(21, i, false)
            };
            synthesize_scene(&spec).unwrap()
        })
        .collect()
}

#[test]
fn refinement_reduces_discrepancy_of_perturbed_quads() {
    let (cfg, params) = refine_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let scenes = refinement_scenes();
    let (mut better, mut trials) = (0, 0);
    for scene in &scenes {
        let factor = 2.0;
        let exact = scene.truth.m.scaled(1.0 / factor);
        for _ in 0..10 {
            let coarse = perturbed(&exact, &mut rng, 2.0);
            let before = min_d(&coarse.scaled(factor), &scene.truth.m, &scene.truth.template);
            let out = refine_quad(&scene.image, &coarse, factor, 240, &cfg, &params, None).quad;
            let after = min_d(&out, &scene.truth.m, &scene.truth.template);
            better += (after < before) as usize;
            trials += 1;
        }
    }
    assert!(better * 100 >= 95 * trials, "{better}/{trials} improved");
}

#[test]
fn refinement_is_idempotent() {
    let (cfg, params) = refine_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let factor = 2.0;
    for scene in refinement_scenes().iter().take(8) {
        let coarse = perturbed(&scene.truth.m.scaled(1.0 / factor), &mut rng, 2.0);
        let once = refine_quad(&scene.image, &coarse, factor, 240, &cfg, &params, None).quad;
        let twice = refine_quad(&scene.image, &once.scaled(1.0 / factor), factor, 240, &cfg, &params, None).quad;
        let first = max_vertex_distance(&coarse.scaled(factor), &once) / factor;
        let second = max_vertex_distance(&once, &twice) / factor;
        assert!(second <= 0.5, "second pass moved {second:.3} working px");
        assert!(second <= first, "second pass {second:.3} vs first {first:.3}");
    }
}

#[test]
fn black_a4_document_on_white() {
    let spec = SceneSpec {
        doc_color: [20, 20, 22],
        background_color: [245, 244, 240],
        max_tilt_deg: 15.0,
        max_roll_deg: 8.0,
        ..clean(17, 210.0 / 297.0)
    };
    let scene = synthesize_scene(&spec).unwrap();
    let out = localize(&scene.image, &spec.template(), &PipelineConfig::default()).unwrap();
    let res = out.result().expect("document found");
    let m = MetricsReport::compute(&res.quad, &scene.truth);
    assert!(m.min_d <= MIN_D_SUCCESS, "MinD {}", m.min_d);
    assert!(m.iou_gt > 0.95);
}

#[test]
fn occluded_border_is_restored() {
    for side in 0..4 {
        let spec = SceneSpec {
            occluded_side: Some(side),
            ..clean(30 + side as u64, 1.586)
        };
        let scene = synthesize_scene(&spec).unwrap();
        let out = localize(&scene.image, &spec.template(), &PipelineConfig::default()).unwrap();
        let res = out.result().expect("document found");
        let m = MetricsReport::compute(&res.quad, &scene.truth);
        assert_eq!(res.provenance, Provenance::ThreeLine, "side {side}");
        assert!(m.min_d <= MIN_D_SUCCESS, "side {side}: MinD {}", m.min_d);
    }
}

#[test]
fn half_turn_gives_the_rotated_quad() {
    let cfg = PipelineConfig::default();
    for i in [0, 1, 2, 5] {
        let spec = SceneSpec::suite(7, i);
        let scene = synthesize_scene(&spec).unwrap();
        let template = spec.template();
        let (w, h) = (scene.image.width() as f64, scene.image.height() as f64);
        let a = localize(&scene.image, &template, &cfg).unwrap();
        let b = localize(&scene.image.rotated_180(), &template, &cfg).unwrap();
        let (Some(a), Some(b)) = (a.result(), b.result()) else {
            panic!("scene {i}: detection differs under rotation");
        };
        let back = Quad::new(b.quad.vertices().map(|p| Point2::new(w - p.x, h - p.y))).unwrap();
        let d = max_vertex_distance(&a.quad, &back) / a.working_factor;
        assert!(d <= 1.0, "scene {i}: {d:.3} working px apart");
    }
}

#[test]
fn localization_is_deterministic() {
    let cfg = PipelineConfig::default();
    let spec = SceneSpec::suite(7, 3);
    let scene = synthesize_scene(&spec).unwrap();
    let strip = |o: Outcome| match o {
        Outcome::Detected(r) => Some((r.quad, r.working_quad, r.contour.to_bits(), r.contrast.to_bits(), r.provenance)),
        Outcome::NoDetection { .. } => None,
    };
    let first = strip(localize(&scene.image, &spec.template(), &cfg).unwrap());
    for _ in 0..2 {
        assert_eq!(strip(localize(&scene.image, &spec.template(), &cfg).unwrap()), first);
    }
    assert!(first.is_some());
}


