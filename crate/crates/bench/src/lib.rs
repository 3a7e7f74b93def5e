//! Benchmark fixtures: seeded suite scenes at full and working resolution.

use docloc_core::edges::EdgeMaps;
use docloc_core::harness::synth::{synthesize_scene, SceneSpec};
use docloc_core::imaging::downscale_working;
use docloc_core::{PipelineConfig, RgbImage, TemplateSpec};

pub const SEED: u64 = 7;

pub struct Fixture {
    pub image: RgbImage,
    pub template: TemplateSpec,
    pub working: RgbImage,
    pub maps: EdgeMaps,
}

/// Scene `index` of the standard suite.
pub fn fixture(index: usize, cfg: &PipelineConfig) -> Fixture {
    let spec = SceneSpec::suite(SEED, index);
    let scene = synthesize_scene(&spec).expect("suite scenes render");
    let working = downscale_working(&scene.image, cfg.working_short).image;
    let maps = EdgeMaps::compute(&working, &cfg.edges);
    Fixture {
        image: scene.image,
        template: TemplateSpec::from_aspect(spec.aspect).expect("suite aspect"),
        working,
        maps,
    }
}

pub fn fixtures(count: usize, cfg: &PipelineConfig) -> Vec<Fixture> {
    (0..count).map(|i| fixture(i, cfg)).collect()
}
