use docloc_bench::fixture;
use docloc_core::PipelineConfig;

#[test]
fn fixture_is_at_working_resolution() {
    let cfg = PipelineConfig::default();
    let f = fixture(0, &cfg);
    assert_eq!(f.working.short_side(), cfg.working_short);
    assert_eq!(f.maps.horizontal.width, f.working.width());
    assert_eq!(f.maps.vertical.height, f.working.height());
    assert!(f.image.short_side() > f.working.short_side());
}
