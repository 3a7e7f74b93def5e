pub mod adapt;
pub mod bench;
pub mod eval;
pub mod manifest;
pub mod overlay;
pub mod synth;
