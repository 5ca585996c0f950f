pub mod bench;
pub mod diagnose;
pub mod evaluate;
pub mod synth;
pub mod train;
