pub mod bench;
pub mod evaluate;
pub mod extract;
pub mod predict;
pub mod synth;
pub mod train;
