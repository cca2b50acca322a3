pub mod build;
pub mod eval;
pub mod gradcheck;
pub mod simmap;
pub mod synth;
pub mod train;
