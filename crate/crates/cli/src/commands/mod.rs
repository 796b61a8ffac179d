pub mod augment;
pub mod eval;
pub mod params;
pub mod split;
pub mod stats;
pub mod train;
