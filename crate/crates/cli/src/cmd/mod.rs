pub mod analyze;
pub mod benchmark;
pub mod generate;
pub mod predict;
pub mod train;
