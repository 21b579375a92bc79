pub mod tensor;
pub mod graph;
pub mod data;
pub mod model;
pub mod train;
pub mod eval;
pub mod pipeline;
