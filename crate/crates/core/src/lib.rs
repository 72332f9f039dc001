pub mod graph;
pub mod metapath;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synth;
pub mod train;
