//! The three network stages: Poisson encoder and convolutional features,
//! episodic memory, and group-coded decisions.

pub mod conv;
pub mod decision;
pub mod encoder;
pub mod memory;

pub use conv::{ConvLayer, ConvLayerConfig, Winner};
pub use decision::{predict_from_counts, DecisionLayer, DecisionLayerConfig, DecisionOutput};
pub use encoder::poisson_encode;
pub use memory::{balance_traces, delay_one_step, pearson_correlation, AdaptOutcome, MemoryLayer, MemoryLayerConfig, MemoryRepresentation};
