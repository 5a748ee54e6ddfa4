//! The neural prior: time embeddings, a GRU with a skip connection, the
//! prior function layer, reverse-mode gradients and the Adam optimizer.

pub mod adam;
pub mod forward;
pub mod matrix;
pub mod model;
pub mod params;
pub mod scaler;

pub use adam::{adam_step, AdamState};
pub use forward::{
    embed_time, forward_route, prior_function_layer, RouteForward, RouteInput, Tape,
};
pub use matrix::Matrix;
pub use model::{ModelKind, NeuralModel, PreparedRoute};
pub use params::{ModelParams, Weights, DEFAULT_A, DEFAULT_EPSILON};
pub use scaler::FeatureScaler;
