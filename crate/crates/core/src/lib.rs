//! Travel-speed estimation that combines a recurrent neural prior with
//! conjugate normal-gamma updates over historical speed records.
//!
//! The crate contains the road network and trajectory model, the conjugate
//! math, an indexed record store, the neural prior with hand-written
//! gradients, four estimators (aggregation baseline, GRU, and the
//! discriminative and generative unified models), evaluation utilities and
//! a synthetic data generator.

pub mod conjugate;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod network;
pub mod nn;
pub mod route;
pub mod special;
pub mod store;
pub mod student_t;
pub mod synth;
pub mod time;
pub mod train;
pub mod trajectory;

pub use conjugate::{posterior_update, sample_stats, NormalGamma, NormalGammaGrad, SampleStats};
pub use error::{Error, Result};
pub use network::{parse_network, Category, RoadNetwork, Segment, SegmentIdx};
pub use route::{route_context, Context, Route};
pub use store::{build_store, RecordStore, SelectionParams};
pub use student_t::{posterior_predictive, snll, studentt_logpdf, StudentT};
pub use time::{tow_distance, TimeOfWeek};
pub use trajectory::{parse_trajectories, Trajectory, Traversal};
