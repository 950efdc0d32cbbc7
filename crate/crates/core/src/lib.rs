//! Depth-estimation benchmarking toolkit.
//!
//! - [`types`]: depth maps, RGB images, masks and pinhole geometry
//! - [`metrics`]: RMSE / si-RMSE / log10 / REL, dataset reports and the
//!   fidelity-latency leaderboard score
//! - [`losses`]: SILog, gradient, virtual-normal, robust and pairwise
//!   distillation losses (forward only)
//! - [`engine`]: a small NHWC inference engine for lightweight encoder-decoder
//!   depth networks
//! - [`data`]: PNG ingestion, manifests, splits and random crops
//! - [`bench`]: latency measurement and score attribution

pub mod bench;
pub mod data;
pub mod engine;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod rng;
pub mod tensor;
pub mod types;

pub use error::{Error, Result};
pub use tensor::Tensor;
pub use types::{CameraIntrinsics, DepthMap, Mask, RgbImage};
