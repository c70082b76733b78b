//! Toy simulation host for the in-situ runtime.
//!
//! An analytic shear flow ([`toy`]) is decomposed over in-process ranks, exposed
//! through zero-copy sources ([`sources`]) and rendered every n-th step by the
//! runtime. Frames go to a gateway or, headless, to `frame_<step>.png` files.

pub mod config;
mod run;
pub mod sources;
pub mod toy;

pub use config::{CameraConfig, ConfigError, HarnessConfig, Pair, Triple};
pub use run::{camera, initial_scene, root_io, source_infos, FrameMetrics, Harness, HarnessError, Metrics, RunOutput};
pub use toy::{ShearFlow, ToyParams, ToyState};
