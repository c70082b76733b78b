//! Per-rank frame pipeline: scene agreement, steering, metadata merging, frame
//! encoding and delivery from rank 0.

pub mod encode;
pub mod link;
pub mod metadata;
pub mod pipeline;
pub mod scene;
pub mod sink;
pub mod steering;

pub use encode::{base64_len, decode_frame, encode_frame, to_rgba8, write_png, EncodeError};
pub use link::GatewayLink;
pub use metadata::merge_metadata;
pub use pipeline::{
    ChannelInbox, EncoderOptions, FrameOutcome, FrameReport, FrameTiming, RankRuntime, RootIo, RootSummary,
    RuntimeError, ScriptedInbox, SteeringInbox,
};
pub use scene::{ClipSpec, ControlPoint, SceneError, SceneState, SourceScene};
pub use sink::{DirectorySink, FrameSink, MemorySink, NullSink};
pub use steering::{apply_steering, Control, SteeringReport};
