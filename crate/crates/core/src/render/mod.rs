//! Front-to-back ray casting of one rank's brick into a premultiplied partial image.

mod camera;
pub mod geometry;
mod march;
mod transfer;

pub use camera::{Camera, CameraError, RayGenerator};
pub use geometry::{ray_box_intersection, ClipError, ClipPlane, Ray};
pub use march::{
    gradient_normal, march_ray, owned_stations, render_local, ActiveSource, MarchContext,
    RenderError, RenderStats,
};
pub use transfer::{TransferError, TransferFunction, LUT_SIZE};

use crate::field::SourceId;
use crate::functor::FunctorChain;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Default accumulated opacity at which a ray stops.
pub const DEFAULT_EARLY_TERMINATION: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    #[default]
    Volume,
    Iso,
}

/// How one source is turned into color.
#[derive(Debug, Clone)]
pub struct SourceStyle<S: Scalar> {
    pub chain: FunctorChain<S>,
    pub transfer: TransferFunction<S>,
    pub mode: RenderMode,
    pub iso_threshold: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSettings<S> {
    /// Sources to render, in ascending id order.
    pub active: Vec<SourceId>,
    pub interpolation: bool,
    /// Distance between ray stations, in global cell units.
    pub step_length: S,
    pub early_termination_alpha: S,
}

impl<S: Scalar> Default for RenderSettings<S> {
    fn default() -> Self {
        Self {
            active: Vec::new(),
            interpolation: true,
            step_length: S::lit(0.5),
            early_termination_alpha: S::lit(DEFAULT_EARLY_TERMINATION),
        }
    }
}

/// Everything a rank needs to render a frame, identical on all ranks.
#[derive(Debug, Clone)]
pub struct RenderScene<S: Scalar> {
    pub camera: Camera,
    /// Indexed by source id; covers every registered source.
    pub styles: Vec<SourceStyle<S>>,
    pub settings: RenderSettings<S>,
    pub clip_planes: Vec<ClipPlane<S>>,
}
