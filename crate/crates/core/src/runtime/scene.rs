use crate::field::SourceDescriptor;
use crate::functor::{parse_chain, ChainError, FunctorRegistry};
use crate::render::{
    geometry::cast3, Camera, CameraError, ClipError, ClipPlane, RenderMode, RenderScene, RenderSettings,
    SourceStyle, TransferError, TransferFunction, DEFAULT_EARLY_TERMINATION,
};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Control point of a transfer function: normalized position and straight RGBA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub t: f64,
    pub rgba: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScene {
    /// Functor chain text; empty means identity.
    pub chain: String,
    pub points: Vec<ControlPoint>,
    pub min: f64,
    pub max: f64,
    pub mode: RenderMode,
    pub iso_threshold: f64,
}

impl SourceScene {
    /// Gray ramp over `[min, max]` with opacity growing to `max_alpha`.
    pub fn ramp(min: f64, max: f64, max_alpha: f64) -> Self {
        Self {
            chain: String::new(),
            points: vec![
                ControlPoint {
                    t: 0.0,
                    rgba: [0.0, 0.0, 0.0, 0.0],
                },
                ControlPoint {
                    t: 1.0,
                    rgba: [1.0, 1.0, 1.0, max_alpha],
                },
            ],
            min,
            max,
            mode: RenderMode::Volume,
            iso_threshold: 0.5 * (min + max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipSpec {
    pub point: [f64; 3],
    pub normal: [f64; 3],
}

/// Scene settings shared by all ranks; rank 0 owns the authoritative copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    /// Bumped whenever steering changes the scene.
    pub version: u64,
    pub camera: Camera,
    /// Indexed by source id.
    pub sources: Vec<SourceScene>,
    pub active: Vec<usize>,
    pub interpolation: bool,
    pub step_length: f64,
    pub early_termination_alpha: f64,
    pub clip_planes: Vec<ClipSpec>,
    /// Render every `period`-th simulation step.
    pub period: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("scene describes {scene} sources, registry has {registry}")]
    SourceCount { scene: usize, registry: usize },
    #[error("active source {0} does not exist")]
    UnknownActive(usize),
    #[error("chain of source '{source_name}': {error}")]
    Chain { source_name: String, error: ChainError },
    #[error("transfer function of source '{source_name}': {error}")]
    Transfer { source_name: String, error: TransferError },
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Clip(#[from] ClipError),
    #[error("step length must be positive, got {0}")]
    StepLength(f64),
    #[error("early termination alpha must lie in (0, 1], got {0}")]
    EarlyTermination(f64),
    #[error("render period must be at least 1")]
    Period,
    #[error("scene bytes are not valid: {0}")]
    Decode(String),
}

impl SceneState {
    /// Every source active with a neutral ramp.
    pub fn new(camera: Camera, source_count: usize) -> Self {
        Self {
            version: 0,
            camera,
            sources: (0..source_count).map(|_| SourceScene::ramp(0.0, 1.0, 0.1)).collect(),
            active: (0..source_count).collect(),
            interpolation: true,
            step_length: 0.5,
            early_termination_alpha: DEFAULT_EARLY_TERMINATION,
            clip_planes: Vec::new(),
            period: 1,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("scene serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SceneError> {
        serde_json::from_slice(bytes).map_err(|e| SceneError::Decode(e.to_string()))
    }

    /// Parses chains and tables into a renderable scene for the given sources.
    pub fn build<S: Scalar>(
        &self,
        descriptors: &[SourceDescriptor],
        functors: &FunctorRegistry<S>,
        max_chain_length: usize,
    ) -> Result<RenderScene<S>, SceneError> {
        if self.sources.len() != descriptors.len() {
            return Err(SceneError::SourceCount {
                scene: self.sources.len(),
                registry: descriptors.len(),
            });
        }
        if let Some(&bad) = self.active.iter().find(|&&id| id >= descriptors.len()) {
            return Err(SceneError::UnknownActive(bad));
        }
        if !(self.step_length > 0.0 && self.step_length.is_finite()) {
            return Err(SceneError::StepLength(self.step_length));
        }
        if !(self.early_termination_alpha > 0.0 && self.early_termination_alpha <= 1.0) {
            return Err(SceneError::EarlyTermination(self.early_termination_alpha));
        }
        if self.period == 0 {
            return Err(SceneError::Period);
        }
        self.camera.validate()?;
        let limits = functors.limits(max_chain_length);
        let styles = self
            .sources
            .iter()
            .zip(descriptors)
            .map(|(src, desc)| {
                let chain = parse_chain(&src.chain, functors, &limits, desc.feature_dim).map_err(|error| {
                    SceneError::Chain {
                        source_name: desc.name.clone(),
                        error,
                    }
                })?;
                let points: Vec<(f64, [f64; 4])> = src.points.iter().map(|p| (p.t, p.rgba)).collect();
                let transfer = TransferFunction::from_points(&points, src.min, src.max).map_err(|error| {
                    SceneError::Transfer {
                        source_name: desc.name.clone(),
                        error,
                    }
                })?;
                Ok(SourceStyle {
                    chain,
                    transfer,
                    mode: src.mode,
                    iso_threshold: S::lit(src.iso_threshold),
                })
            })
            .collect::<Result<Vec<_>, SceneError>>()?;
        let clip_planes = self
            .clip_planes
            .iter()
            .map(|c| ClipPlane::new(cast3(c.point), cast3(c.normal)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut active = self.active.clone();
        active.sort_unstable();
        active.dedup();
        Ok(RenderScene {
            camera: self.camera.clone(),
            styles,
            settings: RenderSettings {
                active,
                interpolation: self.interpolation,
                step_length: S::lit(self.step_length),
                early_termination_alpha: S::lit(self.early_termination_alpha),
            },
            clip_planes,
        })
    }
}
