use super::{FieldVector, LocalDomain};
use crate::scalar::Scalar;
use thiserror::Error;

/// Static description of a source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceDescriptor {
    pub name: String,
    /// Feature dimension, 1 to 4.
    pub feature_dim: usize,
    /// The application provides a one-cell halo around the local brick.
    pub has_guard: bool,
    /// False when the backing memory is reused after `update`; such sources are copied per frame.
    pub persistent: bool,
}

impl SourceDescriptor {
    pub fn new(name: impl Into<String>, feature_dim: usize) -> Self {
        Self {
            name: name.into(),
            feature_dim,
            has_guard: false,
            persistent: true,
        }
    }

    pub fn with_guard(mut self, has_guard: bool) -> Self {
        self.has_guard = has_guard;
        self
    }

    pub fn persistent(mut self, persistent: bool) -> Self {
        self.persistent = persistent;
        self
    }
}

/// Frame dependent information forwarded to every source before rendering.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FramePayload {
    pub step: u64,
    pub time: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct SourceError(pub String);

impl SourceError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

/// Accessor over application data.
///
/// `get` receives an index relative to the local brick origin. It is called
/// concurrently from render workers and must return the same value for the same
/// index until the next `update`.
pub trait Source<S: Scalar>: Send + Sync {
    fn descriptor(&self) -> &SourceDescriptor;

    /// Called once per frame before any sampling, with whether this source is active.
    fn update(&mut self, _enabled: bool, _payload: &FramePayload) -> Result<(), SourceError> {
        Ok(())
    }

    fn get(&self, index: [i64; 3]) -> FieldVector<S>;
}

type Sampler<S> = Box<dyn Fn([i64; 3]) -> FieldVector<S> + Send + Sync>;
type UpdateHook = Box<dyn FnMut(bool, &FramePayload) -> Result<(), SourceError> + Send + Sync>;

/// Source assembled from a sampling closure and an optional update hook.
pub struct FnSource<S> {
    descriptor: SourceDescriptor,
    sampler: Sampler<S>,
    hook: Option<UpdateHook>,
}

impl<S: Scalar> FnSource<S> {
    pub fn new(
        descriptor: SourceDescriptor,
        sampler: impl Fn([i64; 3]) -> FieldVector<S> + Send + Sync + 'static,
    ) -> Self {
        Self {
            descriptor,
            sampler: Box::new(sampler),
            hook: None,
        }
    }

    pub fn with_update(
        mut self,
        hook: impl FnMut(bool, &FramePayload) -> Result<(), SourceError> + Send + Sync + 'static,
    ) -> Self {
        self.hook = Some(Box::new(hook));
        self
    }
}

impl<S: Scalar> Source<S> for FnSource<S> {
    fn descriptor(&self) -> &SourceDescriptor {
        &self.descriptor
    }

    fn update(&mut self, enabled: bool, payload: &FramePayload) -> Result<(), SourceError> {
        match self.hook.as_mut() {
            Some(hook) => hook(enabled, payload),
            None => Ok(()),
        }
    }

    fn get(&self, index: [i64; 3]) -> FieldVector<S> {
        (self.sampler)(index)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SampleError {
    #[error("index {index:?} of source '{source_name}' is outside the guard halo")]
    BeyondGuard { source_name: String, index: [i64; 3] },
}

/// Reads one node of `source` with the border rules of its descriptor.
///
/// Guard access is allowed only when the source has a guard and interpolation is
/// enabled; otherwise indices are clamped into the owned brick.
pub fn sample<S: Scalar>(
    source: &(impl Source<S> + ?Sized),
    domain: &LocalDomain,
    index: [i64; 3],
    interpolation_enabled: bool,
) -> Result<FieldVector<S>, SampleError> {
    let desc = source.descriptor();
    if desc.has_guard && interpolation_enabled {
        let g = domain.guard_width as i64;
        let inside = (0..3).all(|k| index[k] >= -g && index[k] < domain.size[k] as i64 + g);
        if !inside {
            return Err(SampleError::BeyondGuard {
                source_name: desc.name.clone(),
                index,
            });
        }
        Ok(source.get(index))
    } else {
        let clamped = [0, 1, 2].map(|k| index[k].clamp(0, domain.size[k] as i64 - 1));
        Ok(source.get(clamped))
    }
}

/// Private copy of a source over the local brick (plus guard when present).
pub struct Snapshot<S> {
    descriptor: SourceDescriptor,
    lo: [i64; 3],
    extent: [usize; 3],
    data: Vec<FieldVector<S>>,
}

impl<S: Scalar> Snapshot<S> {
    /// Fills the buffer by invoking the source's accessor on every reachable index.
    pub fn capture(source: &(impl Source<S> + ?Sized), domain: &LocalDomain) -> Self {
        let descriptor = source.descriptor().clone();
        let ranges = domain.index_range(descriptor.has_guard);
        let lo = ranges.map(|r| r.0);
        let extent = ranges.map(|r| (r.1 - r.0) as usize);
        let mut data = Vec::with_capacity(extent.iter().product());
        for z in ranges[2].0..ranges[2].1 {
            for y in ranges[1].0..ranges[1].1 {
                for x in ranges[0].0..ranges[0].1 {
                    data.push(source.get([x, y, z]));
                }
            }
        }
        Self {
            descriptor,
            lo,
            extent,
            data,
        }
    }
}

impl<S: Scalar> Source<S> for Snapshot<S> {
    fn descriptor(&self) -> &SourceDescriptor {
        &self.descriptor
    }

    fn get(&self, index: [i64; 3]) -> FieldVector<S> {
        let local = [0, 1, 2].map(|k| (index[k] - self.lo[k]).clamp(0, self.extent[k] as i64 - 1) as usize);
        self.data[local[0] + self.extent[0] * (local[1] + self.extent[1] * local[2])]
    }
}
