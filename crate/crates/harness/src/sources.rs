//! The toy's fields exposed as render sources.
//!
//! The harness owns each rank's [`ToyState`] and publishes it through a
//! [`SharedState`] cell. Density and velocity read the published arrays in place;
//! the current-like field `ρ·v` is computed on demand into a scratch buffer the
//! harness may reuse, so it is declared non-persistent and copied per frame.

use crate::toy::ToyState;
use insitu_core::field::{FieldVector, FramePayload, Source, SourceDescriptor, SourceError, SourceRegistry};
use insitu_core::{Real, Registry};
use std::sync::{Arc, RwLock};

/// Latest state of one rank, swapped in by the harness after every step.
pub type SharedState = Arc<RwLock<Arc<ToyState>>>;

/// Reusable per-rank work buffer for derived fields.
pub type Scratch = Arc<RwLock<Vec<[Real; 3]>>>;

pub const DENSITY: &str = "density";
pub const VELOCITY: &str = "velocity";
pub const CURRENT: &str = "current";

/// Source names in registration order.
pub const SOURCE_NAMES: [&str; 3] = [DENSITY, VELOCITY, CURRENT];

pub fn share(state: ToyState) -> SharedState {
    Arc::new(RwLock::new(Arc::new(state)))
}

pub fn publish(shared: &SharedState, state: ToyState) {
    *shared.write().unwrap() = Arc::new(state);
}

fn latest(shared: &SharedState) -> Arc<ToyState> {
    shared.read().unwrap().clone()
}

#[derive(Debug, Clone, Copy)]
enum Field {
    Density,
    Velocity,
}

/// Zero-copy view of a field stored in the toy state.
pub struct StateSource {
    descriptor: SourceDescriptor,
    shared: SharedState,
    current: Arc<ToyState>,
    field: Field,
}

impl StateSource {
    pub fn density(shared: SharedState) -> Self {
        Self::new(SourceDescriptor::new(DENSITY, 1), shared, Field::Density)
    }

    pub fn velocity(shared: SharedState) -> Self {
        Self::new(SourceDescriptor::new(VELOCITY, 3), shared, Field::Velocity)
    }

    fn new(descriptor: SourceDescriptor, shared: SharedState, field: Field) -> Self {
        let current = latest(&shared);
        Self {
            descriptor: descriptor.with_guard(true).persistent(true),
            shared,
            current,
            field,
        }
    }
}

impl Source<Real> for StateSource {
    fn descriptor(&self) -> &SourceDescriptor {
        &self.descriptor
    }

    fn update(&mut self, enabled: bool, _payload: &FramePayload) -> Result<(), SourceError> {
        if enabled {
            self.current = latest(&self.shared);
        }
        Ok(())
    }

    fn get(&self, index: [i64; 3]) -> FieldVector<Real> {
        let i = self.current.index(index);
        match self.field {
            Field::Density => FieldVector::scalar(self.current.density[i]),
            Field::Velocity => FieldVector::new(&self.current.velocity[i]),
        }
    }
}

/// `ρ·v`, computed into the shared scratch buffer when the source is active.
pub struct CurrentSource {
    descriptor: SourceDescriptor,
    shared: SharedState,
    scratch: Scratch,
    state: Arc<ToyState>,
}

impl CurrentSource {
    pub fn new(shared: SharedState, scratch: Scratch) -> Self {
        let state = latest(&shared);
        Self {
            descriptor: SourceDescriptor::new(CURRENT, 3).with_guard(true).persistent(false),
            shared,
            scratch,
            state,
        }
    }
}

impl Source<Real> for CurrentSource {
    fn descriptor(&self) -> &SourceDescriptor {
        &self.descriptor
    }

    fn update(&mut self, enabled: bool, _payload: &FramePayload) -> Result<(), SourceError> {
        if !enabled {
            return Ok(());
        }
        self.state = latest(&self.shared);
        let mut buf = self.scratch.write().map_err(|_| SourceError::new("scratch buffer poisoned"))?;
        buf.clear();
        buf.extend(
            self.state
                .density
                .iter()
                .zip(&self.state.velocity)
                .map(|(&rho, v)| v.map(|c| rho * c)),
        );
        Ok(())
    }

    fn get(&self, index: [i64; 3]) -> FieldVector<Real> {
        FieldVector::new(&self.scratch.read().unwrap()[self.state.index(index)])
    }
}

/// The three toy sources, in [`SOURCE_NAMES`] order.
pub fn toy_sources(shared: &SharedState, scratch: &Scratch) -> Vec<Box<dyn Source<Real>>> {
    vec![
        Box::new(StateSource::density(shared.clone())),
        Box::new(StateSource::velocity(shared.clone())),
        Box::new(CurrentSource::new(shared.clone(), scratch.clone())),
    ]
}

pub fn registry_of(sources: Vec<Box<dyn Source<Real>>>) -> Registry {
    let mut registry = SourceRegistry::new();
    for source in sources {
        registry
            .register_boxed(source)
            .expect("toy sources have distinct names and valid dimensions");
    }
    registry
}
