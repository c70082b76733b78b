use super::{FramePayload, LocalDomain, Snapshot, Source, SourceDescriptor, SourceError};
use crate::scalar::Scalar;
use thiserror::Error;

pub type SourceId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("source '{0}' is already registered")]
    DuplicateName(String),
    #[error("source '{name}' has feature dimension {dim}, expected 1..=4")]
    FeatureDim { name: String, dim: usize },
    #[error("update of source '{name}' failed: {cause}")]
    Update { name: String, cause: SourceError },
    #[error("unknown source id {0}")]
    UnknownId(SourceId),
}

struct Entry<S> {
    source: Box<dyn Source<S>>,
    snapshot: Option<Snapshot<S>>,
}

/// Runtime list of sources, in registration order.
pub struct SourceRegistry<S> {
    entries: Vec<Entry<S>>,
}

impl<S: Scalar> Default for SourceRegistry<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> SourceRegistry<S> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn register(&mut self, source: impl Source<S> + 'static) -> Result<SourceId, RegistryError> {
        self.register_boxed(Box::new(source))
    }

    pub fn register_boxed(&mut self, source: Box<dyn Source<S>>) -> Result<SourceId, RegistryError> {
        let desc = source.descriptor();
        if !(1..=4).contains(&desc.feature_dim) {
            return Err(RegistryError::FeatureDim {
                name: desc.name.clone(),
                dim: desc.feature_dim,
            });
        }
        if self.id_of(&desc.name).is_some() {
            return Err(RegistryError::DuplicateName(desc.name.clone()));
        }
        self.entries.push(Entry {
            source,
            snapshot: None,
        });
        Ok(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id_of(&self, name: &str) -> Option<SourceId> {
        self.entries
            .iter()
            .position(|e| e.source.descriptor().name == name)
    }

    pub fn descriptor(&self, id: SourceId) -> Option<&SourceDescriptor> {
        self.entries.get(id).map(|e| e.source.descriptor())
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &SourceDescriptor> {
        self.entries.iter().map(|e| e.source.descriptor())
    }

    /// Runs every update hook in registration order.
    ///
    /// Active non-persistent sources are copied right after their own hook so that
    /// later hooks may reuse a shared scratch buffer. Snapshots of the previous frame
    /// are dropped.
    pub fn update_sources(
        &mut self,
        active: &[SourceId],
        payload: &FramePayload,
        domain: &LocalDomain,
    ) -> Result<(), RegistryError> {
        for (id, entry) in self.entries.iter_mut().enumerate() {
            let enabled = active.contains(&id);
            entry.snapshot = None;
            entry
                .source
                .update(enabled, payload)
                .map_err(|cause| RegistryError::Update {
                    name: entry.source.descriptor().name.clone(),
                    cause,
                })?;
            if enabled && !entry.source.descriptor().persistent {
                entry.snapshot = Some(Snapshot::capture(entry.source.as_ref(), domain));
            }
        }
        Ok(())
    }

    /// The accessor rendering reads from: the frame snapshot when one exists.
    pub fn accessor(&self, id: SourceId) -> Result<&dyn Source<S>, RegistryError> {
        let entry = self.entries.get(id).ok_or(RegistryError::UnknownId(id))?;
        Ok(match &entry.snapshot {
            Some(snap) => snap,
            None => entry.source.as_ref(),
        })
    }

    pub fn has_snapshot(&self, id: SourceId) -> bool {
        self.entries.get(id).is_some_and(|e| e.snapshot.is_some())
    }
}
