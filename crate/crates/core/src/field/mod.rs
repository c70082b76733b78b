//! Volumes, regular domain decomposition and the source contract through
//! which all field data is read.

mod registry;
mod source;

pub use registry::{RegistryError, SourceId, SourceRegistry};
pub use source::{
    sample, FnSource, FramePayload, SampleError, Snapshot, Source, SourceDescriptor, SourceError,
};

use crate::scalar::Scalar;
use thiserror::Error;

/// Guard (ghost) halo width in cells; enough for trilinear interpolation across brick borders.
pub const GUARD_WIDTH: usize = 1;

/// Value of a source at one grid node. Components beyond `dim` are kept at zero and never read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldVector<S> {
    dim: u8,
    components: [S; 4],
}

impl<S: Scalar> FieldVector<S> {
    /// Builds a vector from 1 to 4 components.
    pub fn new(components: &[S]) -> Self {
        assert!(
            (1..=4).contains(&components.len()),
            "feature dimension must be 1..=4, got {}",
            components.len()
        );
        let mut c = [S::zero(); 4];
        c[..components.len()].copy_from_slice(components);
        Self {
            dim: components.len() as u8,
            components: c,
        }
    }

    pub fn scalar(v: S) -> Self {
        Self::new(&[v])
    }

    /// All `dim` components set to `v`.
    pub fn splat(dim: usize, v: S) -> Self {
        assert!((1..=4).contains(&dim), "feature dimension must be 1..=4");
        let mut c = [S::zero(); 4];
        c[..dim].iter_mut().for_each(|x| *x = v);
        Self {
            dim: dim as u8,
            components: c,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn as_slice(&self) -> &[S] {
        &self.components[..self.dim as usize]
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.components[..self.dim as usize]
    }

    /// Componentwise linear blend `self * (1 - w) + other * w`; both must share a dimension.
    #[inline]
    pub(crate) fn lerp(&self, other: &Self, w: S) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for k in 0..self.dim as usize {
            out.components[k] = self.components[k] + (other.components[k] - self.components[k]) * w;
        }
        out
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VolumeError {
    #[error("volume size must be positive on every axis, got {0:?}")]
    EmptySize([usize; 3]),
    #[error("decomposition must be positive on every axis, got {0:?}")]
    EmptyDecomposition([usize; 3]),
    #[error("size {size} on axis {axis} is not divisible by {parts} ranks")]
    NotDivisible { axis: usize, size: usize, parts: usize },
    #[error("rank {rank} out of range for {count} ranks")]
    RankOutOfRange { rank: usize, count: usize },
}

/// Cuboid global volume split into equal bricks, one per rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlobalVolume {
    size: [usize; 3],
    decomposition: [usize; 3],
}

impl GlobalVolume {
    pub fn new(size: [usize; 3], decomposition: [usize; 3]) -> Result<Self, VolumeError> {
        if size.contains(&0) {
            return Err(VolumeError::EmptySize(size));
        }
        if decomposition.contains(&0) {
            return Err(VolumeError::EmptyDecomposition(decomposition));
        }
        for axis in 0..3 {
            if !size[axis].is_multiple_of(decomposition[axis]) {
                return Err(VolumeError::NotDivisible {
                    axis,
                    size: size[axis],
                    parts: decomposition[axis],
                });
            }
        }
        Ok(Self {
            size,
            decomposition,
        })
    }

    pub fn size(&self) -> [usize; 3] {
        self.size
    }

    pub fn decomposition(&self) -> [usize; 3] {
        self.decomposition
    }

    pub fn rank_count(&self) -> usize {
        self.decomposition.iter().product()
    }

    pub fn brick_size(&self) -> [usize; 3] {
        [0, 1, 2].map(|k| self.size[k] / self.decomposition[k])
    }

    /// Brick coordinates of a rank; ranks are numbered x fastest.
    pub fn brick_coords(&self, rank: usize) -> [usize; 3] {
        let [dx, dy, _] = self.decomposition;
        [rank % dx, (rank / dx) % dy, rank / (dx * dy)]
    }

    pub fn rank_of(&self, coords: [usize; 3]) -> usize {
        let [dx, dy, _] = self.decomposition;
        coords[0] + dx * (coords[1] + dy * coords[2])
    }

    pub fn local_domain(&self, rank: usize) -> Result<LocalDomain, VolumeError> {
        if rank >= self.rank_count() {
            return Err(VolumeError::RankOutOfRange {
                rank,
                count: self.rank_count(),
            });
        }
        let brick = self.brick_size();
        let c = self.brick_coords(rank);
        Ok(LocalDomain {
            offset: [0, 1, 2].map(|k| c[k] * brick[k]),
            size: brick,
            guard_width: GUARD_WIDTH,
        })
    }

    pub fn domains(&self) -> impl Iterator<Item = LocalDomain> + '_ {
        (0..self.rank_count()).map(|r| self.local_domain(r).expect("rank in range"))
    }

    /// Whether a continuous global position lies in `[0, size)` on every axis.
    pub fn contains_position<S: Scalar>(&self, p: [S; 3]) -> bool {
        (0..3).all(|k| p[k] >= S::zero() && p[k] < S::from_usize(self.size[k]).unwrap())
    }
}

/// One rank's disjoint brick of the global volume plus its guard halo.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalDomain {
    pub offset: [usize; 3],
    pub size: [usize; 3],
    pub guard_width: usize,
}

impl LocalDomain {
    /// Whole-volume domain for single-rank use.
    pub fn whole(size: [usize; 3]) -> Self {
        Self {
            offset: [0; 3],
            size,
            guard_width: GUARD_WIDTH,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.size.iter().product()
    }

    /// Continuous-position membership in the owned half-open box `[offset, offset + size)`.
    #[inline]
    pub fn owns_position<S: Scalar>(&self, p: [S; 3]) -> bool {
        (0..3).all(|k| {
            let lo = S::from_usize(self.offset[k]).unwrap();
            let hi = S::from_usize(self.offset[k] + self.size[k]).unwrap();
            p[k] >= lo && p[k] < hi
        })
    }

    /// Whether a global integer cell index falls in the owned box.
    pub fn owns_cell(&self, global: [i64; 3]) -> bool {
        (0..3).all(|k| {
            let lo = self.offset[k] as i64;
            global[k] >= lo && global[k] < lo + self.size[k] as i64
        })
    }

    /// Half-open local index range per axis, including the guard when `with_guard`.
    pub fn index_range(&self, with_guard: bool) -> [(i64, i64); 3] {
        let g = if with_guard { self.guard_width as i64 } else { 0 };
        [0, 1, 2].map(|k| (-g, self.size[k] as i64 + g))
    }
}
