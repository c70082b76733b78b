use crate::field::GlobalVolume;
use crate::render::Camera;
use serde::{Deserialize, Serialize};

/// Permutation of rank ids, nearest brick first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibilityOrder(pub Vec<usize>);

impl VisibilityOrder {
    pub fn ranks(&self) -> &[usize] {
        &self.0
    }

    /// Position of `rank` in the order.
    pub fn position(&self, rank: usize) -> Option<usize> {
        self.0.iter().position(|&r| r == rank)
    }

    pub fn is_permutation(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        self.0.len() == n
            && self.0.iter().all(|&r| r < n && !std::mem::replace(&mut seen[r], true))
    }
}

/// Nested slab order for a regular decomposition.
///
/// Along each axis a brick's key is the distance from the camera to its slab
/// (zero when the camera is inside the slab). Sorting by the x key, then y, then z,
/// then rank id is a valid near-to-far order for every ray: along any ray each
/// per-axis slab distance is non-decreasing.
pub fn visibility_order(volume: &GlobalVolume, camera: &Camera) -> VisibilityOrder {
    let brick = volume.brick_size();
    let key = |rank: usize| {
        let c = volume.brick_coords(rank);
        let d = [0, 1, 2].map(|k| {
            let lo = (c[k] * brick[k]) as f64;
            let hi = ((c[k] + 1) * brick[k]) as f64;
            (lo - camera.position[k]).max(camera.position[k] - hi).max(0.0)
        });
        (d, rank)
    };
    let mut ranks: Vec<usize> = (0..volume.rank_count()).collect();
    ranks.sort_by(|&a, &b| {
        let (ka, ra) = key(a);
        let (kb, rb) = key(b);
        ka[0]
            .total_cmp(&kb[0])
            .then(ka[1].total_cmp(&kb[1]))
            .then(ka[2].total_cmp(&kb[2]))
            .then(ra.cmp(&rb))
    });
    VisibilityOrder(ranks)
}
