use super::geometry::{cast3, cross, normalize, Ray};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("view direction is degenerate")]
    DegenerateView,
    #[error("up vector is parallel to the view direction")]
    UpParallel,
    #[error("vertical field of view {0} outside (0, pi)")]
    Fov(f64),
    #[error("image size must be positive")]
    EmptyImage,
}

/// Perspective pinhole camera in global cell units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    /// Radians.
    pub vertical_fov: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn validate(&self) -> Result<(), CameraError> {
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::EmptyImage);
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < std::f64::consts::PI) {
            return Err(CameraError::Fov(self.vertical_fov));
        }
        self.basis().map(|_| ())
    }

    /// Forward, right and true-up unit vectors.
    fn basis(&self) -> Result<[[f64; 3]; 3], CameraError> {
        let forward = normalize([
            self.look_at[0] - self.position[0],
            self.look_at[1] - self.position[1],
            self.look_at[2] - self.position[2],
        ])
        .ok_or(CameraError::DegenerateView)?;
        let right = cross(forward, self.up);
        if crate::render::geometry::norm(right) < 1e-9 * crate::render::geometry::norm(self.up).max(1.0) {
            return Err(CameraError::UpParallel);
        }
        let right = normalize(right).ok_or(CameraError::UpParallel)?;
        let up = cross(right, forward);
        Ok([forward, right, up])
    }

    /// Camera orbiting `center` at `distance`, given azimuth/elevation in radians.
    pub fn orbit(center: [f64; 3], distance: f64, azimuth: f64, elevation: f64, width: usize, height: usize) -> Self {
        let dir = [
            elevation.cos() * azimuth.cos(),
            elevation.sin(),
            elevation.cos() * azimuth.sin(),
        ];
        Self {
            position: [0, 1, 2].map(|k| center[k] + distance * dir[k]),
            look_at: center,
            up: [0.0, 1.0, 0.0],
            vertical_fov: 45f64.to_radians(),
            width,
            height,
        }
    }

    /// Precomputes per-pixel rays. Panics on an invalid camera; call `validate` first.
    pub fn rays<S: Scalar>(&self) -> RayGenerator<S> {
        let [forward, right, up] = self.basis().expect("valid camera");
        let tan_half = (self.vertical_fov * 0.5).tan();
        RayGenerator {
            origin: cast3(self.position),
            forward,
            right,
            up,
            tan_half,
            aspect: self.width as f64 / self.height as f64,
            width: self.width,
            height: self.height,
            _scalar: std::marker::PhantomData,
        }
    }
}

/// Ray through the center of each pixel.
pub struct RayGenerator<S> {
    origin: [S; 3],
    forward: [f64; 3],
    right: [f64; 3],
    up: [f64; 3],
    tan_half: f64,
    aspect: f64,
    width: usize,
    height: usize,
    _scalar: std::marker::PhantomData<S>,
}

impl<S: Scalar> RayGenerator<S> {
    pub fn ray(&self, px: usize, py: usize) -> Ray<S> {
        let sx = (2.0 * (px as f64 + 0.5) / self.width as f64 - 1.0) * self.aspect * self.tan_half;
        let sy = (1.0 - 2.0 * (py as f64 + 0.5) / self.height as f64) * self.tan_half;
        let d = [0, 1, 2].map(|k| self.forward[k] + self.right[k] * sx + self.up[k] * sy);
        Ray {
            origin: self.origin,
            dir: cast3(normalize(d).expect("non-zero pixel direction")),
        }
    }
}
