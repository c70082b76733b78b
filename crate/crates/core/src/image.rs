use crate::scalar::Scalar;
use thiserror::Error;

/// Premultiplied RGBA pixel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rgba<S>(pub [S; 4]);

impl<S: Scalar> Rgba<S> {
    pub fn transparent() -> Self {
        Self([S::zero(); 4])
    }

    pub fn new(r: S, g: S, b: S, a: S) -> Self {
        Self([r, g, b, a])
    }

    /// Premultiplies a straight (unassociated) color.
    pub fn from_straight(c: [S; 4]) -> Self {
        Self([c[0] * c[3], c[1] * c[3], c[2] * c[3], c[3]])
    }

    #[inline]
    pub fn alpha(&self) -> S {
        self.0[3]
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        (0..4).fold(S::zero(), |m, k| m.max((self.0[k] - other.0[k]).abs()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("image size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("no images to composite")]
    Empty,
}

/// Per-rank partial rendering in premultiplied RGBA, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalImage<S> {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgba<S>>,
    /// Position of the producing brick in the visibility order.
    pub order_key: usize,
}

impl<S: Scalar> LocalImage<S> {
    pub fn transparent(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![Rgba::transparent(); width * height],
            order_key: 0,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Rgba<S> {
        self.pixels[y * self.width + x]
    }

    pub fn same_size(&self, other: &Self) -> Result<(), ImageError> {
        if self.width == other.width && self.height == other.height {
            Ok(())
        } else {
            Err(ImageError::SizeMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ))
        }
    }

    /// Largest per-channel absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<S, ImageError> {
        self.same_size(other)?;
        Ok(self
            .pixels
            .iter()
            .zip(&other.pixels)
            .fold(S::zero(), |m, (a, b)| m.max(a.max_abs_diff(b))))
    }

    /// Size of the image in the raw scalar wire format.
    pub fn byte_size(&self) -> usize {
        self.pixel_count() * 4 * S::BYTES
    }
}
