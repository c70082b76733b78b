//! Sort-last compositing of per-rank partial images.

mod message;
mod order;
mod swap;

pub use message::{CompositeMessage, MessageError, HEADER_LEN};
pub use order::{visibility_order, VisibilityOrder};
pub use swap::{binary_swap, direct_send, CompositeError, GATHER_ROUND};

use crate::image::{ImageError, LocalImage, Rgba};
use crate::scalar::Scalar;

/// Premultiplied `front over back`.
#[inline]
pub fn over<S: Scalar>(front: Rgba<S>, back: Rgba<S>) -> Rgba<S> {
    let t = S::one() - front.0[3];
    Rgba([
        front.0[0] + t * back.0[0],
        front.0[1] + t * back.0[1],
        front.0[2] + t * back.0[2],
        front.0[3] + t * back.0[3],
    ])
}

/// Folds `over` front to back, `images[order[0]]` being nearest.
pub fn composite_sequential<S: Scalar>(
    images: &[LocalImage<S>],
    order: &[usize],
) -> Result<LocalImage<S>, ImageError> {
    let first = images.first().ok_or(ImageError::Empty)?;
    for img in images {
        first.same_size(img)?;
    }
    let mut out = LocalImage::transparent(first.width, first.height);
    for &idx in order {
        let img = &images[idx];
        for (dst, src) in out.pixels.iter_mut().zip(&img.pixels) {
            *dst = over(*dst, *src);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(r: f64, g: f64, b: f64, a: f64) -> Rgba<f64> {
        Rgba([r, g, b, a])
    }

    #[test]
    fn opaque_front_hides_back() {
        let f = px(0.2, 0.3, 0.4, 1.0);
        assert_eq!(over(f, px(0.9, 0.9, 0.9, 0.9)), f);
    }

    #[test]
    fn transparent_front_shows_back() {
        let b = px(0.1, 0.0, 0.3, 0.6);
        assert_eq!(over(px(0.0, 0.0, 0.0, 0.0), b), b);
    }

    #[test]
    fn half_red_over_half_blue() {
        let out = over(px(0.5, 0.0, 0.0, 0.5), px(0.0, 0.0, 0.5, 0.5));
        assert_eq!(out, px(0.5, 0.0, 0.25, 0.75));
    }

    fn image(pixels: Vec<Rgba<f64>>) -> LocalImage<f64> {
        LocalImage {
            width: pixels.len(),
            height: 1,
            pixels,
            order_key: 0,
        }
    }

    #[test]
    fn sequential_single_and_transparent() {
        let a = image(vec![px(0.1, 0.2, 0.3, 0.4), px(0.0, 0.0, 0.0, 0.0)]);
        assert_eq!(composite_sequential(std::slice::from_ref(&a), &[0]).unwrap().pixels, a.pixels);
        let clear = LocalImage::transparent(2, 1);
        assert_eq!(
            composite_sequential(&[a.clone(), clear], &[0, 1]).unwrap().pixels,
            a.pixels
        );
    }

    #[test]
    fn sequential_rejects_mismatch() {
        let a = LocalImage::<f32>::transparent(2, 2);
        let b = LocalImage::<f32>::transparent(3, 2);
        assert!(composite_sequential(&[a, b], &[0, 1]).is_err());
        assert_eq!(
            composite_sequential::<f32>(&[], &[]),
            Err(ImageError::Empty)
        );
    }
}
