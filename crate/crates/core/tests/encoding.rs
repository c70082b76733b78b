use insitu_core::image::{LocalImage, Rgba};
use insitu_core::protocol::ImageEncoding;
use insitu_core::runtime::{base64_len, decode_frame, encode_frame, to_rgba8};
use proptest::prelude::*;

fn image(w: usize, h: usize, seed: u32) -> LocalImage<f32> {
    let pixels = (0..w * h)
        .map(|i| {
            let v = ((i as u32).wrapping_mul(2654435761).wrapping_add(seed) % 1000) as f32 / 999.0;
            Rgba::from_straight([v, 1.0 - v, 0.5 * v, v])
        })
        .collect();
    LocalImage {
        width: w,
        height: h,
        pixels,
        order_key: 0,
    }
}

#[test]
fn overhead_is_one_third_on_divisible_payloads() {
    // 3 x 1 pixels = 12 bytes, divisible by 3.
    for (w, h) in [(3, 1), (480, 270), (6, 5)] {
        let img = image(w, h, 1);
        let payload = encode_frame(&img, ImageEncoding::RawRgba8, 100).unwrap();
        let bytes = w * h * 4;
        assert_eq!(bytes % 3, 0);
        let overhead = payload.data.len() as f64 / bytes as f64 - 1.0;
        assert!((overhead - 1.0 / 3.0).abs() < 1e-12, "{overhead}");
    }
}

proptest! {
    #[test]
    fn encoded_length_follows_base64_law(w in 1usize..40, h in 1usize..40, seed in any::<u32>(), png in any::<bool>()) {
        let img = image(w, h, seed);
        let enc = if png { ImageEncoding::Png } else { ImageEncoding::RawRgba8 };
        let payload = encode_frame(&img, enc, 100).unwrap();
        use base64::Engine;
        let raw = base64::engine::general_purpose::STANDARD.decode(&payload.data).unwrap();
        prop_assert_eq!(payload.data.len(), 4 * raw.len().div_ceil(3));
        prop_assert_eq!(payload.data.len(), base64_len(raw.len()));
        if !png {
            prop_assert_eq!(raw.len(), w * h * 4);
        }
    }

    #[test]
    fn decode_of_encode_is_the_8bit_image(w in 1usize..24, h in 1usize..24, seed in any::<u32>(), q in 1u8..=100) {
        let img = image(w, h, seed);
        let expected = to_rgba8(&img, q);
        for enc in [ImageEncoding::RawRgba8, ImageEncoding::Png] {
            let payload = encode_frame(&img, enc, q).unwrap();
            prop_assert_eq!(&decode_frame(&payload).unwrap(), &expected);
        }
    }
}
