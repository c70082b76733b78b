use crate::image::LocalImage;
use crate::protocol::{ImageEncoding, ImagePayload};
use crate::scalar::Scalar;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("base64: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("png: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("png: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("expected {expected} pixel bytes, found {found}")]
    Length { expected: usize, found: usize },
    #[error("unsupported png layout {0:?}/{1:?}")]
    PngLayout(png::ColorType, png::BitDepth),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Length of the base64 text for `bytes` input bytes.
pub fn base64_len(bytes: usize) -> usize {
    4 * bytes.div_ceil(3)
}

/// Converts a premultiplied image in [0, 1] to 8-bit RGBA.
///
/// `quality` (1–100) sets the number of levels per channel; 100 keeps full 8-bit
/// precision, lower values re-quantize to fewer levels before packing.
pub fn to_rgba8<S: Scalar>(image: &LocalImage<S>, quality: u8) -> Vec<u8> {
    let q = quality.clamp(1, 100) as u32;
    let levels = if q >= 100 { 256 } else { 2 + 254 * q / 100 };
    let top = (levels - 1) as f64;
    let mut out = Vec::with_capacity(image.pixel_count() * 4);
    for px in &image.pixels {
        for c in px.0 {
            let v = c.as_f64();
            let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            let level = (v * top).round();
            out.push((level * 255.0 / top).round() as u8);
        }
    }
    out
}

fn png_bytes(width: usize, height: usize, rgba: &[u8]) -> Result<Vec<u8>, EncodeError> {
    let mut buf = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut buf, width as u32, height as u32);
        encoder.set_color(png::ColorType::Rgba);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(rgba)?;
    }
    Ok(buf)
}

/// Encodes the frame and wraps it in base64.
pub fn encode_frame<S: Scalar>(
    image: &LocalImage<S>,
    encoding: ImageEncoding,
    quality: u8,
) -> Result<ImagePayload, EncodeError> {
    let rgba = to_rgba8(image, quality);
    let bytes = match encoding {
        ImageEncoding::RawRgba8 => rgba,
        ImageEncoding::Png => png_bytes(image.width, image.height, &rgba)?,
    };
    Ok(ImagePayload {
        width: image.width,
        height: image.height,
        encoding,
        quality: quality.clamp(1, 100),
        data: BASE64.encode(bytes),
    })
}

/// Recovers the 8-bit RGBA pixels of an encoded frame.
pub fn decode_frame(payload: &ImagePayload) -> Result<Vec<u8>, EncodeError> {
    let bytes = BASE64.decode(payload.data.as_bytes())?;
    let expected = payload.width * payload.height * 4;
    let rgba = match payload.encoding {
        ImageEncoding::RawRgba8 => bytes,
        ImageEncoding::Png => {
            let decoder = png::Decoder::new(bytes.as_slice());
            let mut reader = decoder.read_info()?;
            let mut buf = vec![0; reader.output_buffer_size()];
            let info = reader.next_frame(&mut buf)?;
            if info.color_type != png::ColorType::Rgba || info.bit_depth != png::BitDepth::Eight {
                return Err(EncodeError::PngLayout(info.color_type, info.bit_depth));
            }
            buf.truncate(info.buffer_size());
            buf
        }
    };
    if rgba.len() != expected {
        return Err(EncodeError::Length {
            expected,
            found: rgba.len(),
        });
    }
    Ok(rgba)
}

/// Writes 8-bit RGBA pixels as a PNG file.
pub fn write_png(path: &Path, width: usize, height: usize, rgba: &[u8]) -> Result<(), EncodeError> {
    let bytes = png_bytes(width, height, rgba)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}
