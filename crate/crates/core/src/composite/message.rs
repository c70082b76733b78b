use crate::image::Rgba;
use crate::scalar::Scalar;
use thiserror::Error;

/// `round: u32 | sender: u32 | offset: u64 | length: u64`, little-endian.
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MessageError {
    #[error("message of {0} bytes is shorter than the header")]
    Truncated(usize),
    #[error("payload of {got} bytes does not hold {length} pixels")]
    PayloadLength { length: u64, got: usize },
}

/// One contiguous span of premultiplied pixels exchanged during compositing.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeMessage<S> {
    pub round: u32,
    pub sender: u32,
    pub offset: u64,
    pub pixels: Vec<Rgba<S>>,
}

impl<S: Scalar> CompositeMessage<S> {
    pub fn len(&self) -> u64 {
        self.pixels.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.pixels.len() * 4 * S::BYTES);
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&self.sender.to_le_bytes());
        out.extend_from_slice(&self.offset.to_le_bytes());
        out.extend_from_slice(&self.len().to_le_bytes());
        for px in &self.pixels {
            for c in px.0 {
                c.write_le(&mut out);
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, MessageError> {
        if bytes.len() < HEADER_LEN {
            return Err(MessageError::Truncated(bytes.len()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let (round, sender, offset, length) = (u32_at(0), u32_at(4), u64_at(8), u64_at(16));
        let payload = &bytes[HEADER_LEN..];
        let px_bytes = 4 * S::BYTES;
        if (payload.len() as u64) != length.saturating_mul(px_bytes as u64) {
            return Err(MessageError::PayloadLength {
                length,
                got: payload.len(),
            });
        }
        let pixels = payload
            .chunks_exact(px_bytes)
            .map(|chunk| {
                Rgba([0, 1, 2, 3].map(|k| S::read_le(&chunk[k * S::BYTES..])))
            })
            .collect();
        Ok(Self {
            round,
            sender,
            offset,
            pixels,
        })
    }
}
