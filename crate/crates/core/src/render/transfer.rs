use crate::scalar::Scalar;
use thiserror::Error;

pub const LUT_SIZE: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("value range must satisfy min < max, got ({0}, {1})")]
    Range(f64, f64),
    #[error("lookup table needs {LUT_SIZE} entries, got {0}")]
    LutSize(usize),
    #[error("lookup table entry {0} is not finite or outside [0, 1]")]
    LutEntry(usize),
    #[error("transfer function needs at least one control point")]
    NoPoints,
}

/// Lookup table from normalized scalar to straight (non-premultiplied) RGBA,
/// paired with the value range it normalizes over.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction<S> {
    lut: Vec<[S; 4]>,
    min: S,
    max: S,
}

impl<S: Scalar> TransferFunction<S> {
    pub fn new(lut: Vec<[S; 4]>, min: S, max: S) -> Result<Self, TransferError> {
        if min.partial_cmp(&max) != Some(std::cmp::Ordering::Less) || !min.is_finite() || !max.is_finite() {
            return Err(TransferError::Range(min.as_f64(), max.as_f64()));
        }
        if lut.len() != LUT_SIZE {
            return Err(TransferError::LutSize(lut.len()));
        }
        if let Some(i) = lut
            .iter()
            .position(|e| e.iter().any(|c| !c.is_finite() || *c < S::zero() || *c > S::one()))
        {
            return Err(TransferError::LutEntry(i));
        }
        Ok(Self { lut, min, max })
    }

    /// Builds the table by linear interpolation between control points `(t, rgba)`,
    /// `t` in `[0, 1]`. Points are sorted by `t`; the ends are held constant.
    pub fn from_points(points: &[(f64, [f64; 4])], min: f64, max: f64) -> Result<Self, TransferError> {
        if points.is_empty() {
            return Err(TransferError::NoPoints);
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let lut = (0..LUT_SIZE)
            .map(|i| {
                let t = i as f64 / (LUT_SIZE - 1) as f64;
                let c = match pts.iter().position(|p| p.0 >= t) {
                    None => pts[pts.len() - 1].1,
                    Some(0) => pts[0].1,
                    Some(j) => {
                        let (a, b) = (pts[j - 1], pts[j]);
                        let w = if b.0 > a.0 { (t - a.0) / (b.0 - a.0) } else { 1.0 };
                        [0, 1, 2, 3].map(|k| a.1[k] + (b.1[k] - a.1[k]) * w)
                    }
                };
                c.map(S::lit)
            })
            .collect();
        Self::new(lut, S::lit(min), S::lit(max))
    }

    pub fn range(&self) -> (S, S) {
        (self.min, self.max)
    }

    pub fn lut(&self) -> &[[S; 4]] {
        &self.lut
    }

    /// Straight RGBA for a scalar. NaN classifies as fully transparent black.
    #[inline]
    pub fn classify(&self, value: S) -> [S; 4] {
        if value.is_nan() {
            return [S::zero(); 4];
        }
        let t = ((value - self.min) / (self.max - self.min)).max(S::zero()).min(S::one());
        let x = t * S::lit((LUT_SIZE - 1) as f64);
        let i = x.floor().to_usize().unwrap_or(0).min(LUT_SIZE - 2);
        let w = x - S::from_usize(i).unwrap();
        let (a, b) = (self.lut[i], self.lut[i + 1]);
        [0, 1, 2, 3].map(|k| a[k] + (b[k] - a[k]) * w)
    }
}
