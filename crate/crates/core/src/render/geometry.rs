use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3<S> = [S; 3];

#[inline]
pub fn add<S: Scalar>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub<S: Scalar>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale<S: Scalar>(a: Vec3<S>, s: S) -> Vec3<S> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot<S: Scalar>(a: Vec3<S>, b: Vec3<S>) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<S: Scalar>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm<S: Scalar>(a: Vec3<S>) -> S {
    dot(a, a).sqrt()
}

/// Unit vector along `a`, or `None` for a zero or non-finite vector.
pub fn normalize<S: Scalar>(a: Vec3<S>) -> Option<Vec3<S>> {
    let n = norm(a);
    if n > S::zero() && n.is_finite() {
        Some(scale(a, S::one() / n))
    } else {
        None
    }
}

pub fn cast3<S: Scalar>(a: [f64; 3]) -> Vec3<S> {
    a.map(S::lit)
}

/// Half-line `origin + t * dir`, `t >= 0`, with unit `dir`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<S> {
    pub origin: Vec3<S>,
    pub dir: Vec3<S>,
}

impl<S: Scalar> Ray<S> {
    #[inline]
    pub fn at(&self, t: S) -> Vec3<S> {
        [
            self.origin[0] + self.dir[0] * t,
            self.origin[1] + self.dir[1] * t,
            self.origin[2] + self.dir[2] * t,
        ]
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClipError {
    #[error("clip plane normal must have unit length, |n| = {0}")]
    NotUnit(f64),
}

/// Half-space `dot(p - point, normal) >= 0` that stays visible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipPlane<S> {
    pub point: Vec3<S>,
    pub normal: Vec3<S>,
}

impl<S: Scalar> ClipPlane<S> {
    pub fn new(point: Vec3<S>, normal: Vec3<S>) -> Result<Self, ClipError> {
        let n = norm(normal).as_f64();
        if (n - 1.0).abs() > 1e-6 {
            return Err(ClipError::NotUnit(n));
        }
        Ok(Self { point, normal })
    }

    #[inline]
    pub fn keeps(&self, p: Vec3<S>) -> bool {
        dot(sub(p, self.point), self.normal) >= S::zero()
    }
}

/// Parametric interval `[t_enter, t_exit]` of `ray` inside the box `[lo, hi]`,
/// restricted to `t >= 0` and to the kept side of every clip plane.
pub fn ray_box_intersection<S: Scalar>(
    ray: &Ray<S>,
    lo: Vec3<S>,
    hi: Vec3<S>,
    clips: &[ClipPlane<S>],
) -> Option<(S, S)> {
    let mut t_enter = S::zero();
    let mut t_exit = S::infinity();
    for k in 0..3 {
        let d = ray.dir[k];
        let o = ray.origin[k];
        if d == S::zero() {
            if o < lo[k] || o > hi[k] {
                return None;
            }
            continue;
        }
        let inv = S::one() / d;
        let (mut t0, mut t1) = ((lo[k] - o) * inv, (hi[k] - o) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_enter = t_enter.max(t0);
        t_exit = t_exit.min(t1);
    }
    for plane in clips {
        let c = dot(sub(ray.origin, plane.point), plane.normal);
        let dn = dot(ray.dir, plane.normal);
        if dn == S::zero() {
            if c < S::zero() {
                return None;
            }
            continue;
        }
        let t = -c / dn;
        if dn > S::zero() {
            t_enter = t_enter.max(t);
        } else {
            t_exit = t_exit.min(t);
        }
    }
    (t_enter <= t_exit).then_some((t_enter, t_exit))
}
