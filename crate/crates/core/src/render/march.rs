use super::geometry::{dot, normalize, ray_box_intersection, scale, Ray, Vec3};
use super::{ClipPlane, RenderMode, RenderScene, RenderSettings, SourceStyle};
use crate::composite::over;
use crate::field::{FieldVector, GlobalVolume, LocalDomain, Source, SourceDescriptor, SourceRegistry};
use crate::image::{LocalImage, Rgba};
use crate::scalar::Scalar;
use rayon::prelude::*;
use thiserror::Error;

/// Fraction of light that reaches iso surfaces regardless of orientation.
const AMBIENT: f64 = 0.25;

/// Slack applied to the brick when culling rays; membership of each station is exact.
const CULL_EPSILON: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("active source {0} is not registered")]
    UnknownSource(usize),
    #[error("no style for source {0}")]
    MissingStyle(usize),
    #[error("functor chain for source '{name}' expects dimension {chain}, source has {source_dim}")]
    ChainDim {
        name: String,
        chain: usize,
        source_dim: usize,
    },
    #[error("step length must be positive")]
    StepLength,
    #[error(transparent)]
    Camera(#[from] super::CameraError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderStats {
    /// Ray stations evaluated inside this brick.
    pub stations: u64,
    /// Pixels whose ray intersects the brick.
    pub rays: u64,
}

/// A source prepared for marching: accessor, descriptor and style.
pub struct ActiveSource<'a, S: Scalar> {
    pub accessor: &'a dyn Source<S>,
    pub descriptor: &'a SourceDescriptor,
    pub style: &'a SourceStyle<S>,
}

/// Read-only state shared by all rays of one brick.
pub struct MarchContext<'a, S: Scalar> {
    pub sources: Vec<ActiveSource<'a, S>>,
    pub domain: LocalDomain,
    pub volume: GlobalVolume,
    pub settings: &'a RenderSettings<S>,
    pub clips: &'a [ClipPlane<S>],
}

impl<'a, S: Scalar> MarchContext<'a, S> {
    pub fn new(
        scene: &'a RenderScene<S>,
        registry: &'a SourceRegistry<S>,
        domain: LocalDomain,
        volume: GlobalVolume,
    ) -> Result<Self, RenderError> {
        // Also rejects NaN.
        if scene.settings.step_length.partial_cmp(&S::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(RenderError::StepLength);
        }
        let mut active = scene.settings.active.clone();
        active.sort_unstable();
        active.dedup();
        let sources = active
            .into_iter()
            .map(|id| {
                let descriptor = registry.descriptor(id).ok_or(RenderError::UnknownSource(id))?;
                let accessor = registry.accessor(id).map_err(|_| RenderError::UnknownSource(id))?;
                let style = scene.styles.get(id).ok_or(RenderError::MissingStyle(id))?;
                if style.chain.input_dim() != descriptor.feature_dim {
                    return Err(RenderError::ChainDim {
                        name: descriptor.name.clone(),
                        chain: style.chain.input_dim(),
                        source_dim: descriptor.feature_dim,
                    });
                }
                Ok(ActiveSource {
                    accessor,
                    descriptor,
                    style,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            sources,
            domain,
            volume,
            settings: &scene.settings,
            clips: &scene.clip_planes,
        })
    }

    fn guard_reach(&self, source: &ActiveSource<'_, S>) -> i64 {
        if source.descriptor.has_guard && self.settings.interpolation {
            self.domain.guard_width as i64
        } else {
            0
        }
    }

    /// Node read honoring the border rules, clamped into the reachable range.
    #[inline]
    fn fetch(&self, source: &ActiveSource<'_, S>, global: [i64; 3]) -> FieldVector<S> {
        let reach = self.guard_reach(source);
        let local = [0, 1, 2].map(|k| {
            (global[k] - self.domain.offset[k] as i64).clamp(-reach, self.domain.size[k] as i64 - 1 + reach)
        });
        source.accessor.get(local)
    }

    /// Field value at a continuous global position; node `i` sits at position `i`.
    fn value_at(&self, source: &ActiveSource<'_, S>, p: Vec3<S>) -> FieldVector<S> {
        let base = p.map(|c| c.floor());
        let i0 = base.map(|c| c.to_i64().unwrap_or(0));
        if !self.settings.interpolation {
            return self.fetch(source, i0);
        }
        let f = [0, 1, 2].map(|k| p[k] - base[k]);
        let i1 = [0, 1, 2].map(|k| if f[k] > S::zero() { i0[k] + 1 } else { i0[k] });
        let corner = |x: i64, y: i64, z: i64| self.fetch(source, [x, y, z]);
        let c00 = corner(i0[0], i0[1], i0[2]).lerp(&corner(i1[0], i0[1], i0[2]), f[0]);
        let c10 = corner(i0[0], i1[1], i0[2]).lerp(&corner(i1[0], i1[1], i0[2]), f[0]);
        let c01 = corner(i0[0], i0[1], i1[2]).lerp(&corner(i1[0], i0[1], i1[2]), f[0]);
        let c11 = corner(i0[0], i1[1], i1[2]).lerp(&corner(i1[0], i1[1], i1[2]), f[0]);
        let c0 = c00.lerp(&c10, f[1]);
        let c1 = c01.lerp(&c11, f[1]);
        c0.lerp(&c1, f[2])
    }

    #[inline]
    fn scalar_at(&self, source: &ActiveSource<'_, S>, p: Vec3<S>) -> S {
        source.style.chain.eval_scalar(&self.value_at(source, p))
    }

    /// A station position any decomposition would evaluate: inside the volume and not clipped.
    #[inline]
    fn is_station(&self, p: Vec3<S>) -> bool {
        self.volume.contains_position(p) && self.clips.iter().all(|c| c.keeps(p))
    }

    #[inline]
    fn owns_station(&self, p: Vec3<S>) -> bool {
        self.domain.owns_position(p) && self.clips.iter().all(|c| c.keeps(p))
    }

    /// Continuous box in which interpolated samples stay inside the reachable nodes.
    fn reachable_box(&self, source: &ActiveSource<'_, S>) -> (Vec3<S>, Vec3<S>) {
        let reach = self.guard_reach(source);
        let lo = [0, 1, 2].map(|k| S::from_i64(self.domain.offset[k] as i64 - reach).unwrap());
        let hi = [0, 1, 2]
            .map(|k| S::from_i64((self.domain.offset[k] + self.domain.size[k]) as i64 - 1 + reach).unwrap());
        (lo, hi)
    }
}

/// Normal from central differences of the chained scalar, one cell apart,
/// shifted inward where the stencil would leave the reachable nodes.
/// A vanishing gradient yields `-view_dir`.
pub fn gradient_normal<S: Scalar>(
    ctx: &MarchContext<'_, S>,
    source: &ActiveSource<'_, S>,
    position: Vec3<S>,
    view_dir: Vec3<S>,
) -> Vec3<S> {
    let (lo, hi) = ctx.reachable_box(source);
    let mut grad = [S::zero(); 3];
    for k in 0..3 {
        let mut plus = position;
        let mut minus = position;
        plus[k] = (position[k] + S::one()).min(hi[k]);
        minus[k] = (position[k] - S::one()).max(lo[k]);
        let span = plus[k] - minus[k];
        if span > S::zero() {
            grad[k] = (ctx.scalar_at(source, plus) - ctx.scalar_at(source, minus)) / span;
        }
    }
    normalize(grad).unwrap_or_else(|| scale(view_dir, -S::one()))
}

/// Inclusive range of global station indices worth testing for a ray interval.
fn station_range<S: Scalar>(interval: (S, S), step: S) -> (i64, i64) {
    let first = ((interval.0 / step).ceil().to_i64().unwrap_or(0) - 1).max(0);
    let last = (interval.1 / step).floor().to_i64().unwrap_or(-1) + 1;
    (first, last)
}

/// Station indices `k` (positions `origin + k * step * dir`) owned by this brick.
pub fn owned_stations<S: Scalar>(ctx: &MarchContext<'_, S>, ray: &Ray<S>, interval: (S, S)) -> Vec<i64> {
    let step = ctx.settings.step_length;
    let (first, last) = station_range(interval, step);
    (first..=last)
        .filter(|&k| ctx.owns_station(ray.at(S::from_i64(k).unwrap() * step)))
        .collect()
}

/// Front-to-back accumulation along one ray, over the brick's stations within `interval`.
///
/// Stations sit at global multiples of the step length measured from the ray origin,
/// so every decomposition evaluates the same world positions.
pub fn march_ray<S: Scalar>(ctx: &MarchContext<'_, S>, ray: &Ray<S>, interval: (S, S)) -> (Rgba<S>, u64) {
    let step = ctx.settings.step_length;
    let (first, last) = station_range(interval, step);
    let mut acc = Rgba::transparent();
    let mut stations = 0u64;
    // Previous station's chained scalar per iso source, valid only for index k - 1.
    let mut prev: Vec<Option<(i64, S)>> = vec![None; ctx.sources.len()];

    for k in first..=last {
        let p = ray.at(S::from_i64(k).unwrap() * step);
        if !ctx.owns_station(p) {
            continue;
        }
        stations += 1;
        let mut sample = Rgba::transparent();
        let mut hit = false;
        for (slot, source) in ctx.sources.iter().enumerate() {
            let value = ctx.scalar_at(source, p);
            match source.style.mode {
                RenderMode::Volume => {
                    let c = Rgba::from_straight(source.style.transfer.classify(value));
                    sample = over(sample, c);
                }
                RenderMode::Iso => {
                    let before = match prev[slot] {
                        Some((j, v)) if j == k - 1 => Some(v),
                        _ => {
                            let q = ray.at(S::from_i64(k - 1).unwrap() * step);
                            (k > 0 && ctx.is_station(q)).then(|| ctx.scalar_at(source, q))
                        }
                    };
                    prev[slot] = Some((k, value));
                    let Some(before) = before else { continue };
                    let iso = source.style.iso_threshold;
                    let (a, b) = (before - iso, value - iso);
                    if a.is_nan() || b.is_nan() || (a < S::zero()) == (b < S::zero()) {
                        continue;
                    }
                    let frac = if b != a { a / (a - b) } else { S::zero() };
                    let t_hit = (S::from_i64(k - 1).unwrap() + frac) * step;
                    let p_hit = ray.at(t_hit);
                    let n = gradient_normal(ctx, source, p_hit, ray.dir);
                    let lambert = dot(n, ray.dir).abs();
                    let light = S::lit(AMBIENT) + (S::one() - S::lit(AMBIENT)) * lambert;
                    let base = source.style.transfer.classify(iso);
                    let shaded = Rgba::new(base[0] * light, base[1] * light, base[2] * light, S::one());
                    sample = over(sample, shaded);
                    hit = true;
                }
            }
        }
        acc = over(acc, sample);
        if hit || acc.alpha() >= ctx.settings.early_termination_alpha {
            break;
        }
    }
    (acc, stations)
}

/// Renders the local brick for the scene's camera.
///
/// Pixels whose ray misses the brick stay transparent; the others are marched over
/// the active sources only.
pub fn render_local<S: Scalar>(
    scene: &RenderScene<S>,
    registry: &SourceRegistry<S>,
    domain: LocalDomain,
    volume: GlobalVolume,
) -> Result<(LocalImage<S>, RenderStats), RenderError> {
    scene.camera.validate()?;
    let ctx = MarchContext::new(scene, registry, domain, volume)?;
    let rays = scene.camera.rays::<S>();
    let (w, h) = (scene.camera.width, scene.camera.height);
    let mut image = LocalImage::transparent(w, h);
    if ctx.sources.is_empty() {
        return Ok((image, RenderStats::default()));
    }
    let eps = S::lit(CULL_EPSILON);
    let lo = domain.offset.map(|o| S::from_usize(o).unwrap() - eps);
    let hi = [0, 1, 2].map(|k| S::from_usize(domain.offset[k] + domain.size[k]).unwrap() + eps);

    let stats = image
        .pixels
        .par_chunks_mut(w)
        .enumerate()
        .map(|(py, row)| {
            let mut stats = RenderStats::default();
            for (px, pixel) in row.iter_mut().enumerate() {
                let ray = rays.ray(px, py);
                let Some(interval) = ray_box_intersection(&ray, lo, hi, ctx.clips) else {
                    continue;
                };
                let (color, stations) = march_ray(&ctx, &ray, interval);
                *pixel = color;
                stats.rays += 1;
                stats.stations += stations;
            }
            stats
        })
        .reduce(RenderStats::default, |a, b| RenderStats {
            stations: a.stations + b.stations,
            rays: a.rays + b.rays,
        });
    Ok((image, stats))
}
