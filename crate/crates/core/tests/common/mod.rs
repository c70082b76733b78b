#![allow(dead_code)]

use insitu_core::composite::{composite_sequential, visibility_order};
use insitu_core::field::{FieldVector, FnSource, FramePayload, GlobalVolume, LocalDomain, SourceDescriptor, SourceRegistry};
use insitu_core::functor::{parse_chain, FunctorRegistry, DEFAULT_MAX_CHAIN_LENGTH};
use insitu_core::image::LocalImage;
use insitu_core::render::{render_local, Camera, RenderMode, RenderScene, RenderSettings, SourceStyle, TransferFunction};
use insitu_core::Scalar;

pub type Field = fn([f64; 3]) -> [f64; 4];

/// Smooth blob field peaking near the volume center (scalar in component 0).
pub fn blobs(p: [f64; 3]) -> [f64; 4] {
    let g = |c: [f64; 3], w: f64| {
        let d2: f64 = (0..3).map(|k| (p[k] - c[k]).powi(2)).sum();
        (-d2 / (w * w)).exp()
    };
    [g([6.0, 7.0, 8.0], 4.0) + 0.6 * g([11.0, 10.0, 6.0], 3.0), 0.0, 0.0, 0.0]
}

/// Swirling vector field.
pub fn swirl(p: [f64; 3]) -> [f64; 4] {
    [
        (0.3 * p[1]).sin(),
        (0.25 * p[2]).cos() * 0.5,
        0.1 * p[0] - 0.4,
        0.0,
    ]
}

/// Source reading the analytic field at global index `offset + local`.
pub fn analytic<S: Scalar>(name: &str, dim: usize, guard: bool, domain: LocalDomain, f: Field) -> FnSource<S> {
    FnSource::new(SourceDescriptor::new(name, dim).with_guard(guard), move |idx| {
        let g = [0, 1, 2].map(|k| (idx[k] + domain.offset[k] as i64) as f64);
        let v = f(g);
        let comps: Vec<S> = v[..dim].iter().map(|&x| S::lit(x)).collect();
        FieldVector::new(&comps)
    })
}

pub fn registry_for<S: Scalar>(domain: LocalDomain) -> SourceRegistry<S> {
    let mut reg = SourceRegistry::new();
    reg.register(analytic::<S>("blobs", 1, true, domain, blobs)).unwrap();
    reg.register(analytic::<S>("swirl", 3, true, domain, swirl)).unwrap();
    reg
}

pub fn style<S: Scalar>(chain: &str, dim: usize, points: &[(f64, [f64; 4])], min: f64, max: f64) -> SourceStyle<S> {
    let functors = FunctorRegistry::<S>::with_builtins();
    let limits = functors.limits(DEFAULT_MAX_CHAIN_LENGTH);
    SourceStyle {
        chain: parse_chain(chain, &functors, &limits, dim).unwrap(),
        transfer: TransferFunction::from_points(points, min, max).unwrap(),
        mode: RenderMode::Volume,
        iso_threshold: S::lit(0.5),
    }
}

pub fn oracle_scene<S: Scalar>(camera: Camera) -> RenderScene<S> {
    RenderScene {
        camera,
        styles: vec![
            style("", 1, &[(0.0, [0.0, 0.0, 0.2, 0.0]), (0.5, [0.2, 0.8, 0.3, 0.08]), (1.0, [1.0, 0.9, 0.1, 0.3])], 0.0, 1.0),
            style("length", 3, &[(0.0, [0.0; 4]), (1.0, [0.8, 0.2, 0.9, 0.05])], 0.0, 1.5),
        ],
        settings: RenderSettings {
            active: vec![0, 1],
            interpolation: true,
            step_length: S::lit(0.5),
            early_termination_alpha: S::one(),
        },
        clip_planes: Vec::new(),
    }
}

pub fn camera(azimuth: f64, elevation: f64) -> Camera {
    Camera::orbit([8.0, 8.0, 8.0], 34.0, azimuth, elevation, 40, 30)
}

/// Renders every brick separately and folds them in visibility order.
pub fn render_split<S: Scalar>(
    scene: &RenderScene<S>,
    size: [usize; 3],
    decomposition: [usize; 3],
    registry: impl Fn(LocalDomain) -> SourceRegistry<S>,
) -> LocalImage<S> {
    let volume = GlobalVolume::new(size, decomposition).unwrap();
    let images: Vec<LocalImage<S>> = volume
        .domains()
        .map(|domain| {
            let mut reg = registry(domain);
            reg.update_sources(&scene.settings.active, &FramePayload::default(), &domain)
                .unwrap();
            render_local(scene, &reg, domain, volume).unwrap().0
        })
        .collect();
    let order = visibility_order(&volume, &scene.camera);
    composite_sequential(&images, order.ranks()).unwrap()
}
