//! In-situ visualization core.
//!
//! Ranks of a simulation expose their local brick through [`field::Source`]
//! accessors, render it by ray casting ([`render`]), composite the partial images
//! by binary swap ([`composite`]) and hand the final frame from rank 0 to a gateway
//! while the simulation continues ([`runtime`]).
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the precision used by the stock runtime.

pub mod composite;
pub mod field;
pub mod functor;
pub mod image;
pub mod protocol;
pub mod render;
pub mod runtime;
pub mod scalar;
pub mod transport;

pub use scalar::Scalar;

/// Precision of field storage and rendering in the stock runtime.
pub type Real = f32;

pub type FieldVector = field::FieldVector<Real>;
pub type FieldVector64 = field::FieldVector<f64>;
pub type Image = image::LocalImage<Real>;
pub type Image64 = image::LocalImage<f64>;
pub type Pixel = image::Rgba<Real>;
pub type Chain = functor::FunctorChain<Real>;
pub type Functors = functor::FunctorRegistry<Real>;
pub type Registry = field::SourceRegistry<Real>;
pub type Scene = render::RenderScene<Real>;
pub type Transfer = render::TransferFunction<Real>;
