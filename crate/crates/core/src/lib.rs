//! Distributed zero-delay joint source-channel coding of a bivariate Gaussian
//! source over a Gaussian multiple-access channel.
//!
//! Two codes are provided, nested scalar quantization ([`nq`]) and the scalar
//! quantizer linear coder ([`sqlc`]), together with the distortion bound
//! ([`bounds`]), parameter optimization ([`optimize`]) and a Monte Carlo
//! harness ([`montecarlo`]).
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the optimizer and
//! simulation harness use.

// `!(x > 0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
mod conv;
pub mod error;
pub mod export;
pub mod model;
pub mod montecarlo;
pub mod nq;
pub mod optimize;
pub mod quad;
pub mod rng;
pub mod scalar;
pub mod sqlc;

pub use error::{Error, Result};
pub use rng::{RandomStream, CHUNK_LEN};
pub use scalar::Real;

pub type SourceModel = model::SourceModel<f64>;
pub type ChannelModel = model::ChannelModel<f64>;
pub type DistortionReport = model::DistortionReport<f64>;
pub type BoundPoint = bounds::BoundPoint<f64>;
pub type NqParams = nq::NqParams<f64>;
pub type NqTables = nq::NqTables<f64>;

pub type SourceModel32 = model::SourceModel<f32>;
pub type ChannelModel32 = model::ChannelModel<f32>;
pub type SqlcParams = sqlc::SqlcParams<f64>;
pub type Geometry = sqlc::Geometry<f64>;
