//! Geometric vehicular visible light positioning.
//!
//! Closed-form position fixes from bearing and range measurements between
//! a target vehicle's tail lights and two receivers on the ego vehicle,
//! their likelihood and Cramer-Rao analysis, a Lambertian channel noise
//! model, and Monte Carlo / error-map simulations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod linalg;
pub mod plot;
pub mod simulation;
pub mod statistics;
pub mod verify;

pub use error::{Error, Result};
pub use estimators::{EstimatorConfig, Fix, FixResult, Method};
pub use geometry::{Family, MeasurementSet, Position2D, RelativeMotion, RxLayout, TargetGeometry, TrackSide};
