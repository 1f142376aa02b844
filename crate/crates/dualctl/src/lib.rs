//! Targeted exploration and gain-scheduled robust control for linear systems
//! with a Gaussian parameter prior.
//!
//! The pipeline designs a multisine exploration input whose excitation is
//! guaranteed a priori, jointly with a state-feedback controller that is
//! scheduled on the post-exploration parameter estimate and certified by
//! linear matrix inequalities.

extern crate openblas_src;

pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod hinf;
pub mod linalg;
pub mod model;
pub mod sdp;
pub mod seeds;
pub mod spectral;
pub mod synthesis;

pub use error::{Error, Result};
