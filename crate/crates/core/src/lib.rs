//! Pairwise conditional random forests for expression classification over
//! facial landmark sequences.
//!
//! The crate covers the whole pipeline: geometric and integral-channel
//! feature templates, balanced-bootstrap forests, pairwise conditional
//! forest banks (optionally keyed by head-pose bin), temporal inference
//! models and a synthetic corpus generator.

pub mod channels;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod forest;
pub mod frame;
pub mod geometry;
pub mod inference;
pub mod latency;
pub mod manifest;
pub mod model;
pub mod parallel;
pub mod params;
pub mod pose;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use image::GrayImage;
