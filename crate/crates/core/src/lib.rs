//! Quantitative evaluation of depth-camera point clouds against
//! ground-truth surface meshes: camera-to-world registration, per-pixel
//! signed error fields, temporal metrics, masking and tile pooling,
//! aligned-rank-transform ANOVA, and a synthetic depth-sensor simulator.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod errorfield;
pub mod exec;
pub mod geom;
pub mod maskpool;
pub mod meshio;
pub mod pipeline;
pub mod registration;
pub mod sensorsim;
pub mod stats;
