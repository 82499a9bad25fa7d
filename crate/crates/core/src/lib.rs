//! Direct line segment detection.
//!
//! Segments are grown from gradient-maximum seeds by a linear Kalman filter
//! over a four-parameter line model `(a, x0, b, y0)`. Each step predicts the
//! next support point, searches a short cross-track profile of the gradient
//! field for a compatible maximum and feeds it back as an observation. Growth
//! is alternated on both sides of the seed and overlapping results are fused
//! afterwards.
//!
//! The crate also provides a coarse-to-fine variant driven by an image
//! pyramid ([`hierarchical`]) and the repeatability tooling used to compare
//! detections of the same scene ([`evaluation`]).
//!
//! ```
//! use dseg::{detect, synthetic, DetectorParams};
//!
//! let image = synthetic::square(128, 128, 64.0, 64.0, 80.0, 0.0, 40.0, 210.0).unwrap();
//! let segments = detect(&image, &DetectorParams::default()).unwrap();
//! assert_eq!(segments.len(), 4);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detector;
pub mod error;
pub mod evaluation;
pub mod gradient;
pub mod hierarchical;
pub mod io;
pub mod line_model;
pub mod params;
pub mod segment;
pub mod synthetic;

/// Image-plane point, x to the right and y down.
pub type Point = nalgebra::Point2<f64>;

pub use detector::{detect, Seed};
pub use error::{Error, Result};
pub use evaluation::MatchReport;
pub use gradient::{GradientField, GrayImage};
pub use hierarchical::detect_hierarchical;
pub use line_model::LineState;
pub use params::{DetectorParams, HierarchicalParams};
pub use segment::Segment;
