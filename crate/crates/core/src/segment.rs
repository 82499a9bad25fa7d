use nalgebra::{Matrix4, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::line_model::LineState;
use crate::Point;

/// A detected line segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub p1: Point,
    pub p2: Point,
    /// Final filter state of the supporting line.
    pub state: LineState,
    /// Number of support points, seed included.
    pub n_support: usize,
    pub length: f64,
    /// Pyramid level where the segment was first detected (0 for flat detection).
    pub level: usize,
    /// Support points in image coordinates. Not serialized.
    pub support: Vec<Point>,
}

impl Segment {
    /// Segment with a unit-direction state spanning `p1 → p2` and zero covariance.
    pub fn from_endpoints(p1: Point, p2: Point) -> Result<Segment> {
        let d = p2 - p1;
        let length = d.norm();
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::DegenerateSegment);
        }
        let u = d / length;
        let state = LineState {
            params: Vector4::new(u.x, p1.x, u.y, p1.y),
            covariance: Matrix4::zeros(),
            t_pos: length,
            t_neg: 0.0,
        };
        Ok(Segment {
            p1,
            p2,
            state,
            n_support: 2,
            length,
            level: 0,
            support: vec![p1, p2],
        })
    }

    /// Unit vector from `p1` to `p2`.
    pub fn unit_direction(&self) -> Vector2<f64> {
        (self.p2 - self.p1) / self.length
    }

    pub fn midpoint(&self) -> Point {
        nalgebra::center(&self.p1, &self.p2)
    }
}
