//! Four-parameter line model and its linear Kalman filter algebra.
//!
//! A line is `x(t) = a·t + x0`, `y(t) = b·t + y0` with state ordered
//! `(a, x0, b, y0)`. The model is over-parametrized on purpose: nothing ties
//! `(a, b)` to unit length, so any image line is representable without a
//! singularity and the filter stays linear. There is no process noise, so a
//! prediction leaves the state and covariance untouched and only the
//! observation matrix changes with the arc parameter.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::params::DetectorParams;
use crate::segment::Segment;
use crate::Point;

/// Condition number of the innovation covariance above which an update is refused.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

/// Growth direction along the line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Side::Positive => 1.0,
            Side::Negative => -1.0,
        }
    }
}

/// Kalman state of a supporting line plus the arc range covered so far.
#[derive(Clone, Debug, PartialEq)]
pub struct LineState {
    /// `(a, x0, b, y0)`.
    pub params: Vector4<f64>,
    /// Covariance in the same ordering.
    pub covariance: Matrix4<f64>,
    /// Arc parameter of the extremity on the positive side (≥ 0).
    pub t_pos: f64,
    /// Arc parameter of the extremity on the negative side (≤ 0).
    pub t_neg: f64,
}

/// An image point proposed as support for the current line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineObservation {
    pub point: Point,
    /// Observation covariance `R_k`, pixels².
    pub noise: Matrix2<f64>,
}

impl LineState {
    pub fn new(params: Vector4<f64>, covariance: Matrix4<f64>) -> Self {
        Self {
            params,
            covariance,
            t_pos: 0.0,
            t_neg: 0.0,
        }
    }

    #[inline]
    pub fn a(&self) -> f64 {
        self.params[0]
    }

    #[inline]
    pub fn x0(&self) -> f64 {
        self.params[1]
    }

    #[inline]
    pub fn b(&self) -> f64 {
        self.params[2]
    }

    #[inline]
    pub fn y0(&self) -> f64 {
        self.params[3]
    }

    #[inline]
    pub fn direction(&self) -> Vector2<f64> {
        Vector2::new(self.a(), self.b())
    }

    #[inline]
    pub fn origin(&self) -> Point {
        Point::new(self.x0(), self.y0())
    }

    /// Point of the supporting line at arc parameter `t`.
    #[inline]
    pub fn predict_point(&self, t: f64) -> Point {
        Point::new(self.a() * t + self.x0(), self.b() * t + self.y0())
    }

    /// Unit vector perpendicular to the line, `(-b', a')`.
    pub fn cross_track_unit(&self) -> Vector2<f64> {
        let d = self.direction();
        let n = d.norm();
        Vector2::new(-d.y / n, d.x / n)
    }

    /// Expected gradient direction of the supporting edge, `atan2(-a, b)`.
    ///
    /// This is the seed gradient direction for a freshly initialized state.
    #[inline]
    pub fn normal_angle(&self) -> f64 {
        (-self.a()).atan2(self.b())
    }

    /// Arc parameter of the orthogonal projection of `p` on the line.
    pub fn project(&self, p: &Point) -> f64 {
        let d = self.direction();
        (p - self.origin()).dot(&d) / d.norm_squared()
    }

    /// Re-expresses the state with its origin moved to arc parameter `shift`.
    ///
    /// The map is linear for a fixed shift, so the covariance is propagated
    /// exactly. Extremities are kept at the same image points.
    pub fn with_origin_at(&self, shift: f64) -> LineState {
        let mut jac = Matrix4::identity();
        jac[(1, 0)] = shift;
        jac[(3, 2)] = shift;
        let params = jac * self.params;
        let covariance = symmetrize(&(jac * self.covariance * jac.transpose()));
        LineState {
            params,
            covariance,
            t_pos: self.t_pos - shift,
            t_neg: self.t_neg - shift,
        }
    }

    /// Flips the direction vector; the supporting line is unchanged.
    pub fn reversed(&self) -> LineState {
        let jac = Matrix4::from_diagonal(&Vector4::new(-1.0, 1.0, -1.0, 1.0));
        LineState {
            params: jac * self.params,
            covariance: jac * self.covariance * jac,
            t_pos: -self.t_neg,
            t_neg: -self.t_pos,
        }
    }

    /// Standard Kalman update with observation matrix `h`.
    pub fn update(&self, h: &Matrix2x4<f64>, obs: &LineObservation) -> Result<LineState> {
        let s = symmetrize2(&(h * self.covariance * h.transpose() + obs.noise));
        let (lo, hi) = sym2_eigenvalues(&s);
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_INNOVATION_CONDITION) {
            return Err(Error::DegenerateUpdate(condition));
        }
        let s_inv = s.try_inverse().ok_or(Error::DegenerateUpdate(condition))?;
        let gain = self.covariance * h.transpose() * s_inv;
        let innovation = Vector2::new(obs.point.x, obs.point.y) - h * self.params;
        let params = self.params + gain * innovation;
        let covariance = symmetrize(&((Matrix4::identity() - gain * h) * self.covariance));
        Ok(LineState {
            params,
            covariance,
            t_pos: self.t_pos,
            t_neg: self.t_neg,
        })
    }

    /// Bounded segment between the two extremities.
    pub fn to_segment(&self) -> Result<Segment> {
        if !(self.t_pos - self.t_neg > 0.0) {
            return Err(Error::DegenerateSegment);
        }
        let p1 = self.predict_point(self.t_neg);
        let p2 = self.predict_point(self.t_pos);
        let length = (p2 - p1).norm();
        if length == 0.0 {
            return Err(Error::DegenerateSegment);
        }
        Ok(Segment {
            p1,
            p2,
            state: self.clone(),
            n_support: 0,
            length,
            level: 0,
            support: Vec::new(),
        })
    }
}

/// Filter state for a seed at pixel `(i, j)` with gradient direction `phi`.
pub fn init_state(i: f64, j: f64, phi: f64, params: &DetectorParams) -> LineState {
    LineState::new(
        Vector4::new(-phi.sin(), i, phi.cos(), j),
        Matrix4::from_diagonal(&Vector4::new(
            params.sigma_a.powi(2),
            params.sigma_x0.powi(2),
            params.sigma_b.powi(2),
            params.sigma_y0.powi(2),
        )),
    )
}

/// Observation matrix at step `k` on `side`, i.e. at arc parameter `±k·delta_t`.
pub fn observation_matrix(k: usize, delta_t: f64, side: Side) -> Matrix2x4<f64> {
    observation_matrix_at(side.sign() * k as f64 * delta_t)
}

/// Observation matrix at signed arc parameter `t`.
#[inline]
pub fn observation_matrix_at(t: f64) -> Matrix2x4<f64> {
    Matrix2x4::new(t, 1.0, 0.0, 0.0, 0.0, 0.0, t, 1.0)
}

/// Innovation covariance `H P Hᵀ + R`.
pub fn innovation_covariance(
    state: &LineState,
    h: &Matrix2x4<f64>,
    noise: &Matrix2<f64>,
) -> Matrix2<f64> {
    symmetrize2(&(h * state.covariance * h.transpose() + noise))
}

/// Half-width of the cross-track search window: three times the square root
/// of the largest eigenvalue of `H P Hᵀ + σ_r² I`.
pub fn cross_error(state: &LineState, h: &Matrix2x4<f64>, sigma_r: f64) -> f64 {
    let s = innovation_covariance(state, h, &(Matrix2::identity() * sigma_r * sigma_r));
    let (_, largest) = sym2_eigenvalues(&s);
    3.0 * largest.max(0.0).sqrt()
}

/// Observation covariance: `delta_t²` along the line, `sigma_r²` across it,
/// rotated into the image frame.
pub fn observation_noise(state: &LineState, delta_t: f64, sigma_r: f64) -> Matrix2<f64> {
    let alpha = state.b().atan2(state.a());
    let (s, c) = alpha.sin_cos();
    let rot = Matrix2::new(c, -s, s, c);
    let local = Matrix2::new(delta_t * delta_t, 0.0, 0.0, sigma_r * sigma_r);
    symmetrize2(&(rot * local * rot.transpose()))
}

/// Eigenvalues `(smallest, largest)` of a symmetric 2x2 matrix.
pub fn sym2_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let radius = half_diff.hypot(off);
    (mean - radius, mean + radius)
}

#[inline]
fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

#[inline]
fn symmetrize2(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}
