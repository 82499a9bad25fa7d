//! Coarse-to-fine detection over an image pyramid.
//!
//! Segments are detected on the coarsest level only. Each one is then scaled
//! to the next finer level and re-estimated there: the arc range `[0, L]` of
//! the projected segment is kept as a set of unexplained intervals, the
//! midpoint of an interval is probed for a gradient maximum across the line,
//! and a hit is grown into a fine-level segment whose footprint is carved out
//! of the set. Missed intervals are halved until they fall below `delta_t`.

use nalgebra::Vector2;

use crate::detector::{
    detect, extend, finish_segment, merge_segments, select_measure, sort_segments,
};
use crate::error::{Error, Result};
use crate::gradient::{build_pyramid, compute_gradient, GradientField, GrayImage};
use crate::line_model::{observation_matrix_at, observation_noise, LineObservation};
use crate::params::{DetectorParams, HierarchicalParams};
use crate::segment::Segment;
use crate::Point;

/// Perpendicular distance under which a segment already found at a level is
/// taken to explain part of a projected segment.
pub const FOOTPRINT_TOLERANCE: f64 = 2.0;

/// Sorted, non-overlapping closed arc ranges `[p, q]` with `p < q`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl IntervalSet {
    /// The single interval `[p, q]`, or the empty set when `q <= p`.
    pub fn new(p: f64, q: f64) -> Self {
        let mut set = Self::default();
        set.insert(p, q);
        set
    }

    pub fn from_intervals(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in intervals.windows(2) {
            if w[0].1 > w[1].0 {
                return Err(Error::InvalidArgument("intervals overlap".into()));
            }
        }
        if intervals.iter().any(|(p, q)| !(p < q)) {
            return Err(Error::InvalidArgument(
                "interval bounds must satisfy p < q".into(),
            ));
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|(p, q)| q - p).sum()
    }

    /// Inserts an interval that does not overlap the current ones.
    fn insert(&mut self, p: f64, q: f64) {
        if q > p {
            let pos = self.intervals.partition_point(|iv| iv.0 < p);
            self.intervals.insert(pos, (p, q));
        }
    }

    /// Removes the longest interval, the leftmost one among equals.
    fn pop_longest(&mut self) -> Option<(f64, f64)> {
        let idx = (0..self.intervals.len()).reduce(|best, i| {
            let (bl, il) = (
                self.intervals[best].1 - self.intervals[best].0,
                self.intervals[i].1 - self.intervals[i].0,
            );
            if il > bl {
                i
            } else {
                best
            }
        })?;
        Some(self.intervals.remove(idx))
    }

    /// Removes the open range `(idx1, idx2)` and drops pieces shorter than `min_length`.
    pub fn carve(&self, idx1: f64, idx2: f64, min_length: f64) -> Result<IntervalSet> {
        if !(idx1 <= idx2) {
            return Err(Error::InvalidArgument(format!(
                "carve bounds out of order: {idx1} > {idx2}"
            )));
        }
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        for &(p, q) in &self.intervals {
            if idx2 <= p || q <= idx1 || idx1 == idx2 {
                // untouched
                out.push((p, q));
                continue;
            }
            if p < idx1 {
                out.push((p, idx1));
            }
            if idx2 < q {
                out.push((idx2, q));
            }
        }
        out.retain(|(p, q)| q - p >= min_length);
        Ok(IntervalSet { intervals: out })
    }
}

/// Removes `[idx1, idx2]` from every interval of `set`; see [`IntervalSet::carve`].
pub fn carve_intervals(
    set: &IntervalSet,
    idx1: f64,
    idx2: f64,
    min_length: f64,
) -> Result<IntervalSet> {
    set.carve(idx1, idx2, min_length)
}

/// Scales a segment found at one level to the next finer one.
pub fn project_down(segment: &Segment, scale: f64) -> Segment {
    let mut state = segment.state.clone();
    state.params[1] *= scale;
    state.params[3] *= scale;
    state.t_pos *= scale;
    state.t_neg *= scale;
    for r in 0..4 {
        for c in 0..4 {
            let fr = if r % 2 == 1 { scale } else { 1.0 };
            let fc = if c % 2 == 1 { scale } else { 1.0 };
            state.covariance[(r, c)] *= fr * fc;
        }
    }
    Segment {
        p1: Point::from(segment.p1.coords * scale),
        p2: Point::from(segment.p2.coords * scale),
        state,
        n_support: segment.n_support,
        length: segment.length * scale,
        level: segment.level,
        support: segment
            .support
            .iter()
            .map(|p| Point::from(p.coords * scale))
            .collect(),
    }
}

/// Arc position of `p` along the projected segment, measured from `p1`.
fn arc_position(origin: &Point, u: &Vector2<f64>, p: &Point) -> f64 {
    (p - origin).dot(u)
}

fn explains(found: &Segment, origin: &Point, u: &Vector2<f64>, tau_angle: f64) -> bool {
    let n = Vector2::new(-u.y, u.x);
    found.unit_direction().dot(u).abs() >= tau_angle
        && [found.p1, found.p2]
            .iter()
            .all(|p| (p - origin).dot(&n).abs() <= FOOTPRINT_TOLERANCE)
}

/// Grows a fine-level segment through `hit` using the projected state as prior.
fn grow_from_hit(
    field: &GradientField,
    predicted: &Segment,
    hit: Point,
    params: &DetectorParams,
) -> Option<Segment> {
    let mut prior = predicted.state.clone();
    for k in 0..4 {
        for dir in [0, 2] {
            if k != dir {
                prior.covariance[(dir, k)] = 0.0;
                prior.covariance[(k, dir)] = 0.0;
            }
        }
    }
    prior.covariance[(0, 0)] = params.sigma_a * params.sigma_a;
    prior.covariance[(2, 2)] = params.sigma_b * params.sigma_b;
    let mut state = prior.with_origin_at(prior.project(&hit));
    state.t_pos = 0.0;
    state.t_neg = 0.0;
    let obs = LineObservation {
        point: hit,
        noise: observation_noise(&state, params.delta_t, params.sigma_r),
    };
    let state = state.update(&observation_matrix_at(0.0), &obs).ok()?;
    let (state, observed) = extend(field, state, params);
    let mut support = Vec::with_capacity(observed.len() + 1);
    support.push(hit);
    support.extend(observed);
    let mut segment = finish_segment(state, support, params)?;
    segment.level = predicted.level;
    Some(segment)
}

pub(crate) struct Refinement {
    pub segments: Vec<Segment>,
    pub probes: usize,
}

pub(crate) fn refine_traced(
    field: &GradientField,
    predicted: &Segment,
    params: &DetectorParams,
    already_found: &[Segment],
) -> Refinement {
    let mut out = Refinement {
        segments: Vec::new(),
        probes: 0,
    };
    if !(predicted.length > 0.0) {
        return out;
    }
    let origin = predicted.p1;
    let u = predicted.unit_direction();
    let n = Vector2::new(-u.y, u.x);
    let normal_angle = predicted.state.normal_angle();
    let dt = params.delta_t;

    let mut set = IntervalSet::new(0.0, predicted.length);
    for found in already_found
        .iter()
        .filter(|f| explains(f, &origin, &u, params.tau_angle))
    {
        let a = arc_position(&origin, &u, &found.p1);
        let b = arc_position(&origin, &u, &found.p2);
        set = set.carve(a.min(b), a.max(b), dt).expect("ordered bounds");
    }

    while let Some((p, q)) = set.pop_longest() {
        if q - p < dt {
            continue;
        }
        out.probes += 1;
        let r = 0.5 * (p + q);
        let probe = origin + u * r;
        let grown = select_measure(field, probe, n, 1, normal_angle, params.tau_angle)
            .and_then(|m| grow_from_hit(field, predicted, m.point, params));
        match grown {
            Some(segment) => {
                let a = arc_position(&origin, &u, &segment.p1);
                let b = arc_position(&origin, &u, &segment.p2);
                let lo = a.min(b).min(r - 0.5 * dt);
                let hi = a.max(b).max(r + 0.5 * dt);
                set.insert(p, q);
                set = set.carve(lo, hi, dt).expect("ordered bounds");
                out.segments.push(segment);
            }
            None => {
                if r - p >= dt {
                    set.insert(p, r);
                }
                if q - r >= dt {
                    set.insert(r, q);
                }
            }
        }
    }
    out
}

/// Re-estimates a projected segment on a finer level's gradient field.
///
/// `already_found` holds segments detected earlier on the same level; the
/// parts of the projected segment they explain are not probed again.
pub fn refine_at_level(
    field: &GradientField,
    predicted: &Segment,
    params: &DetectorParams,
    already_found: &[Segment],
) -> Vec<Segment> {
    refine_traced(field, predicted, params, already_found).segments
}

/// Hierarchical detection; results are in full-resolution coordinates.
pub fn detect_hierarchical(image: &GrayImage, params: &HierarchicalParams) -> Result<Vec<Segment>> {
    params.validate()?;
    if params.levels == 1 {
        return detect(image, &params.base);
    }
    let pyramid = build_pyramid(image, params.levels, params.scale)?;
    let top = params.levels - 1;
    let mut current = detect(&pyramid[top], &params.base)?;
    for s in &mut current {
        s.level = top;
    }
    for level in (0..top).rev() {
        let field = compute_gradient(&pyramid[level])?;
        let mut found: Vec<Segment> = Vec::new();
        for coarse in &current {
            let predicted = project_down(coarse, params.scale);
            let refined = refine_at_level(&field, &predicted, &params.base, &found);
            found.extend(refined);
        }
        current = found;
    }
    let mut merged = merge_segments(current, &params.base);
    sort_segments(&mut merged);
    Ok(merged)
}
