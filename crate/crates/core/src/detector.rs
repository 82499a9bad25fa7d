//! Seed selection, filter-driven segment growth and post-hoc merging.
//!
//! A seed is a pixel whose gradient stands out from its neighbors across the
//! edge by more than `tau_gmax` and is not exceeded by its neighbors along the
//! edge. From each seed a Kalman filter is grown alternately on both sides:
//! the next support point is predicted `delta_t` further along the current
//! line, `2·n_o + 1` gradient samples are taken across the prediction inside
//! the 3σ innovation window, and the closest compatible local maximum is fed
//! back as an observation. A side closes after `max_consecutive_misses`
//! failed attempts in a row; a miss only advances the arc parameter.

use nalgebra::{Matrix2x4, Matrix4};

use crate::error::{Error, Result};
use crate::gradient::{compute_gradient, GradientField, GrayImage};
use crate::line_model::{
    cross_error, init_state, innovation_covariance, observation_matrix, observation_matrix_at,
    observation_noise, LineObservation, LineState, Side,
};
use crate::params::DetectorParams;
use crate::segment::Segment;
use crate::Point;

/// Seed candidate: a pixel satisfying the four seed inequalities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Seed {
    pub i: usize,
    pub j: usize,
    pub phi: f64,
    pub magnitude: f64,
}

/// Pixels already explained by an accepted segment.
#[derive(Clone, Debug)]
pub struct ClaimedMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl ClaimedMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn is_claimed(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.bits[y * self.width + x]
    }

    /// Marks the 3x3 block around the pixel nearest to `p`.
    pub fn stamp(&mut self, p: &Point) {
        let cx = p.x.round();
        let cy = p.y.round();
        if !cx.is_finite() || !cy.is_finite() {
            return;
        }
        for dy in -1..=1 {
            for dx in -1..=1 {
                let x = cx as i64 + dx;
                let y = cy as i64 + dy;
                if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
                    self.bits[y as usize * self.width + x as usize] = true;
                }
            }
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

#[inline]
fn sampled_magnitude(field: &GradientField, x: f64, y: f64) -> Option<f64> {
    field.sample(x, y).ok().map(|s| s.magnitude)
}

/// Seed pixels ordered by decreasing gradient magnitude, then row, then column.
///
/// The two contrast tests across the gradient direction are strict; the two
/// tests along the hypothetical line accept ties so that ideal straight edges,
/// whose magnitude is constant along the edge, still produce seeds.
pub fn find_seeds(field: &GradientField, params: &DetectorParams) -> Vec<Seed> {
    let (w, h) = (field.width(), field.height());
    let mut seeds = Vec::new();
    if w < 8 || h < 8 {
        return seeds;
    }
    for j in 3..h - 3 {
        for i in 3..w - 3 {
            let g = field.magnitude(i, j);
            if g <= 0.0 {
                continue;
            }
            let phi = field.direction(i, j);
            let (s, c) = phi.sin_cos();
            let (x, y) = (i as f64, j as f64);
            let is_seed = || -> Option<bool> {
                Some(
                    g - sampled_magnitude(field, x + c, y + s)? > params.tau_gmax
                        && g - sampled_magnitude(field, x - c, y - s)? > params.tau_gmax
                        && g >= sampled_magnitude(field, x - s, y + c)?
                        && g >= sampled_magnitude(field, x + s, y - c)?,
                )
            };
            if is_seed().unwrap_or(false) {
                seeds.push(Seed {
                    i,
                    j,
                    phi,
                    magnitude: g,
                });
            }
        }
    }
    seeds.sort_by(|a, b| {
        b.magnitude
            .total_cmp(&a.magnitude)
            .then(a.j.cmp(&b.j))
            .then(a.i.cmp(&b.i))
    });
    seeds
}

/// Chosen cross-track measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Measure {
    pub point: Point,
    pub offset: i64,
    pub cosine: f64,
}

/// Picks the closest local maximum with a compatible direction among the
/// samples `center + l·step` for `l ∈ [-half, half]`.
///
/// Neighbors at `±(half + 1)` are sampled for the local-maximum test. Equal
/// `|l|` is resolved by the larger direction cosine, then by the negative
/// offset.
pub(crate) fn select_measure(
    field: &GradientField,
    center: Point,
    step: nalgebra::Vector2<f64>,
    half: i64,
    normal_angle: f64,
    tau_angle: f64,
) -> Option<Measure> {
    let count = (2 * half + 3) as usize;
    let mut samples = Vec::with_capacity(count);
    for l in -(half + 1)..=(half + 1) {
        let p = center + step * l as f64;
        samples.push(field.sample(p.x, p.y).ok().map(|s| (p, s)));
    }
    let mut best: Option<Measure> = None;
    for l in -half..=half {
        let idx = (l + half + 1) as usize;
        let Some((p, s)) = samples[idx] else { continue };
        let (Some((_, prev)), Some((_, next))) = (samples[idx - 1], samples[idx + 1]) else {
            continue;
        };
        if !(s.magnitude > prev.magnitude && s.magnitude > next.magnitude) {
            continue;
        }
        let cosine = (s.direction - normal_angle).cos();
        if !(cosine > tau_angle) {
            continue;
        }
        let candidate = Measure {
            point: p,
            offset: l,
            cosine,
        };
        best = match best {
            None => Some(candidate),
            Some(b) if l.abs() < b.offset.abs() => Some(candidate),
            Some(b) if l.abs() == b.offset.abs() && cosine > b.cosine => Some(candidate),
            keep => keep,
        };
    }
    best
}

/// Looks for a support point at distance `t` from the origin on `side`.
pub fn search_observation(
    field: &GradientField,
    state: &LineState,
    t: f64,
    side: Side,
    params: &DetectorParams,
) -> Option<LineObservation> {
    let signed_t = side.sign() * t;
    let pred = state.predict_point(signed_t);
    if !field.is_sampleable(pred.x, pred.y) {
        return None;
    }
    let h = observation_matrix_at(signed_t);
    let e = cross_error(state, &h, params.sigma_r);
    let half = params.n_o as i64;
    let step = state.cross_track_unit() * (e / params.n_o as f64);
    let m = select_measure(
        field,
        pred,
        step,
        half,
        state.normal_angle(),
        params.tau_angle,
    )?;
    Some(LineObservation {
        point: m.point,
        noise: observation_noise(state, params.delta_t, params.sigma_r),
    })
}

struct Cursor {
    side: Side,
    k: usize,
    misses: usize,
    last_hit: usize,
    open: bool,
}

/// Extends `state` on both sides from its origin until both sides close.
///
/// Returns the final state, with its extremities set to the last accepted
/// observations, and the accepted observation points.
pub(crate) fn extend(
    field: &GradientField,
    mut state: LineState,
    params: &DetectorParams,
) -> (LineState, Vec<Point>) {
    let max_steps = (2 * (field.width() + field.height())) as f64 / params.delta_t;
    let max_steps = max_steps.ceil() as usize;
    let mut cursors = [Side::Positive, Side::Negative].map(|side| Cursor {
        side,
        k: 0,
        misses: 0,
        last_hit: 0,
        open: true,
    });
    let mut points = Vec::new();
    while cursors.iter().any(|c| c.open) {
        for cursor in cursors.iter_mut().filter(|c| c.open) {
            cursor.k += 1;
            let t = cursor.k as f64 * params.delta_t;
            let accepted =
                search_observation(field, &state, t, cursor.side, params).and_then(|obs| {
                    let h = observation_matrix(cursor.k, params.delta_t, cursor.side);
                    state.update(&h, &obs).ok().map(|next| (next, obs.point))
                });
            match accepted {
                Some((next, point)) => {
                    state = next;
                    points.push(point);
                    cursor.last_hit = cursor.k;
                    cursor.misses = 0;
                }
                None => {
                    cursor.misses += 1;
                    if cursor.misses >= params.max_consecutive_misses {
                        cursor.open = false;
                    }
                }
            }
            if cursor.k >= max_steps {
                cursor.open = false;
            }
        }
    }
    state.t_pos = cursors[0].last_hit as f64 * params.delta_t;
    state.t_neg = -(cursors[1].last_hit as f64) * params.delta_t;
    (state, points)
}

/// Grows a segment from `seed`; accepted segments stamp their support into `claimed`.
pub fn grow_segment(
    field: &GradientField,
    seed: &Seed,
    params: &DetectorParams,
    claimed: &mut ClaimedMask,
) -> Option<Segment> {
    if claimed.is_claimed(seed.i, seed.j) {
        return None;
    }
    let (x, y) = (seed.i as f64, seed.j as f64);
    let state = init_state(x, y, seed.phi, params);
    let (state, observed) = extend(field, state, params);
    let mut support = Vec::with_capacity(observed.len() + 1);
    support.push(Point::new(x, y));
    support.extend(observed);
    let segment = finish_segment(state, support, params)?;
    for p in &segment.support {
        claimed.stamp(p);
    }
    Some(segment)
}

pub(crate) fn finish_segment(
    state: LineState,
    support: Vec<Point>,
    params: &DetectorParams,
) -> Option<Segment> {
    if support.len() < params.min_support {
        return None;
    }
    let mut segment = state.to_segment().ok()?;
    segment.n_support = support.len();
    segment.support = support;
    Some(segment)
}

/// Squared Mahalanobis distance of `p` as an observation of `segment`'s line.
pub fn mahalanobis_sq(segment: &Segment, p: &Point, params: &DetectorParams) -> f64 {
    let state = &segment.state;
    let t = state.project(p);
    let h: Matrix2x4<f64> = observation_matrix_at(t);
    let noise = observation_noise(state, params.delta_t, params.sigma_r);
    let s = innovation_covariance(state, &h, &noise);
    let predicted = h * state.params;
    let nu = nalgebra::Vector2::new(p.x - predicted.x, p.y - predicted.y);
    match s.try_inverse() {
        Some(inv) => (nu.transpose() * inv * nu)[(0, 0)],
        None => f64::INFINITY,
    }
}

fn inside_range(segment: &Segment, p: &Point) -> bool {
    let t = segment.state.project(p);
    t >= segment.state.t_neg && t <= segment.state.t_pos
}

/// Overlap and chi-square compatibility of two segments.
pub fn can_merge(a: &Segment, b: &Segment, params: &DetectorParams) -> bool {
    let overlap = inside_range(b, &a.p1)
        || inside_range(b, &a.p2)
        || inside_range(a, &b.p1)
        || inside_range(a, &b.p2);
    overlap
        && [a.p1, a.p2]
            .iter()
            .all(|p| mahalanobis_sq(b, p, params) < params.chi2_merge)
        && [b.p1, b.p2]
            .iter()
            .all(|p| mahalanobis_sq(a, p, params) < params.chi2_merge)
}

/// Covariance-weighted average of two Gaussian states expressed in the same
/// parameterization: `(P1⁻¹ + P2⁻¹)⁻¹ (P1⁻¹ x1 + P2⁻¹ x2)`.
pub fn fuse_states(s1: &LineState, s2: &LineState) -> Option<LineState> {
    let i1 = s1.covariance.try_inverse()?;
    let i2 = s2.covariance.try_inverse()?;
    let covariance: Matrix4<f64> = (i1 + i2).try_inverse()?;
    let covariance = (covariance + covariance.transpose()) * 0.5;
    let params = covariance * (i1 * s1.params + i2 * s2.params);
    if !params.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(LineState {
        params,
        covariance,
        t_pos: s1.t_pos,
        t_neg: s1.t_neg,
    })
}

/// Fuses `b` into `a`. `b` is first re-expressed with `a`'s orientation and
/// with its origin at the foot of `a`'s origin so both states describe the
/// same parameters.
pub fn merge_pair(a: &Segment, b: &Segment) -> Option<Segment> {
    let mut other = b.state.clone();
    if a.state.direction().dot(&other.direction()) < 0.0 {
        other = other.reversed();
    }
    let shift = other.project(&a.state.origin());
    let other = other.with_origin_at(shift);
    let mut fused = fuse_states(&a.state, &other)?;
    if fused.direction().norm() == 0.0 {
        return None;
    }
    let ts = [a.p1, a.p2, b.p1, b.p2].map(|p| fused.project(&p));
    fused.t_neg = ts.iter().copied().fold(0.0, f64::min);
    fused.t_pos = ts.iter().copied().fold(0.0, f64::max);
    let mut merged = fused.to_segment().ok()?;
    merged.n_support = a.n_support + b.n_support;
    merged.level = a.level.min(b.level);
    merged.support = a.support.iter().chain(&b.support).copied().collect();
    Some(merged)
}

/// Repeatedly merges compatible overlapping pairs until none is left.
///
/// A fused segment is immediately compared again with the segments after it;
/// full passes are repeated until one completes without a merge.
pub fn merge_segments(segments: Vec<Segment>, params: &DetectorParams) -> Vec<Segment> {
    let mut segments = segments;
    loop {
        let mut changed = false;
        let mut i = 0;
        while i < segments.len() {
            let mut j = i + 1;
            while j < segments.len() {
                if can_merge(&segments[i], &segments[j], params) {
                    if let Some(merged) = merge_pair(&segments[i], &segments[j]) {
                        segments[i] = merged;
                        segments.remove(j);
                        changed = true;
                        j = i + 1;
                        continue;
                    }
                }
                j += 1;
            }
            i += 1;
        }
        if !changed {
            return segments;
        }
    }
}

/// Orders segments by decreasing length, then by endpoint coordinates.
pub(crate) fn sort_segments(segments: &mut [Segment]) {
    segments.sort_by(|a, b| {
        b.length
            .total_cmp(&a.length)
            .then(a.p1.x.total_cmp(&b.p1.x))
            .then(a.p1.y.total_cmp(&b.p1.y))
            .then(a.p2.x.total_cmp(&b.p2.x))
            .then(a.p2.y.total_cmp(&b.p2.y))
    });
}

/// Detects segments on a precomputed gradient field.
pub fn detect_in_field(field: &GradientField, params: &DetectorParams) -> Vec<Segment> {
    let seeds = find_seeds(field, params);
    let mut claimed = ClaimedMask::new(field.width(), field.height());
    let segments: Vec<Segment> = seeds
        .iter()
        .filter_map(|seed| grow_segment(field, seed, params, &mut claimed))
        .collect();
    let mut merged = merge_segments(segments, params);
    sort_segments(&mut merged);
    merged
}

/// Full flat detection pipeline.
pub fn detect(image: &GrayImage, params: &DetectorParams) -> Result<Vec<Segment>> {
    params.validate()?;
    if image.width() < 8 || image.height() < 8 {
        return Err(Error::InvalidInput(format!(
            "detection needs at least 8x8 pixels, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    let field = compute_gradient(image)?;
    Ok(detect_in_field(&field, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Vector2, Vector4};
    use proptest::prelude::*;

    fn field_of(img: &GrayImage) -> GradientField {
        compute_gradient(img).unwrap()
    }

    /// Image constant along rows: `I(x, y) = profile[x]`.
    fn column_profile(profile: &[f64], height: usize) -> GrayImage {
        GrayImage::from_fn(profile.len(), height, |x, _| profile[x]).unwrap()
    }

    fn vertical_edge_field(
        rows: std::ops::Range<usize>,
        gaps: &[std::ops::Range<usize>],
    ) -> GradientField {
        field_of(
            &synthetic::vertical_edge(64, 140, 30.0, rows, gaps, f64::INFINITY, 40.0, 210.0)
                .unwrap(),
        )
    }

    #[test]
    fn constant_image_has_no_seeds() {
        let img = GrayImage::filled(32, 32, 77.0).unwrap();
        assert!(find_seeds(&field_of(&img), &DetectorParams::default()).is_empty());
    }

    #[test]
    fn antialiased_edge_seeds_on_edge_column() {
        let field = vertical_edge_field(0..140, &[]);
        let seeds = find_seeds(&field, &DetectorParams::default());
        assert!(!seeds.is_empty());
        for s in &seeds {
            assert_eq!(s.i, 30);
            assert_abs_diff_eq!(s.phi, 0.0, epsilon = 1e-12);
        }
        // every interior row of the straight edge qualifies
        assert_eq!(seeds.len(), 140 - 6);
    }

    #[test]
    fn hard_step_has_no_strict_maximum() {
        // a step between two columns gives a two-pixel plateau of equal magnitude
        let profile: Vec<f64> = (0..40).map(|x| if x < 20 { 30.0 } else { 200.0 }).collect();
        let field = field_of(&column_profile(&profile, 40));
        assert_eq!(field.magnitude(19, 20), field.magnitude(20, 20));
        assert!(find_seeds(&field, &DetectorParams::default()).is_empty());
    }

    proptest! {
        #[test]
        fn seeds_match_brute_force_on_monotone_profiles(
            steps in proptest::collection::vec(0.0f64..40.0, 24),
            tau in 0.0f64..60.0,
        ) {
            let mut profile = vec![0.0];
            for s in &steps {
                profile.push(profile.last().unwrap() + s);
            }
            let (w, h) = (profile.len(), 16);
            let params = DetectorParams { tau_gmax: tau, ..Default::default() };
            let seeds = find_seeds(&field_of(&column_profile(&profile, h)), &params);
            // horizontal Sobel of a column profile: 4 (f(x+1) - f(x-1)); zero on the border
            let g = |x: usize| if x == 0 || x + 1 >= w { 0.0 } else { 4.0 * (profile[x + 1] - profile[x - 1]) };
            let mut expected = Vec::new();
            for j in 3..h - 3 {
                for i in 3..w - 3 {
                    if g(i) > 0.0 && g(i) - g(i + 1) > tau && g(i) - g(i - 1) > tau {
                        expected.push((i, j));
                    }
                }
            }
            let mut got: Vec<_> = seeds.iter().map(|s| (s.i, s.j)).collect();
            got.sort();
            expected.sort();
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn seeds_are_sorted_and_shrink_with_threshold() {
        let img = synthetic::square(96, 96, 48.0, 48.0, 50.0, 0.35, 20.0, 200.0).unwrap();
        let field = field_of(&img);
        let mut previous: Option<Vec<(usize, usize)>> = None;
        for tau in [0.0, 10.0, 50.0, 200.0, 2000.0] {
            let params = DetectorParams {
                tau_gmax: tau,
                ..Default::default()
            };
            let seeds = find_seeds(&field, &params);
            for w in seeds.windows(2) {
                assert!(w[0].magnitude >= w[1].magnitude);
            }
            let set: Vec<_> = seeds.iter().map(|s| (s.i, s.j)).collect();
            if let Some(prev) = &previous {
                assert!(set.iter().all(|p| prev.contains(p)));
            }
            previous = Some(set);
        }
        assert!(previous.unwrap().is_empty());
    }

    #[test]
    fn observation_on_edge_has_zero_offset() {
        let field = vertical_edge_field(0..140, &[]);
        let params = DetectorParams::default();
        let state = init_state(30.0, 70.0, 0.0, &params);
        let obs = search_observation(&field, &state, 1.0, Side::Positive, &params).unwrap();
        assert_abs_diff_eq!(obs.point.x, 30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(obs.point.y, 71.0, epsilon = 1e-12);
        let back = search_observation(&field, &state, 1.0, Side::Negative, &params).unwrap();
        assert_abs_diff_eq!(back.point.y, 69.0, epsilon = 1e-12);
    }

    #[test]
    fn flat_region_gives_no_observation() {
        let field = field_of(&GrayImage::filled(40, 40, 50.0).unwrap());
        let params = DetectorParams::default();
        let state = init_state(20.0, 20.0, 0.3, &params);
        assert!(search_observation(&field, &state, 1.0, Side::Positive, &params).is_none());
    }

    #[test]
    fn opposite_polarity_is_rejected() {
        let field = vertical_edge_field(0..140, &[]);
        let params = DetectorParams::default();
        let state = init_state(30.0, 70.0, std::f64::consts::PI, &params);
        assert!(search_observation(&field, &state, 1.0, Side::Positive, &params).is_none());
    }

    #[test]
    fn equidistant_maxima_resolve_to_negative_offset() {
        let mut profile = vec![0.0; 28];
        profile.extend([50.0, 100.0, 100.0, 100.0, 150.0]);
        profile.extend(vec![200.0; 27]);
        let field = field_of(&column_profile(&profile, 20));
        assert_eq!(field.magnitude(28, 10), field.magnitude(32, 10));
        let m = select_measure(
            &field,
            Point::new(30.0, 10.0),
            Vector2::new(1.0, 0.0),
            2,
            0.0,
            0.95,
        )
        .unwrap();
        assert_eq!(m.offset, -2);
        assert_eq!(m.point, Point::new(28.0, 10.0));
    }

    #[test]
    fn nearest_maximum_beats_stronger_one() {
        let mut profile = vec![0.0; 29];
        profile.extend([10.0, 20.0, 20.0, 20.0, 70.0]);
        profile.extend(vec![120.0; 26]);
        let field = field_of(&column_profile(&profile, 20));
        assert!(field.magnitude(33, 10) > field.magnitude(29, 10));
        let m = select_measure(
            &field,
            Point::new(30.0, 10.0),
            Vector2::new(1.0, 0.0),
            3,
            0.0,
            0.95,
        )
        .unwrap();
        assert_eq!(m.offset, -1);
    }

    fn grow_at(field: &GradientField, y: usize) -> Option<Segment> {
        let params = DetectorParams::default();
        let mut claimed = ClaimedMask::new(field.width(), field.height());
        let seed = Seed {
            i: 30,
            j: y,
            phi: field.direction(30, y),
            magnitude: field.magnitude(30, y),
        };
        grow_segment(field, &seed, &params, &mut claimed)
    }

    #[test]
    fn straight_edge_grows_to_full_length() {
        let field = vertical_edge_field(20..120, &[]);
        let s = grow_at(&field, 70).unwrap();
        assert!(s.length >= 90.0, "length {}", s.length);
        let angle = s.unit_direction().x.abs().asin().to_degrees();
        assert!(angle < 1.0, "angle {angle}");
        assert_eq!(s.n_support, s.support.len());
        assert_eq!(s.support[0], Point::new(30.0, 70.0));
    }

    #[test]
    fn one_row_gap_is_bridged() {
        let gap = 70..71;
        let field = vertical_edge_field(20..120, std::slice::from_ref(&gap));
        let s = grow_at(&field, 50).unwrap();
        assert!(
            s.p1.y.min(s.p2.y) < 30.0 && s.p1.y.max(s.p2.y) > 110.0,
            "{:?} {:?}",
            s.p1,
            s.p2
        );
    }

    #[test]
    fn isolated_peak_yields_nothing() {
        let img = GrayImage::from_fn(40, 40, |x, y| if (x, y) == (20, 20) { 255.0 } else { 0.0 })
            .unwrap();
        assert!(detect(&img, &DetectorParams::default()).unwrap().is_empty());
    }

    #[test]
    fn claimed_seeds_are_skipped() {
        let field = vertical_edge_field(20..120, &[]);
        let params = DetectorParams::default();
        let mut claimed = ClaimedMask::new(field.width(), field.height());
        let seed = |j| Seed {
            i: 30,
            j,
            phi: 0.0,
            magnitude: field.magnitude(30, j),
        };
        assert!(grow_segment(&field, &seed(70), &params, &mut claimed).is_some());
        assert!(claimed.count() > 0);
        assert!(grow_segment(&field, &seed(60), &params, &mut claimed).is_none());
    }

    #[test]
    fn claimed_mask_stamps_three_by_three() {
        let mut m = ClaimedMask::new(10, 10);
        m.stamp(&Point::new(0.2, 4.6));
        assert_eq!(m.count(), 6);
        assert!(m.is_claimed(1, 6) && !m.is_claimed(2, 5));
    }

    #[test]
    fn duplicate_growths_merge_into_one() {
        let field = vertical_edge_field(20..120, &[]);
        let a = grow_at(&field, 40).unwrap();
        let b = grow_at(&field, 95).unwrap();
        let params = DetectorParams::default();
        assert!(can_merge(&a, &b, &params));
        let merged = merge_segments(vec![a.clone(), b.clone()], &params);
        assert_eq!(merged.len(), 1);
        let m = &merged[0];
        assert_eq!(m.n_support, a.n_support + b.n_support);
        assert!(m.length >= a.length.max(b.length) - 1e-9);
        assert!((m.p1.x - 30.0).abs() < 0.1 && (m.p2.x - 30.0).abs() < 0.1);
    }

    #[test]
    fn perpendicular_segments_stay_apart() {
        let img = synthetic::square(120, 120, 60.0, 60.0, 70.0, 0.0, 30.0, 220.0).unwrap();
        let segs = detect(&img, &DetectorParams::default()).unwrap();
        assert_eq!(segs.len(), 4);
        let params = DetectorParams::default();
        for i in 0..4 {
            for j in i + 1..4 {
                assert!(!can_merge(&segs[i], &segs[j], &params));
            }
        }
    }

    #[test]
    fn reversed_duplicate_still_merges() {
        let field = vertical_edge_field(20..120, &[]);
        let a = grow_at(&field, 40).unwrap();
        let mut b = grow_at(&field, 95).unwrap();
        b.state = b.state.reversed();
        std::mem::swap(&mut b.p1, &mut b.p2);
        let merged = merge_segments(vec![a, b], &DetectorParams::default());
        assert_eq!(merged.len(), 1);
        assert!(merged[0].length > 95.0);
    }

    #[test]
    fn fusion_of_diagonal_states_is_inverse_variance_mean() {
        let v1 = Vector4::new(1.0, 2.0, 0.5, -3.0);
        let v2 = Vector4::new(0.8, 2.5, 0.7, -2.0);
        let p1 = Vector4::new(0.1, 4.0, 0.3, 1.0);
        let p2 = Vector4::new(0.3, 1.0, 0.1, 1.0);
        let s1 = LineState::new(v1, Matrix4::from_diagonal(&p1));
        let s2 = LineState::new(v2, Matrix4::from_diagonal(&p2));
        let f = fuse_states(&s1, &s2).unwrap();
        for k in 0..4 {
            let w1 = 1.0 / p1[k];
            let w2 = 1.0 / p2[k];
            assert_abs_diff_eq!(
                f.params[k],
                (w1 * v1[k] + w2 * v2[k]) / (w1 + w2),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(f.covariance[(k, k)], 1.0 / (w1 + w2), epsilon = 1e-12);
        }
        assert!(fuse_states(&s1, &LineState::new(v2, Matrix4::zeros())).is_none());
    }

    #[test]
    fn merging_is_idempotent_and_never_adds() {
        let img = synthetic::polygons(
            160,
            160,
            25.0,
            &[
                (
                    synthetic::square_corners(55.0, 60.0, 50.0, 0.2).to_vec(),
                    200.0,
                ),
                (
                    synthetic::square_corners(115.0, 100.0, 40.0, -0.5).to_vec(),
                    120.0,
                ),
            ],
        )
        .unwrap();
        let field = field_of(&img);
        let params = DetectorParams::default();
        let mut claimed = ClaimedMask::new(field.width(), field.height());
        let raw: Vec<Segment> = find_seeds(&field, &params)
            .iter()
            .filter_map(|s| grow_segment(&field, s, &params, &mut claimed))
            .collect();
        let once = merge_segments(raw.clone(), &params);
        assert!(once.len() <= raw.len());
        let twice = merge_segments(once.clone(), &params);
        assert_eq!(once, twice);
    }

    #[test]
    fn detection_is_deterministic_across_thread_counts() {
        let img = synthetic::square(100, 90, 50.0, 45.0, 52.0, 0.7, 10.0, 230.0).unwrap();
        let params = DetectorParams::default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| detect(&img, &params).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one, detect(&img, &params).unwrap());
        for w in one.windows(2) {
            assert!(w[0].length >= w[1].length);
        }
    }

    #[test]
    fn detection_input_validation() {
        let tiny = GrayImage::filled(7, 20, 1.0).unwrap();
        assert!(matches!(
            detect(&tiny, &DetectorParams::default()),
            Err(Error::InvalidInput(_))
        ));
        let img = GrayImage::filled(20, 20, 1.0).unwrap();
        let bad = DetectorParams {
            delta_t: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            detect(&img, &bad),
            Err(Error::InvalidConfiguration(_))
        ));
        assert!(detect(&img, &DetectorParams::default()).unwrap().is_empty());
    }
}
