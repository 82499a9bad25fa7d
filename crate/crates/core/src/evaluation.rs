//! Repeatability measurement between two detections of the same scene.
//!
//! `similarity(AB, CD)` is the area swept between `AB` and its orthogonal
//! projection on `CD`'s supporting line, divided by the projected length, the
//! overlap ratio of the projection with `CD` and `|cos|` of the angle between
//! the segments. Smaller is more similar; configurations where any factor of
//! the denominator vanishes never match and score `+∞`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::GrayImage;
use crate::segment::Segment;
use crate::Point;

/// Default matching threshold on [`distance`].
pub const TAU_DIST: f64 = 50.0;

/// Repeatability statistics of a current detection against a reference one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub n_ref: usize,
    pub n_cur: usize,
    /// Reference segments with a unique, mutual nearest neighbor closer than the threshold.
    pub matched: usize,
    /// Current segments that are not part of a matched pair.
    pub unmatched: usize,
    /// Reference segments that are the nearest neighbor of two or more current segments.
    pub split: usize,
    pub repeatability: f64,
}

impl MatchReport {
    pub const CSV_HEADER: &'static str =
        "frame_index,detected,matched,unmatched,split,repeatability";

    pub fn csv_row(&self, frame_index: usize) -> String {
        format!(
            "{},{},{},{},{},{}",
            frame_index, self.n_cur, self.matched, self.unmatched, self.split, self.repeatability
        )
    }
}

/// Area between a segment and its projection, given the signed offsets of its
/// endpoints and the projected length.
fn swept_area(da: f64, db: f64, projected: f64) -> f64 {
    if da * db >= 0.0 {
        0.5 * (da.abs() + db.abs()) * projected
    } else {
        // the segment crosses the line: two triangles
        0.5 * (da * da + db * db) / (da.abs() + db.abs()) * projected
    }
}

fn similarity_points(a: Point, b: Point, c: Point, d: Point) -> Result<f64> {
    let cd = d - c;
    let cd_len = cd.norm();
    if !(cd_len > 0.0) {
        return Err(Error::InvalidArgument(
            "reference segment has zero length".into(),
        ));
    }
    let u = cd / cd_len;
    let ab = b - a;
    let ab_len = ab.norm();
    if ab_len == 0.0 {
        return Ok(f64::INFINITY);
    }
    let cos = (ab.dot(&u) / ab_len).abs();
    let (ra, rb) = (a - c, b - c);
    let (sa, sb) = (ra.dot(&u), rb.dot(&u));
    let (da, db) = (u.x * ra.y - u.y * ra.x, u.x * rb.y - u.y * rb.x);
    let projected = (sb - sa).abs();

    let (lo, hi) = (sa.min(sb), sa.max(sb));
    let overlap = (hi.min(cd_len) - lo.max(0.0)).max(0.0);
    let union = hi.max(cd_len) - lo.min(0.0);
    let ratio = if union > 0.0 {
        (overlap / union).min(1.0)
    } else {
        0.0
    };

    let denominator = projected * ratio * cos;
    if !(denominator > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(swept_area(da, db, projected) / denominator)
}

/// Asymmetric similarity of `ab` to `cd` (0 for identical segments).
pub fn similarity(ab: &Segment, cd: &Segment) -> Result<f64> {
    similarity_points(ab.p1, ab.p2, cd.p1, cd.p2)
}

/// Symmetric matching distance `sim(AB, CD) + sim(CD, AB)`.
pub fn distance(ab: &Segment, cd: &Segment) -> Result<f64> {
    if !(ab.length > 0.0) {
        return Err(Error::InvalidArgument("segment has zero length".into()));
    }
    Ok(similarity(ab, cd)? + similarity(cd, ab)?)
}

/// Matches `current` against `reference`.
///
/// A reference segment is repeated when its nearest current segment is
/// strictly closer than every other current segment, the reference segment is
/// in turn strictly the closest to it, and their distance is below `tau_dist`.
/// Split counting uses the nearest reference of each current segment, taken
/// among references closer than `tau_dist`.
pub fn match_segments(
    reference: &[Segment],
    current: &[Segment],
    tau_dist: f64,
) -> Result<MatchReport> {
    let (n_ref, n_cur) = (reference.len(), current.len());
    let mut table = vec![f64::INFINITY; n_ref * n_cur];
    for (i, r) in reference.iter().enumerate() {
        for (j, c) in current.iter().enumerate() {
            table[i * n_cur + j] = distance(r, c)?;
        }
    }
    let d = |i: usize, j: usize| table[i * n_cur + j];

    let mut matched = 0;
    for i in 0..n_ref {
        let Some(j) = unique_argmin((0..n_cur).map(|j| d(i, j))) else {
            continue;
        };
        let best = d(i, j);
        let mutual = (0..n_ref).all(|l| l == i || best < d(l, j));
        if mutual && best < tau_dist {
            matched += 1;
        }
    }

    let mut nearest_count = vec![0usize; n_ref];
    for j in 0..n_cur {
        let nearest = (0..n_ref)
            .filter(|&i| d(i, j) < tau_dist)
            .min_by(|&x, &y| d(x, j).total_cmp(&d(y, j)));
        if let Some(i) = nearest {
            nearest_count[i] += 1;
        }
    }
    let split = nearest_count.iter().filter(|&&c| c >= 2).count();

    Ok(MatchReport {
        n_ref,
        n_cur,
        matched,
        unmatched: n_cur - matched,
        split,
        repeatability: if n_ref > 0 {
            matched as f64 / n_ref as f64
        } else {
            0.0
        },
    })
}

/// Index of the strictly smallest finite value, if it is unique.
fn unique_argmin(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    let mut tied = false;
    for (idx, v) in values.enumerate() {
        if !v.is_finite() {
            continue;
        }
        match best {
            None => best = Some((idx, v)),
            Some((_, b)) if v < b => {
                best = Some((idx, v));
                tied = false;
            }
            Some((_, b)) if v == b => tied = true,
            _ => {}
        }
    }
    match (best, tied) {
        (Some((idx, _)), false) => Some(idx),
        _ => None,
    }
}

/// Noise frame `frame`: `(1 + N(0, σ/255))·I + N(0, σ)` with `σ = 5·frame`,
/// clamped to `[0, 255]`. Frame 0 is the input itself.
pub fn add_noise(image: &GrayImage, frame: usize, rng_seed: u64) -> GrayImage {
    if frame == 0 {
        return image.clone();
    }
    let sigma = 5.0 * frame as f64;
    let mut rng =
        ChaCha8Rng::seed_from_u64(rng_seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let multiplicative = Normal::new(0.0, sigma / 255.0).expect("finite sigma");
    let additive = Normal::new(0.0, sigma).expect("finite sigma");
    let data = image
        .pixels()
        .iter()
        .map(|&v| {
            let gain = 1.0 + multiplicative.sample(&mut rng);
            (gain * v + additive.sample(&mut rng)).clamp(0.0, 255.0)
        })
        .collect();
    GrayImage::new(image.width(), image.height(), data).expect("same geometry")
}

/// Global illumination change, clamped to `[0, 255]`.
pub fn apply_gain(image: &GrayImage, gain: f64) -> GrayImage {
    image
        .map(|v| (v * gain).clamp(0.0, 255.0))
        .expect("same geometry")
}

/// Segment counts per length bin `[k·w, (k+1)·w)`.
pub fn length_histogram(segments: &[Segment], bin_width: f64) -> Result<BTreeMap<usize, usize>> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bin width must be positive, got {bin_width}"
        )));
    }
    let mut bins = BTreeMap::new();
    for s in segments {
        *bins
            .entry((s.length / bin_width).floor() as usize)
            .or_insert(0) += 1;
    }
    Ok(bins)
}
