//! Anti-aliased synthetic scenes with known geometry.
//!
//! Pixels are shaded by their exact-ish coverage of a polygon, estimated on a
//! regular sub-pixel grid. Pixel `(x, y)` covers `[x - 0.5, x + 0.5] × [y - 0.5, y + 0.5]`.

use crate::error::Result;
use crate::gradient::GrayImage;
use crate::Point;

const SUPERSAMPLE: usize = 16;

/// Convex polygon given counter-clockwise or clockwise; returns the inside test.
fn convex_contains(poly: &[Point], p: &Point) -> bool {
    let mut sign = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if cross == 0.0 {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

/// Renders convex polygons over a uniform background; later polygons paint over earlier ones.
pub fn polygons(
    width: usize,
    height: usize,
    background: f64,
    shapes: &[(Vec<Point>, f64)],
) -> Result<GrayImage> {
    let boxes: Vec<(f64, f64, f64, f64)> = shapes
        .iter()
        .map(|(poly, _)| {
            poly.iter().fold(
                (
                    f64::INFINITY,
                    f64::INFINITY,
                    f64::NEG_INFINITY,
                    f64::NEG_INFINITY,
                ),
                |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
            )
        })
        .collect();
    let n = SUPERSAMPLE as f64;
    GrayImage::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let mut acc = 0.0;
        for sy in 0..SUPERSAMPLE {
            for sx in 0..SUPERSAMPLE {
                let p = Point::new(
                    xf - 0.5 + (sx as f64 + 0.5) / n,
                    yf - 0.5 + (sy as f64 + 0.5) / n,
                );
                let mut value = background;
                for ((poly, fill), (bx0, by0, bx1, by1)) in shapes.iter().zip(&boxes) {
                    if p.x >= *bx0
                        && p.x <= *bx1
                        && p.y >= *by0
                        && p.y <= *by1
                        && convex_contains(poly, &p)
                    {
                        value = *fill;
                    }
                }
                acc += value;
            }
        }
        acc / (n * n)
    })
}

/// Corners of a square of side `side` centered at `(cx, cy)`, rotated by `angle` radians.
pub fn square_corners(cx: f64, cy: f64, side: f64, angle: f64) -> [Point; 4] {
    let h = side / 2.0;
    let (s, c) = angle.sin_cos();
    [(-h, -h), (h, -h), (h, h), (-h, h)]
        .map(|(dx, dy)| Point::new(cx + c * dx - s * dy, cy + s * dx + c * dy))
}

/// Filled square on a uniform background.
#[allow(clippy::too_many_arguments)]
pub fn square(
    width: usize,
    height: usize,
    cx: f64,
    cy: f64,
    side: f64,
    angle: f64,
    background: f64,
    foreground: f64,
) -> Result<GrayImage> {
    let corners = square_corners(cx, cy, side, angle).to_vec();
    polygons(width, height, background, &[(corners, foreground)])
}

/// Vertical edge at abscissa `x_edge`, dark on the left, from row `y_start` to `y_end`.
///
/// Over the rows listed in `gaps` the bright side starts `recess` pixels
/// further right, so the edge at `x_edge` is interrupted. A recess wider than
/// the image removes the bright side from those rows altogether.
#[allow(clippy::too_many_arguments)]
pub fn vertical_edge(
    width: usize,
    height: usize,
    x_edge: f64,
    rows: std::ops::Range<usize>,
    gaps: &[std::ops::Range<usize>],
    recess: f64,
    background: f64,
    foreground: f64,
) -> Result<GrayImage> {
    let right = width as f64 + 1.0;
    let band = |x0: f64, y0: usize, y1: usize| {
        let (y0, y1) = (y0 as f64 - 0.5, y1 as f64 - 0.5);
        (
            vec![
                Point::new(x0, y0),
                Point::new(right, y0),
                Point::new(right, y1),
                Point::new(x0, y1),
            ],
            foreground,
        )
    };
    let mut shapes = Vec::new();
    let mut start = rows.start;
    let mut cuts: Vec<_> = gaps.to_vec();
    cuts.sort_by_key(|g| g.start);
    for gap in cuts.iter().chain(std::iter::once(&(rows.end..rows.end))) {
        if gap.start > start {
            shapes.push(band(x_edge, start, gap.start));
        }
        if gap.end > gap.start && x_edge + recess < right {
            shapes.push(band(x_edge + recess, gap.start, gap.end));
        }
        start = gap.end;
    }
    polygons(width, height, background, &shapes)
}
