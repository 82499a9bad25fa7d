//! Image loading and the JSON segment format.
//!
//! Segments are exchanged as `{"segments": [...]}` where each record stores
//! its endpoints, the line parameters, the upper triangle of the covariance
//! (row-major), the support count, the length and the origin pyramid level.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};
use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::GrayImage;
use crate::line_model::LineState;
use crate::segment::Segment;
use crate::Point;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub a: f64,
    pub x0: f64,
    pub b: f64,
    pub y0: f64,
    pub cov: [f64; 10],
    pub n_support: usize,
    pub length: f64,
    pub level: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentFile {
    pub segments: Vec<SegmentRecord>,
}

impl From<&Segment> for SegmentRecord {
    fn from(s: &Segment) -> Self {
        let p = &s.state.params;
        let c = &s.state.covariance;
        let mut cov = [0.0; 10];
        let mut n = 0;
        for r in 0..4 {
            for col in r..4 {
                cov[n] = c[(r, col)];
                n += 1;
            }
        }
        SegmentRecord {
            x1: s.p1.x,
            y1: s.p1.y,
            x2: s.p2.x,
            y2: s.p2.y,
            a: p[0],
            x0: p[1],
            b: p[2],
            y0: p[3],
            cov,
            n_support: s.n_support,
            length: s.length,
            level: s.level,
        }
    }
}

impl TryFrom<&SegmentRecord> for Segment {
    type Error = Error;

    fn try_from(r: &SegmentRecord) -> Result<Segment> {
        let values = [r.x1, r.y1, r.x2, r.y2, r.a, r.x0, r.b, r.y0, r.length];
        if values.iter().chain(r.cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Schema("non-finite value in segment record".into()));
        }
        if r.a == 0.0 && r.b == 0.0 {
            return Err(Error::Schema("segment direction is zero".into()));
        }
        let mut covariance = Matrix4::zeros();
        let mut n = 0;
        for row in 0..4 {
            for col in row..4 {
                covariance[(row, col)] = r.cov[n];
                covariance[(col, row)] = r.cov[n];
                n += 1;
            }
        }
        let mut state = LineState::new(Vector4::new(r.a, r.x0, r.b, r.y0), covariance);
        let p1 = Point::new(r.x1, r.y1);
        let p2 = Point::new(r.x2, r.y2);
        state.t_neg = state.project(&p1);
        state.t_pos = state.project(&p2);
        Ok(Segment {
            p1,
            p2,
            state,
            n_support: r.n_support,
            length: r.length,
            level: r.level,
            support: Vec::new(),
        })
    }
}

pub fn segments_to_json(segments: &[Segment]) -> Result<String> {
    let file = SegmentFile {
        segments: segments.iter().map(SegmentRecord::from).collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn segments_from_json(text: &str) -> Result<Vec<Segment>> {
    let file: SegmentFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    file.segments.iter().map(Segment::try_from).collect()
}

pub fn write_segments(path: impl AsRef<Path>, segments: &[Segment]) -> Result<()> {
    fs::write(path, segments_to_json(segments)?)?;
    Ok(())
}

pub fn read_segments(path: impl AsRef<Path>) -> Result<Vec<Segment>> {
    segments_from_json(&fs::read_to_string(path)?)
}

fn from_dynamic(img: DynamicImage) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => GrayImage::from_luma8(w, h, buf.as_raw()),
        DynamicImage::ImageLuma16(buf) => GrayImage::new(
            w,
            h,
            buf.as_raw().iter().map(|&v| v as f64 / 257.0).collect(),
        ),
        other => GrayImage::from_rgb8(w, h, other.to_rgb8().as_raw()),
    }
}

/// Decodes a PNG or PNM image; color input is converted to luma.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    let img = image::load_from_memory(bytes)?;
    from_dynamic(img)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let img = image::open(path)?;
    from_dynamic(img)
}

fn to_buffer(image: &GrayImage) -> Result<image::GrayImage> {
    image::GrayImage::from_raw(
        image.width() as u32,
        image.height() as u32,
        image.to_luma8(),
    )
    .ok_or_else(|| Error::InvalidInput("image buffer size mismatch".into()))
}

/// Saves an 8-bit copy; the format follows the file extension.
pub fn save_image(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    to_buffer(image)?.save(path)?;
    Ok(())
}

pub fn encode_png(image: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    to_buffer(image)?.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}
