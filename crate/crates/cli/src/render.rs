use std::fmt::Write;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use dseg::{GrayImage, Segment};

/// Stroke color by segment length.
pub fn length_color(length: f64) -> &'static str {
    if length < 20.0 {
        "gray"
    } else if length <= 100.0 {
        "blue"
    } else {
        "red"
    }
}

/// SVG overlay of `segments` on top of the embedded input image.
///
/// Pixel centers sit at integer coordinates in the detector frame, so lines
/// are shifted by half a pixel to land on the raster.
pub fn svg_overlay(
    image: &GrayImage,
    segments: &[Segment],
    min_length: f64,
) -> dseg::Result<String> {
    let png = dseg::io::encode_png(image)?;
    let (w, h) = (image.width(), image.height());
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        out,
        r#"<image width="{w}" height="{h}" style="image-rendering:pixelated" href="data:image/png;base64,{}"/>"#,
        STANDARD.encode(png)
    );
    for s in segments.iter().filter(|s| s.length >= min_length) {
        let _ = writeln!(
            out,
            r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{}" stroke-width="1.5"/>"#,
            s.p1.x + 0.5,
            s.p1.y + 0.5,
            s.p2.x + 0.5,
            s.p2.y + 0.5,
            length_color(s.length)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
