//! Anti-aliased stroke rasterization for stripe masks (1.0 = stripe).

use crate::minutiae::{Minutia, MinutiaError};
use crate::raster::{Point2, Raster};

fn segment_distance(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.dist(Point2::new(a.x + t * dx, a.y + t * dy))
}

/// Max-blends a stroke of the given half width along a polyline.
pub fn stroke_polyline(canvas: &mut Raster<f32>, points: &[Point2<f64>], half_width: f64) {
    if points.is_empty() || canvas.width() == 0 || canvas.height() == 0 {
        return;
    }
    let pad = half_width + 1.0;
    for seg in points.windows(2).chain(std::iter::once(&points[..1]).filter(|_| points.len() == 1)) {
        let (a, b) = (seg[0], *seg.last().unwrap());
        let x0 = (a.x.min(b.x) - pad).floor().max(0.0) as usize;
        let y0 = (a.y.min(b.y) - pad).floor().max(0.0) as usize;
        let x1 = ((a.x.max(b.x) + pad).ceil().max(0.0) as usize).min(canvas.width() - 1);
        let y1 = ((a.y.max(b.y) + pad).ceil().max(0.0) as usize).min(canvas.height() - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = segment_distance(Point2::new(x as f64, y as f64), a, b);
                let v = (half_width + 0.5 - d).clamp(0.0, 1.0) as f32;
                if v > canvas.get(x, y) {
                    canvas.set(x, y, v);
                }
            }
        }
    }
}

/// Draws a minutia's strokes into a fresh `size`×`size` mask.
pub fn render_minutia(m: &Minutia, size: usize, half_width: f64) -> Result<Raster<f32>, MinutiaError> {
    let mut patch = Raster::filled(size, size, 0.0f32);
    let scale = size.saturating_sub(1) as f64;
    for line in m.stroke_geometry()? {
        let pts: Vec<_> = line.iter().map(|k| Point2::new(k.x * scale, k.y * scale)).collect();
        stroke_polyline(&mut patch, &pts, half_width);
    }
    Ok(patch)
}
