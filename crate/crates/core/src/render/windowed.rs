use serde::{Deserialize, Serialize};

use crate::scene::Rgb8;

use super::Frame;

/// Pixel polyline drawn over a snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stroke2d {
    pub points: Vec<(i32, i32)>,
    pub stroke_px: u32,
}

impl Stroke2d {
    pub fn new(points: Vec<(i32, i32)>) -> Self {
        Stroke2d { points, stroke_px: 1 }
    }
}

/// Copy of `snapshot` with red Bresenham strokes drawn on top. Pixels
/// outside the frame are clipped.
pub fn composite_windowed(snapshot: &Frame, strokes: &[Stroke2d]) -> Frame {
    let mut out = snapshot.clone();
    for stroke in strokes {
        let brush = stroke.stroke_px.max(1) as i64;
        let mut stamp = |x: i64, y: i64| {
            let lo = -(brush - 1) / 2;
            for dy in lo..lo + brush {
                for dx in lo..lo + brush {
                    let (px, py) = (x + dx, y + dy);
                    if px >= 0 && py >= 0 && px < out.width as i64 && py < out.height as i64 {
                        out.set_pixel(px as u32, py as u32, Rgb8::RED);
                    }
                }
            }
        };
        match stroke.points.as_slice() {
            [] => {}
            [p] => stamp(p.0 as i64, p.1 as i64),
            pts => {
                for seg in pts.windows(2) {
                    bresenham(seg[0], seg[1], &mut stamp);
                }
            }
        }
    }
    out
}

fn bresenham(a: (i32, i32), b: (i32, i32), plot: &mut impl FnMut(i64, i64)) {
    let (mut x0, mut y0) = (a.0 as i64, a.1 as i64);
    let (x1, y1) = (b.0 as i64, b.1 as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        plot(x0, y0);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rig::RigMode;

    fn snapshot() -> Frame {
        Frame::filled(200, 100, Rgb8(10, 20, 30), RigMode::Free)
    }

    #[test]
    fn no_strokes_is_identity() {
        assert_eq!(composite_windowed(&snapshot(), &[]), snapshot());
    }

    #[test]
    fn horizontal_stroke_pixel_count() {
        let snap = snapshot();
        let out = composite_windowed(&snap, &[Stroke2d::new(vec![(0, 10), (100, 10)])]);
        assert_eq!(out.diff_count(&snap), 101);
        assert_eq!(snap, snapshot());
    }

    #[test]
    fn out_of_bounds_stroke_clipped() {
        let snap = snapshot();
        let out = composite_windowed(&snap, &[Stroke2d { points: vec![(-50, -20), (250, 130)], stroke_px: 3 }]);
        assert!(out.is_consistent());
        assert!(out.diff_count(&snap) > 0);
    }

    #[test]
    fn diagonal_is_eight_connected() {
        let snap = snapshot();
        let out = composite_windowed(&snap, &[Stroke2d::new(vec![(0, 0), (30, 17)])]);
        assert_eq!(out.diff_count(&snap), 31);
    }
}
