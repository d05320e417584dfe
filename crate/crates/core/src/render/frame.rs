use serde::{Deserialize, Serialize};

use crate::rig::RigMode;
use crate::scene::Rgb8;

/// RGB8 image, row-major, top row first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub camera_label: RigMode,
    /// Presentation timestamp in milliseconds.
    pub pts: u64,
}

impl Frame {
    pub fn filled(width: u32, height: u32, color: Rgb8, camera_label: RigMode) -> Frame {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&[color.0, color.1, color.2]);
        }
        Frame { width, height, pixels, camera_label, pts: 0 }
    }

    pub fn with_pts(mut self, pts: u64) -> Frame {
        self.pts = pts;
        self
    }

    pub fn pixel(&self, x: u32, y: u32) -> Rgb8 {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        Rgb8(self.pixels[i], self.pixels[i + 1], self.pixels[i + 2])
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, c: Rgb8) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&[c.0, c.1, c.2]);
    }

    pub fn is_consistent(&self) -> bool {
        self.pixels.len() == self.width as usize * self.height as usize * 3
    }

    /// Count of pixels whose colors differ between two same-sized frames.
    pub fn diff_count(&self, other: &Frame) -> usize {
        self.pixels.chunks_exact(3).zip(other.pixels.chunks_exact(3)).filter(|(a, b)| a != b).count()
    }

    /// RGBA copy for canvas `ImageData`.
    pub fn to_rgba(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() / 3 * 4);
        for px in self.pixels.chunks_exact(3) {
            out.extend_from_slice(&[px[0], px[1], px[2], 255]);
        }
        out
    }
}

/// Box-filter downscale by integer factors. Returns `None` when the target
/// size does not evenly divide the source.
pub fn downscale_box(src: &Frame, width: u32, height: u32) -> Option<Frame> {
    if width == 0 || height == 0 || src.width % width != 0 || src.height % height != 0 {
        return None;
    }
    let (fx, fy) = ((src.width / width) as usize, (src.height / height) as usize);
    if fx == 1 && fy == 1 {
        return Some(src.clone());
    }
    let n = (fx * fy) as u32;
    let sw = src.width as usize;
    let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
    for oy in 0..height as usize {
        for ox in 0..width as usize {
            let mut acc = [0u32; 3];
            for dy in 0..fy {
                let row = (oy * fy + dy) * sw;
                for dx in 0..fx {
                    let i = (row + ox * fx + dx) * 3;
                    acc[0] += src.pixels[i] as u32;
                    acc[1] += src.pixels[i + 1] as u32;
                    acc[2] += src.pixels[i + 2] as u32;
                }
            }
            pixels.extend(acc.iter().map(|&s| ((s + n / 2) / n) as u8));
        }
    }
    Some(Frame { width, height, pixels, camera_label: src.camera_label, pts: src.pts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downscale_averages_blocks() {
        let mut f = Frame::filled(4, 2, Rgb8(0, 0, 0), RigMode::Free);
        f.set_pixel(0, 0, Rgb8(255, 100, 4));
        f.set_pixel(1, 1, Rgb8(255, 100, 4));
        let d = downscale_box(&f, 2, 1).unwrap();
        assert_eq!(d.pixel(0, 0), Rgb8(128, 50, 2));
        assert_eq!(d.pixel(1, 0), Rgb8(0, 0, 0));
        assert!(downscale_box(&f, 3, 1).is_none());
    }
}
