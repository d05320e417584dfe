use crate::scene::{Rgb8, Scene};

use super::raster::Raster;
use super::SelectionSet;

/// Outline thickness in pixels around a selected object's visible region.
const DILATION: i64 = 2;

/// Pixel indices within `DILATION` pixels (Chebyshev) of the visible region
/// of `object`, excluding the region itself, in ascending order.
pub fn outline_pixels(ids: &[u32], width: u32, height: u32, object: u32) -> Vec<usize> {
    let (w, h) = (width as i64, height as i64);
    let mut mark = vec![false; ids.len()];
    for (idx, _) in ids.iter().enumerate().filter(|(_, &id)| id == object) {
        let (x, y) = ((idx as i64) % w, (idx as i64) / w);
        for dy in -DILATION..=DILATION {
            let ny = y + dy;
            if ny < 0 || ny >= h {
                continue;
            }
            for dx in -DILATION..=DILATION {
                let nx = x + dx;
                if nx < 0 || nx >= w {
                    continue;
                }
                let n = (ny * w + nx) as usize;
                if ids[n] != object {
                    mark[n] = true;
                }
            }
        }
    }
    mark.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

/// Recolors the silhouette ring of every selected, visible object.
pub fn outline_pass(raster: &mut Raster, scene: &Scene, selection: &SelectionSet) {
    if selection.is_empty() {
        return;
    }
    let mut ring = Vec::new();
    for (oi, obj) in scene.objects.iter().enumerate() {
        if selection.contains(&obj.object_id) {
            ring.extend(outline_pixels(&raster.ids, raster.width, raster.height, oi as u32));
        }
    }
    for idx in ring {
        raster.set_color(idx, Rgb8::OUTLINE_YELLOW);
    }
}
