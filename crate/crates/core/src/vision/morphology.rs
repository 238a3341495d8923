use crate::image::{BinaryMask, BoundingBox};

/// Integer offsets inside a disc of the given radius.
pub fn disc_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

fn clamp_index(mask: &BinaryMask, x: isize, y: isize) -> usize {
    let cx = x.clamp(0, mask.width as isize - 1) as usize;
    let cy = y.clamp(0, mask.height as isize - 1) as usize;
    cy * mask.width + cx
}

/// Dilation by a disc, clamp-to-edge borders.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let offsets = disc_offsets(radius);
    let mut out = BinaryMask::new(mask.width, mask.height);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if !mask.get(x, y) {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < mask.width && (ny as usize) < mask.height {
                    out.set(nx as usize, ny as usize, true);
                }
            }
        }
    }
    out
}

/// Erosion by a disc, clamp-to-edge borders (a full mask stays full).
pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let offsets = disc_offsets(radius);
    BinaryMask::from_fn(mask.width, mask.height, |x, y| {
        mask.get(x, y)
            && offsets
                .iter()
                .all(|&(dx, dy)| mask.data[clamp_index(mask, x as isize + dx, y as isize + dy)])
    })
}

/// Filled disc mask.
pub fn disc_mask(width: usize, height: usize, cx: f64, cy: f64, radius: f64) -> BinaryMask {
    let r2 = radius * radius;
    BinaryMask::from_fn(width, height, |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        dx * dx + dy * dy <= r2
    })
}

/// One 8-connected component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub mask: BinaryMask,
    pub bbox: BoundingBox,
    pub area: usize,
    /// Raster index of the component's first pixel in scan order.
    pub first_index: usize,
}

/// 8-connected components, largest first; equal areas keep scan order.
pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    let (w, h) = mask.dims();
    let mut label = vec![usize::MAX; w * h];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data[start] || label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut m = BinaryMask::new(w, h);
        let mut bb = BoundingBox::new(start % w, start / w, start % w, start / w);
        let mut area = 0;
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            m.data[i] = true;
            area += 1;
            bb = BoundingBox::new(bb.x0.min(x), bb.y0.min(y), bb.x1.max(x), bb.y1.max(y));
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.data[j] && label[j] == usize::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        comps.push(Component {
            mask: m,
            bbox: bb,
            area,
            first_index: start,
        });
    }
    comps.sort_by(|a, b| b.area.cmp(&a.area).then(a.first_index.cmp(&b.first_index)));
    comps
}
