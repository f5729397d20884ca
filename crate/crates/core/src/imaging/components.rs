use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{BinaryMask, Box, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            4 => Some(Self::Four),
            8 => Some(Self::Eight),
            _ => None,
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Self::Four => 4,
            Self::Eight => 8,
        }
    }
}

/// Statistics of one connected foreground region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRegion {
    pub label: u32,
    pub area: usize,
    pub bbox: Box,
    pub centroid: (f64, f64),
    /// Mean source intensity, 0 when no source raster was supplied.
    pub mean_intensity: f64,
    pub circularity: f64,
    /// Member pixel indices (`y * width + x`), ascending.
    #[serde(skip)]
    pub pixels: Vec<usize>,
}

impl LabeledRegion {
    pub fn mask(&self, width: u32, height: u32) -> BinaryMask {
        let mut bits = vec![false; width as usize * height as usize];
        for &p in &self.pixels {
            bits[p] = true;
        }
        BinaryMask::from_bits(width, height, bits).expect("region pixels lie inside the mask")
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass union-find labelling.
///
/// Labels start at 1 and follow raster-scan order of each region's first
/// pixel. When `source` is given it must match the mask's shape and supplies
/// `mean_intensity` (channel 0).
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity, source: Option<&Raster>) -> Vec<LabeledRegion> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let bits = mask.bits();
    let mut provisional = vec![0u32; w * h];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            if !bits[y * w + x] {
                continue;
            }
            let mut neighbours = [0u32; 4];
            let mut n = 0;
            let mut push = |l: u32| {
                if l != 0 {
                    neighbours[n] = l;
                    n += 1;
                }
            };
            if x > 0 {
                push(provisional[y * w + x - 1]);
            }
            if y > 0 {
                push(provisional[(y - 1) * w + x]);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        push(provisional[(y - 1) * w + x - 1]);
                    }
                    if x + 1 < w {
                        push(provisional[(y - 1) * w + x + 1]);
                    }
                }
            }
            let label = if n == 0 {
                sets.make()
            } else {
                let first = neighbours[0];
                for &other in &neighbours[1..n] {
                    sets.union(first, other);
                }
                first
            };
            provisional[y * w + x] = label;
        }
    }

    // Final labels in order of first appearance.
    let mut final_label = vec![0u32; sets.parent.len()];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (idx, &l) in provisional.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let root = sets.find(l) as usize;
        if final_label[root] == 0 {
            members.push(Vec::new());
            final_label[root] = members.len() as u32;
        }
        members[final_label[root] as usize - 1].push(idx);
    }

    members
        .into_iter()
        .enumerate()
        .map(|(i, pixels)| region_stats(i as u32 + 1, pixels, mask, source))
        .collect()
}

fn region_stats(label: u32, pixels: Vec<usize>, mask: &BinaryMask, source: Option<&Raster>) -> LabeledRegion {
    let w = mask.width() as usize;
    let h = mask.height() as usize;
    let bits = mask.bits();
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    let (mut sx, mut sy, mut si) = (0f64, 0f64, 0f64);
    let mut exposed = 0usize;
    for &p in &pixels {
        let (x, y) = (p % w, p / w);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x + 1);
        y1 = y1.max(y + 1);
        sx += x as f64;
        sy += y as f64;
        if let Some(src) = source {
            si += src.get(x as u32, y as u32, 0) as f64;
        }
        exposed += usize::from(x == 0 || !bits[p - 1]);
        exposed += usize::from(x + 1 == w || !bits[p + 1]);
        exposed += usize::from(y == 0 || !bits[p - w]);
        exposed += usize::from(y + 1 == h || !bits[p + w]);
    }
    let area = pixels.len();
    // Boundary edge count overestimates Euclidean length of a digital curve by 4/π on average.
    let perimeter = exposed as f64 * PI / 4.0;
    let circularity = (4.0 * PI * area as f64 / (perimeter * perimeter)).clamp(0.0, 1.0);
    LabeledRegion {
        label,
        area,
        bbox: Box { x0: x0 as u32, y0: y0 as u32, x1: x1 as u32, y1: y1 as u32 },
        centroid: (sx / area as f64, sy / area as f64),
        mean_intensity: if source.is_some() { si / area as f64 } else { 0.0 },
        circularity,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_single() {
        assert!(connected_components(&BinaryMask::new(5, 5), Connectivity::Eight, None).is_empty());
        let mut m = BinaryMask::new(5, 5);
        m.set(2, 3, true);
        let r = connected_components(&m, Connectivity::Four, None);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].area, 1);
        assert_eq!(r[0].bbox, Box { x0: 2, y0: 3, x1: 3, y1: 4 });
        assert_eq!(r[0].centroid, (2.0, 3.0));
    }

    #[test]
    fn diagonal_pair() {
        let mut m = BinaryMask::new(4, 4);
        m.set(1, 1, true);
        m.set(2, 2, true);
        assert_eq!(connected_components(&m, Connectivity::Eight, None).len(), 1);
        assert_eq!(connected_components(&m, Connectivity::Four, None).len(), 2);
    }

    #[test]
    fn u_shape_merges_late() {
        // Both arms get separate provisional labels and merge at the bottom.
        let m = BinaryMask::from_fn(5, 4, |x, y| x == 0 || x == 4 || y == 3);
        let r = connected_components(&m, Connectivity::Four, None);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].area, 4 + 4 + 3);
    }

    #[test]
    fn labels_follow_scan_order() {
        let m = BinaryMask::from_fn(6, 3, |x, y| (y == 0 && x == 4) || (y == 2 && x == 0));
        let r = connected_components(&m, Connectivity::Eight, None);
        assert_eq!(r[0].bbox.x0, 4);
        assert_eq!(r[1].bbox.x0, 0);
        assert_eq!((r[0].label, r[1].label), (1, 2));
    }

    #[test]
    fn disk_is_nearly_circular_and_line_is_not() {
        let disk = BinaryMask::from_fn(40, 40, |x, y| {
            let (dx, dy) = (x as f64 - 20.0, y as f64 - 20.0);
            dx * dx + dy * dy <= 64.0
        });
        let r = &connected_components(&disk, Connectivity::Eight, None)[0];
        assert!(r.circularity > 0.85, "{}", r.circularity);
        let line = BinaryMask::from_fn(40, 5, |_, y| y == 2);
        let r = &connected_components(&line, Connectivity::Eight, None)[0];
        assert!(r.circularity < 0.2);
    }

    #[test]
    fn mean_intensity_from_source() {
        let m = BinaryMask::from_fn(2, 1, |_, _| true);
        let src = Raster::new(2, 1, 1, vec![10, 30]).unwrap();
        let r = connected_components(&m, Connectivity::Four, Some(&src));
        assert_eq!(r[0].mean_intensity, 20.0);
    }
}
