//! Two-pass connected-component labeling with a union-find equivalence table.

use serde::{Deserialize, Serialize};

use crate::image::{BinaryMask, BoundingBox};

/// Pixel adjacency; serialized as the neighbor count `4` or `8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub fn from_neighbors(n: u8) -> Option<Self> {
        match n {
            4 => Some(Connectivity::Four),
            8 => Some(Connectivity::Eight),
            _ => None,
        }
    }

    pub fn neighbors(self) -> u8 {
        match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(n: u8) -> Result<Self, String> {
        Connectivity::from_neighbors(n)
            .ok_or_else(|| format!("connectivity must be 4 or 8, got {n}"))
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        c.neighbors()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub bbox: BoundingBox,
    /// Number of true pixels.
    pub area: u64,
}

/// Per-pixel component labels (0 = background) plus the component table.
/// `labels[i] == j + 1` means pixel `i` belongs to `components[j]`.
#[derive(Debug, Clone)]
pub struct Labeling {
    pub labels: Vec<u32>,
    pub components: Vec<Component>,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        // slot 0 is the background label
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Components sorted by area descending; equal areas are ordered by the
/// top-left corner of their box, `y` first, then by the raster position of
/// each component's first pixel.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Component> {
    label(mask, connectivity).components
}

pub fn label(mask: &BinaryMask, connectivity: Connectivity) -> Labeling {
    let w = mask.width() as usize;
    let h = mask.height() as usize;
    let bits = mask.bits();
    let mut labels = vec![0u32; w * h];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !bits[i] {
                continue;
            }
            let mut current = 0u32;
            let mut visit = |n: u32, sets: &mut DisjointSet| {
                if n != 0 {
                    current = if current == 0 {
                        sets.find(n)
                    } else {
                        sets.union(current, n)
                    };
                }
            };
            if x > 0 {
                visit(labels[i - 1], &mut sets);
            }
            if y > 0 {
                let up = i - w;
                visit(labels[up], &mut sets);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        visit(labels[up - 1], &mut sets);
                    }
                    if x + 1 < w {
                        visit(labels[up + 1], &mut sets);
                    }
                }
            }
            labels[i] = if current == 0 { sets.make() } else { current };
        }
    }

    // Resolve provisional labels and gather statistics per root.
    let mut root_slot = vec![u32::MAX; sets.parent.len()];
    let mut stats: Vec<(u32, u32, u32, u32, u64)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if labels[i] == 0 {
                continue;
            }
            let root = sets.find(labels[i]) as usize;
            if root_slot[root] == u32::MAX {
                root_slot[root] = stats.len() as u32;
                stats.push((x as u32, y as u32, x as u32, y as u32, 0));
            }
            let s = &mut stats[root_slot[root] as usize];
            s.0 = s.0.min(x as u32);
            s.1 = s.1.min(y as u32);
            s.2 = s.2.max(x as u32);
            s.3 = s.3.max(y as u32);
            s.4 += 1;
            labels[i] = root_slot[root];
        }
    }

    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by_key(|&j| {
        let (x0, y0, _, _, area) = stats[j];
        (std::cmp::Reverse(area), y0, x0)
    });
    let mut rank = vec![0u32; stats.len()];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r as u32 + 1;
    }
    // Pixels now hold slot indices, so slot 0 is told apart from background by the mask.
    for (i, l) in labels.iter_mut().enumerate() {
        if bits[i] {
            *l = rank[*l as usize];
        }
    }

    let components = order
        .iter()
        .map(|&j| {
            let (x0, y0, x1, y1, area) = stats[j];
            Component {
                bbox: BoundingBox::from_corners(x0, y0, x1, y1),
                area,
            }
        })
        .collect();
    Labeling { labels, components }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let bits = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        BinaryMask::new(w, h, bits).unwrap()
    }

    #[test]
    fn empty_mask_has_no_components() {
        assert!(connected_components(&BinaryMask::empty(7, 5), Connectivity::Eight).is_empty());
    }

    #[test]
    fn single_block() {
        let mut m = BinaryMask::empty(12, 12);
        for y in 3..8 {
            for x in 2..7 {
                m.set(x, y, true);
            }
        }
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(
            cc,
            vec![Component {
                bbox: BoundingBox::new(2, 3, 5, 5).unwrap(),
                area: 25
            }]
        );
    }

    #[test]
    fn diagonal_neighbors_depend_on_connectivity() {
        let m = mask_from(&["#.", ".#"]);
        let eight = connected_components(&m, Connectivity::Eight);
        assert_eq!(eight.len(), 1);
        assert_eq!(eight[0].area, 2);
        let four = connected_components(&m, Connectivity::Four);
        assert_eq!(four.iter().map(|c| c.area).collect::<Vec<_>>(), vec![1, 1]);
        // tie broken by top-left: (0,0) before (1,1)
        assert_eq!((four[0].bbox.x, four[0].bbox.y), (0, 0));
    }

    #[test]
    fn u_shape_merges_late() {
        let m = mask_from(&["#...#", "#...#", "#####"]);
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(cc.len(), 1);
        assert_eq!(cc[0].area, 9);
        assert_eq!(cc[0].bbox, BoundingBox::new(0, 0, 5, 3).unwrap());
    }

    #[test]
    fn sorted_by_area_then_position() {
        let m = mask_from(&["##..#", ".....", "#.###"]);
        let cc = connected_components(&m, Connectivity::Eight);
        let summary: Vec<_> = cc.iter().map(|c| (c.area, c.bbox.x, c.bbox.y)).collect();
        assert_eq!(summary, vec![(3, 2, 2), (2, 0, 0), (1, 4, 0), (1, 0, 2)]);
    }

    /// Flood fill reference.
    fn flood(mask: &BinaryMask, conn: Connectivity) -> Vec<(u64, BoundingBox)> {
        let (w, h) = (mask.width() as i64, mask.height() as i64);
        let mut seen = vec![false; (w * h) as usize];
        let mut out = Vec::new();
        let offsets: Vec<(i64, i64)> = match conn {
            Connectivity::Four => vec![(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => (-1..=1)
                .flat_map(|dy| (-1..=1).map(move |dx| (dx, dy)))
                .filter(|&d| d != (0, 0))
                .collect(),
        };
        for sy in 0..h {
            for sx in 0..w {
                if !mask.get(sx as u32, sy as u32) || seen[(sy * w + sx) as usize] {
                    continue;
                }
                let mut stack = vec![(sx, sy)];
                seen[(sy * w + sx) as usize] = true;
                let (mut x0, mut y0, mut x1, mut y1, mut n) = (sx, sy, sx, sy, 0u64);
                while let Some((x, y)) = stack.pop() {
                    n += 1;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                    for (dx, dy) in &offsets {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx >= 0 && ny >= 0 && nx < w && ny < h {
                            let j = (ny * w + nx) as usize;
                            if !seen[j] && mask.get(nx as u32, ny as u32) {
                                seen[j] = true;
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
                out.push((
                    n,
                    BoundingBox::from_corners(x0 as u32, y0 as u32, x1 as u32, y1 as u32),
                ));
            }
        }
        out.sort_by_key(|(n, b)| (std::cmp::Reverse(*n), b.y, b.x));
        out
    }

    proptest! {
        #[test]
        fn matches_flood_fill(w in 1u32..20, h in 1u32..20, seed in proptest::collection::vec(any::<bool>(), 400), eight in any::<bool>()) {
            let bits = seed[..(w * h) as usize].to_vec();
            let m = BinaryMask::new(w, h, bits).unwrap();
            let conn = if eight { Connectivity::Eight } else { Connectivity::Four };
            let lab = label(&m, conn);
            let got: Vec<_> = lab.components.iter().map(|c| (c.area, c.bbox)).collect();
            prop_assert_eq!(got, flood(&m, conn));
            for (i, &l) in lab.labels.iter().enumerate() {
                prop_assert_eq!(l != 0, m.bits()[i]);
            }
        }
    }
}
