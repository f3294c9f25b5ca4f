use super::contour::{compactness, contour_curvature, moore_trace, perimeter, Curvature};
use super::BinaryMap;

/// Inclusive bounding box `(r0, c0, r1, c1)`.
pub type BBox = (usize, usize, usize, usize);

/// One 8-connected foreground component.
#[derive(Debug, Clone, PartialEq)]
pub struct SegObject {
    pub id: usize,
    /// Raster-ordered pixel coordinates `(row, col)`.
    pub pixels: Vec<(usize, usize)>,
    pub area: usize,
    pub contour: Vec<(usize, usize)>,
    pub perimeter: f64,
    pub bbox: BBox,
}

impl SegObject {
    /// Builds an object from raster-ordered, 8-connected pixels.
    pub fn from_pixels(id: usize, pixels: Vec<(usize, usize)>) -> Self {
        assert!(!pixels.is_empty(), "object without pixels");
        debug_assert!(pixels.windows(2).all(|w| w[0] < w[1]));
        let bbox = pixels.iter().fold(
            (usize::MAX, usize::MAX, 0, 0),
            |(r0, c0, r1, c1), &(r, c)| (r0.min(r), c0.min(c), r1.max(r), c1.max(c)),
        );
        let (r0, c0, r1, c1) = bbox;
        let (h, w) = (r1 - r0 + 1, c1 - c0 + 1);
        let mut mask = vec![false; h * w];
        for &(r, c) in &pixels {
            mask[(r - r0) * w + (c - c0)] = true;
        }
        let contour = moore_trace(pixels[0], pixels.len(), |r, c| {
            r >= r0 as isize
                && c >= c0 as isize
                && r <= r1 as isize
                && c <= c1 as isize
                && mask[(r as usize - r0) * w + (c as usize - c0)]
        });
        let perimeter = perimeter(&contour);
        SegObject {
            id,
            area: pixels.len(),
            pixels,
            contour,
            perimeter,
            bbox,
        }
    }

    /// True for one-pixel objects, whose perimeter is a convention.
    pub fn is_single_pixel(&self) -> bool {
        self.area == 1
    }

    /// `4π·area / perimeter²`.
    pub fn compactness(&self) -> f64 {
        compactness(self.area, self.perimeter)
    }

    pub fn curvature(&self) -> Curvature {
        contour_curvature(&self.contour)
    }

    pub fn bbox_overlaps(&self, other: &SegObject) -> bool {
        let (a0, b0, a1, b1) = self.bbox;
        let (c0, d0, c1, d1) = other.bbox;
        a0 <= c1 && c0 <= a1 && b0 <= d1 && d0 <= b1
    }

    /// Number of shared pixels.
    pub fn intersection(&self, other: &SegObject) -> usize {
        if !self.bbox_overlaps(other) {
            return 0;
        }
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.pixels.len() && j < other.pixels.len() {
            match self.pixels[i].cmp(&other.pixels[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// 8-connected components, numbered in raster order of their first pixel.
pub fn connected_components(map: &BinaryMap) -> Vec<SegObject> {
    let (w, h) = (map.width(), map.height());
    let mut parent: Vec<usize> = (0..w * h).collect();
    for r in 0..h {
        for c in 0..w {
            if !map.get(r, c) {
                continue;
            }
            let i = r * w + c;
            // Already-visited neighbours: W, NW, N, NE.
            for (dr, dc) in [(0isize, -1isize), (-1, -1), (-1, 0), (-1, 1)] {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if map.get_signed(nr, nc) {
                    let a = find(&mut parent, i);
                    let b = find(&mut parent, nr as usize * w + nc as usize);
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut slot = vec![usize::MAX; w * h];
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !map.get(r, c) {
                continue;
            }
            let root = find(&mut parent, r * w + c);
            if slot[root] == usize::MAX {
                slot[root] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[root]].push((r, c));
        }
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(id, pixels)| SegObject::from_pixels(id, pixels))
        .collect()
}

/// `(1 − |S∩O|/|O|, 1 − |S∩O|/|S|)`.
pub fn overlap_errors(reference: &SegObject, seg: &SegObject) -> (f64, f64) {
    let inter = reference.intersection(seg) as f64;
    (
        1.0 - inter / reference.area as f64,
        1.0 - inter / seg.area as f64,
    )
}

/// Default matching threshold on both overlap errors.
pub const MATCH_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub ref_id: usize,
    pub seg_id: usize,
    pub e_os: f64,
    pub e_us: f64,
    pub matched: bool,
}

/// Scores every intersecting `(reference, segment)` pair.
///
/// Pairs with disjoint bounding boxes cannot intersect and are skipped;
/// pairs that share no pixel are not listed. Output is ordered by
/// `(ref_id, seg_id)`.
pub fn match_objects(refs: &[SegObject], segs: &[SegObject], threshold: f64) -> Vec<MatchPair> {
    let mut pairs = Vec::new();
    for o in refs {
        for s in segs {
            if !o.bbox_overlaps(s) || o.intersection(s) == 0 {
                continue;
            }
            let (e_os, e_us) = overlap_errors(o, s);
            pairs.push(MatchPair {
                ref_id: o.id,
                seg_id: s.id,
                e_os,
                e_us,
                matched: e_os <= threshold && e_us <= threshold,
            });
        }
    }
    pairs
}

/// Number of references with at least one match.
pub fn matched_reference_count(n_refs: usize, pairs: &[MatchPair]) -> usize {
    let mut hit = vec![false; n_refs];
    for p in pairs.iter().filter(|p| p.matched) {
        hit[p.ref_id] = true;
    }
    hit.iter().filter(|&&h| h).count()
}

/// Fraction of reference objects that are matched; `None` without references.
pub fn matching_rate(refs: &[SegObject], pairs: &[MatchPair]) -> Option<f64> {
    if refs.is_empty() {
        return None;
    }
    Some(matched_reference_count(refs.len(), pairs) as f64 / refs.len() as f64)
}

/// `|f_c(seg) − f_c(ref)|`.
pub fn curvature_error(reference: &SegObject, seg: &SegObject) -> f64 {
    (seg.curvature().value - reference.curvature().value).abs()
}

/// `|f_s(seg) − f_s(ref)|`.
pub fn shape_error(reference: &SegObject, seg: &SegObject) -> f64 {
    (seg.compactness() - reference.compactness()).abs()
}
