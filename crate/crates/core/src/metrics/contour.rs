use std::f64::consts::{PI, SQRT_2};

/// Moore neighbourhood, clockwise on screen starting from west.
const OFFSETS: [(isize, isize); 8] = [
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
];

fn direction_of(dr: isize, dc: isize) -> usize {
    OFFSETS
        .iter()
        .position(|&o| o == (dr, dc))
        .expect("8-neighbour offset")
}

/// Moore-neighbour tracing of the outer boundary of one 8-connected set.
///
/// `inside(r, c)` must be true exactly on the object; `start` is its first
/// pixel in raster order. The result is closed (last vertex == first) and
/// runs clockwise on screen. A single pixel gives `[start, start]`.
pub fn moore_trace(start: (usize, usize), area: usize, inside: impl Fn(isize, isize) -> bool) -> Vec<(usize, usize)> {
    let s = (start.0 as isize, start.1 as isize);
    // The raster-first pixel has no object pixel to its west.
    let step = |p: (isize, isize), back: usize| -> Option<((isize, isize), usize)> {
        for k in 1..=8 {
            let d = (back + k) % 8;
            let q = (p.0 + OFFSETS[d].0, p.1 + OFFSETS[d].1);
            if inside(q.0, q.1) {
                let prev = OFFSETS[(d + 7) % 8];
                let b = (p.0 + prev.0, p.1 + prev.1);
                return Some((q, direction_of(b.0 - q.0, b.1 - q.1)));
            }
        }
        None
    };
    let as_vertex = |p: (isize, isize)| (p.0 as usize, p.1 as usize);

    let Some(first) = step(s, 0) else {
        return vec![start, start];
    };
    let mut contour = vec![start, as_vertex(first.0)];
    let mut state = first;
    // Each state (pixel, entry direction) is visited at most once per cycle.
    let limit = 8 * area + 8;
    for _ in 0..limit {
        let next = step(state.0, state.1).expect("connected neighbour");
        if next == first {
            debug_assert_eq!(state.0, s);
            return contour;
        }
        contour.push(as_vertex(next.0));
        state = next;
    }
    unreachable!("contour tracing did not close");
}

/// Chain length: 1 per axis move, √2 per diagonal move. A closed single
/// vertex chain (one pixel) has perimeter 1 by convention.
pub fn perimeter(contour: &[(usize, usize)]) -> f64 {
    let (axis, diag) = chain_moves(contour);
    if axis + diag == 0 {
        return if contour.is_empty() { 0.0 } else { 1.0 };
    }
    axis as f64 + SQRT_2 * diag as f64
}

fn chain_moves(contour: &[(usize, usize)]) -> (usize, usize) {
    let mut axis = 0;
    let mut diag = 0;
    for w in contour.windows(2) {
        let dr = w[0].0.abs_diff(w[1].0);
        let dc = w[0].1.abs_diff(w[1].1);
        match dr + dc {
            0 => {}
            1 => axis += 1,
            _ => diag += 1,
        }
    }
    (axis, diag)
}

/// `4πA / p²`.
pub fn compactness(area: usize, perimeter: f64) -> f64 {
    if perimeter <= 0.0 {
        return 0.0;
    }
    4.0 * PI * area as f64 / (perimeter * perimeter)
}

/// Moving-average window of the curvature estimator.
pub const CURVATURE_WINDOW: usize = 5;
/// Turning angles are measured between chords to the smoothed vertices this
/// many steps before and after; single steps keep the pixel staircase.
pub const CURVATURE_SPAN: usize = CURVATURE_WINDOW / 2;
/// Contours with fewer distinct vertices are degenerate.
pub const MIN_CURVATURE_VERTICES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature {
    /// Mean |turning angle| per unit length, radians per pixel.
    pub value: f64,
    pub degenerate: bool,
}

/// Mean curvature of a closed contour after cyclic moving-average smoothing.
///
/// At each smoothed vertex the absolute turning angle between the incoming
/// and outgoing chords is divided by their mean length. Vertices touching a
/// zero-length chord are skipped.
pub fn contour_curvature(contour: &[(usize, usize)]) -> Curvature {
    let degenerate = Curvature {
        value: 0.0,
        degenerate: true,
    };
    let pts = match contour {
        [first, .., last] if first == last => &contour[..contour.len() - 1],
        _ => contour,
    };
    let n = pts.len();
    if n < MIN_CURVATURE_VERTICES {
        return degenerate;
    }
    // Window sums stay integral; differences of them are exact, so the
    // estimate is exactly invariant under translation and quarter turns.
    let half = (CURVATURE_WINDOW / 2) as isize;
    let sums: Vec<(i64, i64)> = (0..n as isize)
        .map(|i| {
            (-half..=half).fold((0, 0), |(r, c), k| {
                let p = pts[(i + k).rem_euclid(n as isize) as usize];
                (r + p.0 as i64, c + p.1 as i64)
            })
        })
        .collect();
    let scale = CURVATURE_WINDOW as f64;
    let delta = |a: (i64, i64), b: (i64, i64)| ((b.0 - a.0) as f64 / scale, (b.1 - a.1) as f64 / scale);

    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let u = delta(sums[(i + n - CURVATURE_SPAN) % n], sums[i]);
        let v = delta(sums[i], sums[(i + CURVATURE_SPAN) % n]);
        let lu = (u.0 * u.0 + u.1 * u.1).sqrt();
        let lv = (v.0 * v.0 + v.1 * v.1).sqrt();
        if lu == 0.0 || lv == 0.0 {
            continue;
        }
        let cross = u.0 * v.1 - u.1 * v.0;
        let dot = u.0 * v.0 + u.1 * v.1;
        let angle = cross.abs().atan2(dot);
        values.push(angle / ((lu + lv) / 2.0));
    }
    if values.is_empty() {
        return degenerate;
    }
    // Order-independent sum so reversed traversals agree bit for bit.
    values.sort_by(f64::total_cmp);
    Curvature {
        value: values.iter().sum::<f64>() / values.len() as f64,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_block(h: usize, w: usize) -> Vec<(usize, usize)> {
        moore_trace((0, 0), h * w, |r, c| r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w)
    }

    #[test]
    fn square_block_perimeter() {
        let c = trace_block(10, 10);
        assert_eq!(c.first(), c.last());
        assert_eq!(c.len(), 37);
        assert_eq!(perimeter(&c), 36.0);
        let fs = compactness(100, 36.0);
        assert!((fs - 400.0 * PI / 1296.0).abs() < 1e-12);
    }

    #[test]
    fn lines_walk_out_and_back() {
        for n in 2..12 {
            assert_eq!(perimeter(&trace_block(1, n)), 2.0 * (n - 1) as f64);
            assert_eq!(perimeter(&trace_block(n, 1)), 2.0 * (n - 1) as f64);
        }
    }

    #[test]
    fn single_pixel_convention() {
        let c = trace_block(1, 1);
        assert_eq!(c, vec![(0, 0), (0, 0)]);
        assert_eq!(perimeter(&c), 1.0);
    }

    #[test]
    fn diagonal_pair() {
        let c = moore_trace((0, 0), 2, |r, c| (r, c) == (0, 0) || (r, c) == (1, 1));
        assert_eq!(c, vec![(0, 0), (1, 1), (0, 0)]);
        assert!((perimeter(&c) - 2.0 * SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn traces_clockwise() {
        let c = trace_block(3, 4);
        assert_eq!(&c[..5], &[(0, 0), (0, 1), (0, 2), (0, 3), (1, 3)]);
    }

    #[test]
    fn curvature_needs_eight_vertices() {
        let c = trace_block(2, 2);
        let k = contour_curvature(&c);
        assert!(k.degenerate);
        assert_eq!(k.value, 0.0);
    }

    #[test]
    fn straight_sides_add_no_turning() {
        let c = trace_block(6, 40);
        let k = contour_curvature(&c);
        assert!(!k.degenerate);
        // Total turning is 2π over the corners; straight vertices contribute 0.
        let bound = 4.0 * (PI / 2.0) / perimeter(&c) * 2.0;
        assert!(k.value > 0.0 && k.value < bound, "{}", k.value);
    }

    #[test]
    fn reversal_preserves_curvature() {
        let c = trace_block(7, 13);
        let mut r = c.clone();
        r.reverse();
        assert_eq!(contour_curvature(&c), contour_curvature(&r));
    }
}
