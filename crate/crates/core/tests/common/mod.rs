//! Brute-force oracles shared by the metric tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};
use std::f64::consts::{PI, SQRT_2};

use aslnet::metrics::{
    confusion_counts, connected_components, evaluate_maps, match_objects, matching_rate, overlap_errors, BinaryMap,
    ConfusionCounts, SegObject, MATCH_THRESHOLD,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

macro_rules! ensure {
    ($cond:expr) => {
        if !$cond {
            return Err(format!("{} failed", stringify!($cond)));
        }
    };
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

macro_rules! ensure_eq {
    ($a:expr, $b:expr) => {{
        let (a, b) = (&$a, &$b);
        if a != b {
            return Err(format!("{} != {}: {:?} vs {:?}", stringify!($a), stringify!($b), a, b));
        }
    }};
}

pub fn random_map(w: usize, h: usize, rng: &mut ChaCha8Rng) -> BinaryMap {
    let mut m = BinaryMap::zeros(w, h);
    for _ in 0..rng.random_range(0..7) {
        let r0 = rng.random_range(0..h);
        let c0 = rng.random_range(0..w);
        let a = rng.random_range(1..=h.min(16));
        let b = rng.random_range(1..=w.min(16));
        let disc = rng.random_bool(0.4);
        for r in r0..(r0 + a).min(h) {
            for c in c0..(c0 + b).min(w) {
                let inside = if disc {
                    let (dr, dc) = (r as f64 - r0 as f64 - a as f64 / 2.0, c as f64 - c0 as f64 - b as f64 / 2.0);
                    (dr / a as f64).powi(2) + (dc / b as f64).powi(2) <= 0.25
                } else {
                    true
                };
                if inside {
                    m.set(r, c, true);
                }
            }
        }
    }
    for _ in 0..rng.random_range(0..(w * h / 20 + 1)) {
        let (r, c) = (rng.random_range(0..h), rng.random_range(0..w));
        let v = m.get(r, c);
        m.set(r, c, !v);
    }
    m
}

/// A noisy, shifted copy of `m`, so that some objects match and others do not.
pub fn perturb(m: &BinaryMap, rng: &mut ChaCha8Rng) -> BinaryMap {
    let shifted = m.translate(rng.random_range(-2i64..=2) as isize, rng.random_range(-2i64..=2) as isize);
    let flip = rng.random_range(0.0..0.15);
    BinaryMap::from_fn(m.width(), m.height(), |r, c| shifted.get(r, c) ^ rng.random_bool(flip))
}

pub fn flood_fill(m: &BinaryMap) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (m.width(), m.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !m.get(r, c) || seen[r * w + c] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([(r, c)]);
            seen[r * w + c] = true;
            while let Some((pr, pc)) = queue.pop_front() {
                comp.push((pr, pc));
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        let (nr, nc) = (pr as isize + dr, pc as isize + dc);
                        if m.get_signed(nr, nc) && !seen[nr as usize * w + nc as usize] {
                            seen[nr as usize * w + nc as usize] = true;
                            queue.push_back((nr as usize, nc as usize));
                        }
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
    }
    out
}

/// Freeman-chain boundary following, counter-clockwise on screen.
pub fn chain_length(pixels: &[(usize, usize)]) -> f64 {
    let set: HashSet<(isize, isize)> = pixels.iter().map(|&(r, c)| (r as isize, c as isize)).collect();
    // E, NE, N, NW, W, SW, S, SE.
    let dirs = [(0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1)];
    let start = pixels.iter().min().map(|&(r, c)| (r as isize, c as isize)).unwrap();
    let next = |p: (isize, isize), dir: usize| -> Option<((isize, isize), usize)> {
        let first = if dir % 2 == 0 { (dir + 7) % 8 } else { (dir + 6) % 8 };
        (0..8).map(|k| (first + k) % 8).find_map(|d| {
            let q = (p.0 + dirs[d].0, p.1 + dirs[d].1);
            set.contains(&q).then_some((q, d))
        })
    };
    let Some((second, mut dir)) = next(start, 7) else {
        return 1.0;
    };
    let mut length = if dir % 2 == 0 { 1.0 } else { SQRT_2 };
    let mut cur = second;
    loop {
        let (q, d) = next(cur, dir).unwrap();
        if cur == start && q == second {
            break;
        }
        length += if d % 2 == 0 { 1.0 } else { SQRT_2 };
        cur = q;
        dir = d;
    }
    length
}

pub fn brute_counts(p: &BinaryMap, r: &BinaryMap) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for row in 0..p.height() {
        for col in 0..p.width() {
            match (p.get(row, col), r.get(row, col)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    c
}

pub fn brute_errors(o: &SegObject, s: &SegObject) -> (f64, f64) {
    let a: HashSet<_> = o.pixels.iter().collect();
    let b: HashSet<_> = s.pixels.iter().collect();
    let i = a.intersection(&b).count() as f64;
    (1.0 - i / a.len() as f64, 1.0 - i / b.len() as f64)
}

pub fn disc(radius: f64, size: usize) -> BinaryMap {
    let c = size as f64 / 2.0 - 0.5;
    BinaryMap::from_fn(size, size, |r, col| {
        (r as f64 - c).powi(2) + (col as f64 - c).powi(2) <= radius * radius
    })
}

/// Compares every metric on a random pair of maps against pixel-level
/// recomputation.
pub fn check_random_pair(seed: u64, w: usize, h: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference = random_map(w, h, &mut rng);
    let pred = perturb(&reference, &mut rng);

    // Components against a flood fill.
    let refs = connected_components(&reference);
    let segs = connected_components(&pred);
    let oracle: Vec<Vec<(usize, usize)>> = flood_fill(&reference);
    ensure_eq!(refs.len(), oracle.len());
    for (o, pix) in refs.iter().zip(&oracle) {
        ensure_eq!(&o.pixels, pix);
        ensure_eq!(o.area, pix.len());
        ensure_eq!(o.contour.first(), o.contour.last());
        ensure!(o.perimeter > 0.0);
        let chain = chain_length(pix);
        ensure!((o.perimeter - chain).abs() < 1e-9, "perimeter {} vs {}", o.perimeter, chain);
        let fs = 4.0 * PI * pix.len() as f64 / (chain * chain);
        ensure!((o.compactness() - fs).abs() < 1e-12, "f_s {} vs {}", o.compactness(), fs);
    }

    // Overlap errors and matching against all pairs.
    let pairs = match_objects(&refs, &segs, MATCH_THRESHOLD);
    let mut brute = Vec::new();
    for o in &refs {
        for s in &segs {
            let (eo, eu) = brute_errors(o, s);
            let (fo, fu) = overlap_errors(o, s);
            ensure!((eo - fo).abs() < 1e-12 && (eu - fu).abs() < 1e-12);
            let (so, su) = overlap_errors(s, o);
            ensure_eq!((fo, fu), (su, so));
            if eo < 1.0 {
                brute.push((o.id, s.id, eo <= MATCH_THRESHOLD && eu <= MATCH_THRESHOLD));
            }
        }
    }
    let listed: Vec<(usize, usize, bool)> = pairs.iter().map(|p| (p.ref_id, p.seg_id, p.matched)).collect();
    ensure_eq!(&listed, &brute);

    // At most one match per object for T ≤ 0.5.
    let matched: Vec<_> = brute.iter().filter(|b| b.2).collect();
    let ref_ids: HashSet<_> = matched.iter().map(|b| b.0).collect();
    let seg_ids: HashSet<_> = matched.iter().map(|b| b.1).collect();
    ensure_eq!(ref_ids.len(), matched.len());
    ensure_eq!(seg_ids.len(), matched.len());

    let mr = matching_rate(&refs, &pairs);
    if refs.is_empty() {
        ensure_eq!(mr, None);
    } else {
        ensure_eq!(mr, Some(ref_ids.len() as f64 / refs.len() as f64));
    }

    // Full report, field by field.
    let report = evaluate_maps(&pred, &reference).unwrap();
    let counts = brute_counts(&pred, &reference);
    ensure_eq!(report.counts, counts);
    ensure_eq!(confusion_counts(&pred, &reference).unwrap(), counts);
    let n = counts.total() as f64;
    ensure!((report.oa - (counts.tp + counts.tn) as f64 / n).abs() < 1e-12);
    ensure_eq!(report.n_matched, ref_ids.len());
    ensure_eq!((report.n_ref_objects, report.n_seg_objects), (refs.len(), segs.len()));
    if matched.is_empty() {
        ensure!(report.e_curv.is_none() && report.e_shape.is_none());
    } else {
        let k = matched.len() as f64;
        let ec: f64 = matched
            .iter()
            .map(|b| (refs[b.0].curvature().value - segs[b.1].curvature().value).abs())
            .sum::<f64>() / k * 100.0;
        let es: f64 = matched
            .iter()
            .map(|b| (refs[b.0].compactness() - segs[b.1].compactness()).abs())
            .sum::<f64>() / k * 100.0;
        ensure!((report.e_curv.unwrap() - ec).abs() < 1e-9);
        ensure!((report.e_shape.unwrap() - es).abs() < 1e-9);
    }
    for v in [report.oa, report.precision, report.recall, report.f1, report.iou] {
        ensure!((0.0..=1.0).contains(&v));
    }
    if counts.tp + counts.fp + counts.fn_ > 0 {
        ensure!((report.iou - report.f1 / (2.0 - report.f1)).abs() < 1e-12);
    }

    // Self-evaluation is perfect.
    let perfect = evaluate_maps(&reference, &reference).unwrap();
    ensure_eq!((perfect.oa, perfect.f1, perfect.iou), (1.0, 1.0, 1.0));
    if !refs.is_empty() {
        ensure_eq!(perfect.mr, Some(1.0));
        ensure_eq!(perfect.e_curv, Some(0.0));
    }
    Ok(())
}
