mod common;

use std::f64::consts::PI;

use aslnet::metrics::{
    compactness, connected_components, contour_curvature, evaluate_maps, pixel_metrics, BinaryMap, ConfusionCounts,
};
use common::{chain_length, check_random_pair, disc, perturb, random_map};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn square_compactness_tends_to_quarter_pi() {
    for n in [64usize, 100] {
        let m = BinaryMap::from_fn(n + 4, n + 4, |r, c| (2..n + 2).contains(&r) && (2..n + 2).contains(&c));
        let o = &connected_components(&m)[0];
        assert_eq!(o.perimeter, 4.0 * (n - 1) as f64);
        let fs = o.compactness();
        assert!((fs - PI / 4.0).abs() / (PI / 4.0) < 0.05, "n = {n}: {fs}");
    }
    let m = BinaryMap::from_fn(68, 68, |r, c| (2..66).contains(&r) && (2..66).contains(&c));
    let fs = connected_components(&m)[0].compactness();
    assert!((fs - 4.0 * PI * 4096.0 / (4.0 * 63.0f64).powi(2)).abs() < 1e-12);
}

#[test]
fn disc_compactness_near_one() {
    for radius in [32.0, 40.0] {
        let m = disc(radius, 2 * radius as usize + 8);
        let o = &connected_components(&m)[0];
        let fs = o.compactness();
        assert!((fs - 1.0).abs() < 0.12, "r = {radius}: {fs}");
        let oracle = chain_length(&o.pixels);
        assert!((o.perimeter - oracle).abs() / oracle < 0.06);
    }
}

#[test]
fn disc_curvature_matches_inverse_radius() {
    let m = disc(50.0, 110);
    let k = connected_components(&m)[0].curvature();
    assert!(!k.degenerate);
    assert!((k.value - 0.02).abs() / 0.02 < 0.25, "{}", k.value);
}

#[test]
fn quarter_turn_and_shift_keep_shape_descriptors() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..40 {
        let inner = random_map(40, 40, &mut rng);
        let m = BinaryMap::from_fn(48, 48, |r, c| (4..44).contains(&r) && (4..44).contains(&c) && inner.get(r - 4, c - 4));
        let rotated = m.rotate90();
        let shifted = m.translate(3, -2);
        let a = connected_components(&m);
        for other in [rotated, shifted] {
            let b = connected_components(&other);
            assert_eq!(a.len(), b.len());
            let mut fa: Vec<(usize, u64, u64)> = a
                .iter()
                .map(|o| (o.area, o.compactness().to_bits(), o.curvature().value.to_bits()))
                .collect();
            let mut fb: Vec<(usize, u64, u64)> = b
                .iter()
                .map(|o| (o.area, o.compactness().to_bits(), o.curvature().value.to_bits()))
                .collect();
            fa.sort_unstable();
            fb.sort_unstable();
            assert_eq!(fa, fb);
        }
    }
}

#[test]
fn reversed_contour_keeps_curvature() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..30 {
        for o in connected_components(&random_map(48, 48, &mut rng)) {
            let mut rev = o.contour.clone();
            rev.reverse();
            assert_eq!(contour_curvature(&rev), o.curvature());
        }
    }
}

#[test]
fn ten_block_shape_value() {
    let m = BinaryMap::from_fn(12, 12, |r, c| (1..11).contains(&r) && (1..11).contains(&c));
    let o = &connected_components(&m)[0];
    assert_eq!(o.perimeter, 36.0);
    assert!((o.compactness() - 400.0 * PI / 1296.0).abs() < 1e-12);
    assert!((compactness(100, 36.0) - 0.9696).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn object_quantities_match_brute_force(seed in any::<u64>(), w in 8usize..=64, h in 8usize..=64) {
        if let Err(e) = check_random_pair(seed, w, h) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn iou_f1_identity(tp in 0u64..1000, fp in 0u64..1000, tn in 0u64..1000, fn_ in 0u64..1000) {
        let m = pixel_metrics(&ConfusionCounts { tp, fp, tn, fn_ });
        prop_assert!((m.iou - m.f1 / (2.0 - m.f1)).abs() < 1e-12);
    }

    #[test]
    fn object_metrics_survive_rigid_motion(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = random_map(40, 40, &mut rng);
        let reference = BinaryMap::from_fn(48, 48, |r, c| (4..44).contains(&r) && (4..44).contains(&c) && inner.get(r - 4, c - 4));
        let pred = perturb(&reference, &mut rng);
        let pred = BinaryMap::from_fn(48, 48, |r, c| (2..46).contains(&r) && (2..46).contains(&c) && pred.get(r, c));
        let base = evaluate_maps(&pred, &reference).unwrap();
        for (p, r) in [
            (pred.rotate90(), reference.rotate90()),
            (pred.translate(2, -1), reference.translate(2, -1)),
        ] {
            let moved = evaluate_maps(&p, &r).unwrap();
            prop_assert_eq!(moved.mr, base.mr);
            prop_assert_eq!(moved.n_matched, base.n_matched);
            let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() < 1e-9,
                (None, None) => true,
                _ => false,
            };
            prop_assert!(close(moved.e_curv, base.e_curv));
            prop_assert!(close(moved.e_shape, base.e_shape));
        }
    }
}
