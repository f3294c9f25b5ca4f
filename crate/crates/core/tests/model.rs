use aslnet::autodiff::gradcheck::{grad_check_many, GradCheckOptions};
use aslnet::autodiff::Tape;
use aslnet::model::{
    Bindings, DiscriminatorConfig, EdfcnConfig, SegmentationConfig, SegmentationModel, ShapeDiscriminator, SR_DILATION,
};
use aslnet::{Error, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(width: usize, groups: usize, sr: bool) -> SegmentationConfig {
    SegmentationConfig {
        edfcn: EdfcnConfig {
            input_channels: 1,
            base_width: width,
            norm_groups: groups,
        },
        shape_regularizer: sr,
    }
}

fn random_image(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random::<f64>())
}

fn zero_projection(model: &mut SegmentationModel) {
    let (w, b) = (model.final_projection().weight, model.final_projection().bias);
    model.params.get_mut(w).data_mut().fill(0.0);
    model.params.get_mut(b).data_mut().fill(0.0);
}

#[test]
fn zero_projection_predicts_one_half() {
    for sr in [true, false] {
        let mut m = SegmentationModel::new(config(4, 2, sr), 1).unwrap();
        zero_projection(&mut m);
        let p = m.predict_proba(&random_image(&[2, 1, 32, 40], 1)).unwrap();
        assert_eq!(p.shape(), &[2, 1, 32, 40]);
        assert!(p.data().iter().all(|&v| v == 0.5));
    }
}

#[test]
fn logits_are_finite_with_input_resolution() {
    let m = SegmentationModel::new(SegmentationConfig::default(), 2).unwrap();
    let p = m.predict_logits(&random_image(&[1, 1, 64, 64], 2)).unwrap();
    assert_eq!(p.shape(), &[1, 1, 64, 64]);
    assert!(p.is_finite());
    let s = m.predict_proba(&random_image(&[1, 1, 64, 64], 2)).unwrap();
    assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn bad_inputs_are_rejected() {
    let m = SegmentationModel::new(config(4, 2, true), 3).unwrap();
    assert!(matches!(m.predict_logits(&random_image(&[1, 1, 30, 32], 3)), Err(Error::Geometry(_))));
    assert!(matches!(m.predict_logits(&random_image(&[1, 2, 32, 32], 3)), Err(Error::Dimension(_))));
    assert!(SegmentationModel::new(config(6, 4, true), 3).is_err());
    let d = ShapeDiscriminator::new(DiscriminatorConfig::default(), 3).unwrap();
    assert!(matches!(d.score(&random_image(&[1, 1, 48, 64], 3)), Err(Error::Geometry(_))));
    assert!(matches!(d.score(&random_image(&[1, 2, 64, 64], 3)), Err(Error::Dimension(_))));
}

#[test]
fn parameter_count_matches_layer_arithmetic() {
    let conv = |cin: usize, cout: usize, k: usize| k * k * cin * cout + cout;
    let block = |cin: usize, cout: usize| conv(cin, cout, 3) + 2 * cout;
    for w in [4, 8, 16] {
        let encoder = block(1, w)
            + block(w, w)
            + block(w, 2 * w)
            + block(2 * w, 2 * w)
            + block(2 * w, 4 * w)
            + block(4 * w, 4 * w)
            + block(6 * w, 2 * w);
        let f = 2 * w;
        let sr = 2 * conv(f, f, 3) + conv(f, f, 3) + 2 * 9 * f * 9 + conv(f, 1, 1);
        let groups = if w % 4 == 0 { 4 } else { 2 };
        let with_sr = SegmentationModel::new(config(w, groups, true), 0).unwrap();
        let without = SegmentationModel::new(config(w, groups, false), 0).unwrap();
        assert_eq!(with_sr.params.num_scalars(), encoder + sr);
        assert_eq!(without.params.num_scalars(), encoder + conv(f, 1, 1));
    }
    let d = ShapeDiscriminator::new(DiscriminatorConfig::default(), 0).unwrap();
    let expected = conv(1, 16, 3) + conv(16, 32, 3) + conv(32, 64, 3) + conv(64, 128, 3) + conv(128, 1, 1);
    assert_eq!(d.params.num_scalars(), expected);
}

#[test]
fn fresh_deformable_layer_is_a_plain_convolution() {
    let m = SegmentationModel::new(config(4, 2, true), 4).unwrap();
    let x = random_image(&[1, 1, 32, 32], 4);
    let run = |plain: bool| {
        let mut tape = Tape::new();
        let b = m.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = if plain {
            m.forward_plain(&mut tape, &b, xv)
        } else {
            m.forward(&mut tape, &b, xv)
        };
        tape.value(y.unwrap()).clone()
    };
    let (a, b) = (run(false), run(true));
    let diff = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-12, "{diff}");
}

#[test]
fn residual_unit_reach_is_two_dilated_taps() {
    let m = SegmentationModel::new(config(4, 2, true), 5).unwrap();
    let sr = m.shape_regularizer().unwrap();
    let (c, n) = (8, 21);
    let base = random_image(&[1, c, n, n], 5);
    let mut poked = base.clone();
    let centre = n / 2;
    for ch in 0..c {
        poked.data_mut()[ch * n * n + centre * n + centre] += 1.0;
    }
    let unit = |x: &Tensor| {
        let mut tape = Tape::new();
        let b = m.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = sr.dilated_unit(&mut tape, &b, xv).unwrap();
        tape.value(y).clone()
    };
    let (a, b) = (unit(&base), unit(&poked));
    let reach = 2 * SR_DILATION;
    let mut farthest = 0;
    for ch in 0..c {
        for r in 0..n {
            for col in 0..n {
                let i = ch * n * n + r * n + col;
                if a.data()[i] != b.data()[i] {
                    farthest = farthest.max(r.abs_diff(centre).max(col.abs_diff(centre)));
                }
            }
        }
    }
    assert_eq!(farthest, reach);
}

#[test]
fn discriminator_scores_at_one_thirty_second_resolution() {
    let d = ShapeDiscriminator::new(DiscriminatorConfig::default(), 6).unwrap();
    assert_eq!(d.config.total_stride(), 32);
    let s = d.score(&random_image(&[3, 1, 64, 64], 6)).unwrap();
    assert_eq!(s.shape(), &[3, 1, 2, 2]);
    // The top-left cell never sees the bottom-right pixel.
    let mut map = Tensor::zeros(&[1, 1, 64, 64]);
    let base = d.score(&map).unwrap();
    map.data_mut()[63 * 64 + 63] = 1.0;
    let moved = d.score(&map).unwrap();
    assert_eq!(moved.data()[0], base.data()[0]);
    assert_ne!(moved.data()[3], base.data()[3]);
}

#[test]
fn same_seed_same_weights() {
    let a = SegmentationModel::new(SegmentationConfig::default(), 9).unwrap();
    let b = SegmentationModel::new(SegmentationConfig::default(), 9).unwrap();
    let c = SegmentationModel::new(SegmentationConfig::default(), 10).unwrap();
    assert_eq!(a.params, b.params);
    assert_ne!(a.params, c.params);
}

#[test]
fn shifting_the_input_shifts_the_prediction() {
    // Content far from the border: shifts by the encoder stride commute with
    // the network up to summation order in the normalisation statistics.
    let m = SegmentationModel::new(config(4, 2, true), 7).unwrap();
    let n = 256;
    let shift = 8;
    let blob = |dr: usize| {
        Tensor::from_fn(&[1, 1, n, n], |i| {
            let (r, c) = (i / n, i % n);
            let (r, c) = (r as isize - dr as isize, c as isize);
            ((120..136).contains(&r) && (116..140).contains(&c)) as u8 as f64
        })
    };
    let a = m.predict_logits(&blob(0)).unwrap();
    let b = m.predict_logits(&blob(shift)).unwrap();
    let mut worst: f64 = 0.0;
    for r in 100..156 {
        for c in 100..156 {
            worst = worst.max((a.data()[r * n + c] - b.data()[(r + shift) * n + c]).abs());
        }
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn composite_gradient_through_segmenter_and_discriminator() {
    let model = SegmentationModel::new(config(4, 2, true), 8).unwrap();
    let disc = ShapeDiscriminator::new(
        DiscriminatorConfig {
            widths: vec![4],
            ..DiscriminatorConfig::default()
        },
        8,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut params: Vec<Tensor> = model.params.iter().map(|(_, t)| t.clone()).collect();
    // Non-zero offset kernels so the deformable path is exercised off the grid.
    for (i, (name, _)) in model.params.iter().enumerate() {
        if name.contains("offset") {
            params[i] = Tensor::from_fn(params[i].shape(), |_| rng.random_range(-0.2..0.2));
        }
    }
    let image = random_image(&[1, 1, 16, 16], 9);
    let label = Tensor::from_fn(&[1, 1, 16, 16], |i| (i % 16 > 5) as u8 as f64);
    let report = grad_check_many(
        |tape, vars| {
            let b = Bindings::from_vars(vars.to_vec(), true);
            let x = tape.constant(image.clone());
            let logits = model.forward(tape, &b, x)?;
            let prob = tape.sigmoid(logits);
            let l = tape.constant(label.clone());
            let pix = tape.mse(l, prob)?;
            let db = disc.params.bind(tape, false);
            let real = disc.forward(tape, &db, l)?;
            let fake = disc.forward(tape, &db, prob)?;
            let shape = tape.mse(real, fake)?;
            let pix = tape.scale(pix, 5.0);
            tape.add(pix, shape)
        },
        &params,
        1e-3,
        &GradCheckOptions {
            max_elements: Some(6),
            directions: 4,
            seed: 8,
            ..GradCheckOptions::default()
        },
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}
