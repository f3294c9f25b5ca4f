use aslnet::autodiff::{AdamState, Tape};
use aslnet::model::{DiscriminatorConfig, EdfcnConfig, SegmentationConfig, SegmentationModel, ShapeDiscriminator};
use aslnet::synth::{generate_dataset, SceneConfig};
use aslnet::train::*;
use aslnet::{Error, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_seg(sr: bool) -> SegmentationConfig {
    SegmentationConfig {
        edfcn: EdfcnConfig {
            input_channels: 1,
            base_width: 4,
            norm_groups: 2,
        },
        shape_regularizer: sr,
    }
}

fn small_disc() -> DiscriminatorConfig {
    DiscriminatorConfig {
        widths: vec![4, 8],
        ..DiscriminatorConfig::default()
    }
}

fn state(config: TrainConfig) -> TrainState {
    TrainState::new(small_seg(true), small_disc(), config).unwrap()
}

fn random_batch(n: usize, size: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = Tensor::from_fn(&[n, 1, size, size], |_| rng.random::<f64>());
    let labels = Tensor::from_fn(&[n, 1, size, size], |i| ((i / size) % size > size / 3) as u8 as f64);
    Batch::new(images, labels).unwrap()
}

fn zero_score_head(disc: &mut ShapeDiscriminator) {
    let (w, b) = (disc.score_head().weight, disc.score_head().bias);
    disc.params.get_mut(w).data_mut().fill(0.0);
    disc.params.get_mut(b).data_mut().fill(0.0);
}

fn zero_projection(model: &mut SegmentationModel) {
    let (w, b) = (model.final_projection().weight, model.final_projection().bias);
    model.params.get_mut(w).data_mut().fill(0.0);
    model.params.get_mut(b).data_mut().fill(0.0);
}

fn param_bits(store: &aslnet::model::ParamStore) -> Vec<u64> {
    store.iter().flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits())).collect()
}

fn rectangles() -> SceneConfig {
    SceneConfig {
        kind_weights: [1.0, 0.0, 0.0],
        ..SceneConfig::noiseless()
    }
}

#[test]
fn zero_head_discriminator_loss_is_two_ln_two() {
    let mut disc = ShapeDiscriminator::new(small_disc(), 3).unwrap();
    zero_score_head(&mut disc);
    let b = random_batch(2, 32, 1);
    let fake = Tensor::full(&[2, 1, 32, 32], 0.3);
    let loss = discriminator_gradients(&mut disc, &b.labels, &fake).unwrap();
    assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12, "{loss}");
}

#[test]
fn real_and_fake_terms_pull_the_head_bias_apart() {
    let mut disc = ShapeDiscriminator::new(small_disc(), 4).unwrap();
    zero_score_head(&mut disc);
    let labels = random_batch(2, 32, 2).labels;
    let bias_grad = |target: f64| {
        let mut tape = Tape::new();
        let b = disc.params.bind(&mut tape, true);
        let x = tape.constant(labels.clone());
        let s = disc.forward(&mut tape, &b, x).unwrap();
        let p = tape.sigmoid(s);
        let t = tape.constant(Tensor::full(tape.value(p).shape(), target));
        let l = tape.bce(p, t).unwrap();
        tape.backward(l).unwrap();
        tape.grad(b.var(disc.score_head().bias)).unwrap()[0]
    };
    let (real, fake) = (bias_grad(1.0), bias_grad(0.0));
    assert!(real < 0.0 && fake > 0.0, "{real} {fake}");
    assert!((real + fake).abs() < 1e-12);
    // With σ(P) = L the combined gradient cancels.
    let mut d = disc.clone();
    discriminator_gradients(&mut d, &labels, &labels).unwrap();
    assert!(d.params.get(d.score_head().bias).grad().unwrap()[0].abs() < 1e-12);
}

#[test]
fn discriminator_learns_a_fixed_batch() {
    let model = SegmentationModel::new(small_seg(true), 5).unwrap();
    let mut disc = ShapeDiscriminator::new(small_disc(), 6).unwrap();
    let batch = random_batch(2, 32, 3);
    let mut opt = AdamState::new(1e-3, &disc.params);
    let first = discriminator_step(&model, &mut disc, &batch, &mut opt).unwrap();
    let mut last = first;
    for _ in 0..199 {
        last = discriminator_step(&model, &mut disc, &batch, &mut opt).unwrap();
    }
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn matching_prediction_gives_zero_segmenter_loss() {
    let cfg = TrainConfig::default();
    let mut st = state(cfg.clone());
    zero_projection(&mut st.model);
    let b = random_batch(2, 32, 4);
    let soft = Batch::new(b.images, Tensor::full(&[2, 1, 32, 32], 0.5)).unwrap();
    let l = segmenter_step(&mut st.model, &st.disc, &soft, &cfg, &mut st.opt_seg).unwrap();
    assert_eq!((l.pix, l.shape, l.seg), (0.0, 0.0, 0.0));
}

#[test]
fn zero_beta_is_the_pixel_baseline() {
    let cfg = TrainConfig {
        beta: 0.0,
        ..TrainConfig::default()
    };
    let mut st = state(cfg.clone());
    let b = random_batch(2, 32, 5);
    let l = segmenter_step(&mut st.model, &st.disc, &b, &cfg, &mut st.opt_seg).unwrap();
    assert_eq!(l.seg, cfg.alpha * l.pix);
    assert!(l.shape > 0.0, "shape loss is still logged");
}

#[test]
fn fused_batch_equals_separate_steps() {
    for adversarial in [true, false] {
        let cfg = TrainConfig {
            adversarial,
            ..TrainConfig::default()
        };
        let b = random_batch(3, 32, 6);
        let mut a = state(cfg.clone());
        let mut s = a.clone();
        let fused = train_batch(&mut a.model, &mut a.disc, &b, &cfg, &mut a.opt_seg, &mut a.opt_disc).unwrap();
        let dis = if adversarial {
            discriminator_step(&s.model, &mut s.disc, &b, &mut s.opt_disc).unwrap()
        } else {
            0.0
        };
        let seg = segmenter_step(&mut s.model, &s.disc, &b, &cfg, &mut s.opt_seg).unwrap();
        assert_eq!(fused, BatchLosses { dis, ..seg });
        assert_eq!(param_bits(&a.model.params), param_bits(&s.model.params));
        assert_eq!(param_bits(&a.disc.params), param_bits(&s.disc.params));
    }
}

#[test]
fn steps_touch_only_their_own_network() {
    let cfg = TrainConfig::default();
    let mut st = state(cfg.clone());
    let b = random_batch(2, 32, 7);
    let seg_before = param_bits(&st.model.params);
    let disc_before = param_bits(&st.disc.params);
    discriminator_step(&st.model, &mut st.disc, &b, &mut st.opt_disc).unwrap();
    assert_eq!(param_bits(&st.model.params), seg_before);
    assert!(st.model.params.iter().all(|(_, t)| t.grad().is_none()));
    assert_ne!(param_bits(&st.disc.params), disc_before);

    let disc_before = param_bits(&st.disc.params);
    segmenter_step(&mut st.model, &st.disc, &b, &cfg, &mut st.opt_seg).unwrap();
    assert_eq!(param_bits(&st.disc.params), disc_before);
    assert!(st.disc.params.iter().all(|(_, t)| t.grad().is_none()));
    assert_ne!(param_bits(&st.model.params), seg_before);
    assert_eq!(st.opt_disc.step, 1);
    assert_eq!(st.opt_seg.step, 1);
}

#[test]
fn one_step_is_bit_reproducible() {
    let cfg = TrainConfig::default();
    let b = random_batch(2, 32, 8);
    let run = || {
        let mut st = state(cfg.clone());
        let l = train_batch(&mut st.model, &mut st.disc, &b, &cfg, &mut st.opt_seg, &mut st.opt_disc).unwrap();
        ([l.dis, l.pix, l.shape, l.seg].map(f64::to_bits), param_bits(&st.model.params))
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_beta_run_ignores_discriminator_weights() {
    let samples = generate_dataset(&SceneConfig::default(), 6, 20).unwrap();
    for adversarial in [false, true] {
        let cfg = TrainConfig {
            beta: 0.0,
            adversarial,
            epochs: 2,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let mut a = state(cfg.clone());
        let mut b = a.clone();
        for (_, t) in b.disc.params.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = -3.0 * *v + 0.1);
        }
        let la = train(&mut a, &samples, None).unwrap();
        let lb = train(&mut b, &samples, None).unwrap();
        assert_eq!(param_bits(&a.model.params), param_bits(&b.model.params));
        let pix = |l: &[EpochLog]| l.iter().map(|e| e.loss_pix.to_bits()).collect::<Vec<_>>();
        assert_eq!(pix(&la), pix(&lb));
    }
}

#[test]
fn zero_epochs_returns_the_initial_state() {
    let samples = generate_dataset(&SceneConfig::default(), 2, 0).unwrap();
    let mut st = state(TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    });
    let initial = st.checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let logs = train(&mut st, &samples, Some(dir.path())).unwrap();
    assert!(logs.is_empty());
    assert_eq!(st.checkpoint(), initial);
    assert_eq!(load_checkpoint(&dir.path().join(FINAL_CHECKPOINT)).unwrap(), initial);
    let mut csv = Vec::new();
    write_log_csv(&mut csv, &logs).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap(), format!("{LOG_HEADER}\n"));
}

#[test]
fn empty_dataset_is_a_usage_error() {
    let mut st = state(TrainConfig::default());
    assert!(matches!(train(&mut st, &[], None), Err(Error::Usage(_))));
}

#[test]
fn same_seed_same_checkpoint_and_resume_replays() {
    let samples = generate_dataset(&SceneConfig::default(), 5, 30).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 2,
        seed: 11,
        ..TrainConfig::default()
    };
    let run = |dir: &std::path::Path| {
        let mut st = state(cfg.clone());
        let logs = train(&mut st, &samples, Some(dir)).unwrap();
        (logs, std::fs::read(dir.join(FINAL_CHECKPOINT)).unwrap())
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (logs1, bytes1) = run(d1.path());
    let (logs2, bytes2) = run(d2.path());
    assert_eq!(bytes1, bytes2);
    assert_eq!(logs1, logs2);
    let mut names: Vec<String> = std::fs::read_dir(d1.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["epoch_0002.asln", "epoch_0003.asln", "final.asln"]);

    // Stop after one epoch, reload, finish: same bytes as the straight run.
    let d3 = tempfile::tempdir().unwrap();
    let mut st = state(TrainConfig { epochs: 1, ..cfg.clone() });
    train(&mut st, &samples, Some(d3.path())).unwrap();
    let mut resumed = TrainState::load(&d3.path().join(FINAL_CHECKPOINT), cfg.clone()).unwrap();
    assert_eq!(resumed.epoch, 1);
    let rest = train(&mut resumed, &samples, None).unwrap();
    assert_eq!(rest, logs1[1..]);
    assert_eq!(resumed.checkpoint().encode().unwrap(), bytes1);

    let other = {
        let mut st = state(TrainConfig { seed: 12, ..cfg });
        train(&mut st, &samples, None).unwrap();
        st.checkpoint().encode().unwrap()
    };
    assert_ne!(other, bytes1);
}

#[test]
fn checkpoint_round_trip_reproduces_forward_outputs() {
    let samples = generate_dataset(&SceneConfig::default(), 4, 40).unwrap();
    let mut st = state(TrainConfig {
        epochs: 1,
        batch_size: 2,
        ..TrainConfig::default()
    });
    train(&mut st, &samples, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.asln");
    st.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, st.checkpoint());
    let path2 = dir.path().join("b.asln");
    save_checkpoint(&back, &path2).unwrap();
    assert_eq!(std::fs::read(&path2).unwrap(), bytes);

    let batch = random_batch(2, 64, 9);
    let model = load_model(&path).unwrap();
    let restored = TrainState::load(&path, st.config.clone()).unwrap();
    let expected = st.model.predict_logits(&batch.images).unwrap();
    assert_eq!(model.predict_logits(&batch.images).unwrap(), expected);
    assert_eq!(restored.model.predict_logits(&batch.images).unwrap(), expected);
    assert_eq!(restored.disc.score(&batch.labels).unwrap(), st.disc.score(&batch.labels).unwrap());
    assert_eq!(restored.opt_seg, st.opt_seg);
    assert_eq!(restored.opt_disc, st.opt_disc);
}

#[test]
fn damaged_checkpoint_files_are_rejected() {
    let st = state(TrainConfig::default());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.asln");
    st.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let err = load_model(&path).unwrap_err();
    assert!(matches!(err, Error::Format { .. }));
    assert!(err.to_string().contains("c.asln"), "{err}");

    let mut flipped = bytes.clone();
    flipped[bytes.len() / 3] ^= 1;
    std::fs::write(&path, &flipped).unwrap();
    assert!(matches!(load_model(&path), Err(Error::Format { .. })));

    let mut version = bytes;
    version[4..8].copy_from_slice(&7u32.to_le_bytes());
    std::fs::write(&path, &version).unwrap();
    assert!(matches!(load_model(&path), Err(Error::Format { offset: 4, .. })));

    assert!(matches!(load_model(&dir.path().join("missing.asln")), Err(Error::Io { .. })));
}

#[test]
fn pixel_loss_falls_tenfold_on_rectangles() {
    let samples = generate_dataset(&rectangles(), 64, 50).unwrap();
    let mut st = TrainState::new(
        SegmentationConfig::default(),
        DiscriminatorConfig::default(),
        TrainConfig {
            epochs: 30,
            seed: 3,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let initial = {
        let probs = aslnet::eval::predict_samples(&st.model, &samples, 16).unwrap();
        let mut sum = 0.0;
        for (p, s) in probs.iter().zip(&samples) {
            let err: f64 = p.data().iter().zip(s.label.bits()).map(|(x, &y)| (x - y as f64).powi(2)).sum();
            sum += err / p.numel() as f64;
        }
        sum / samples.len() as f64
    };
    let logs = train(&mut st, &samples, None).unwrap();
    let last = logs.last().unwrap().loss_pix;
    assert!(last * 10.0 <= initial, "initial {initial}, final {last}");
}

#[test]
fn flips_mirror_images_and_labels_together() {
    let samples = generate_dataset(&SceneConfig::default(), 2, 60).unwrap();
    let refs: Vec<_> = samples.iter().collect();
    let plain = make_batch(&refs, &[(false, false), (false, false)]).unwrap();
    let flipped = make_batch(&refs, &[(true, false), (true, true)]).unwrap();
    let n = 64;
    for r in 0..n {
        for c in 0..n {
            let at = |t: &Tensor, i: usize, r: usize, c: usize| t.data()[i * n * n + r * n + c];
            assert_eq!(at(&flipped.images, 0, r, c), at(&plain.images, 0, r, n - 1 - c));
            assert_eq!(at(&flipped.labels, 1, r, c), at(&plain.labels, 1, n - 1 - r, n - 1 - c));
        }
    }
    let t = Tensor::from_fn(&[1, 2, 3, 4], |i| i as f64);
    assert_eq!(flip(&flip(&t, true, true).unwrap(), true, true).unwrap(), t);
}

#[test]
fn binarize_tie_and_extremes() {
    let half = Tensor::full(&[1, 1, 4, 5], 0.5);
    assert_eq!(binarize(&half, 0.5).unwrap().count_ones(), 20);
    let low = Tensor::full(&[1, 1, 4, 5], 0.998);
    assert_eq!(binarize(&low, 0.999).unwrap().count_ones(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binarize_matches_elementwise_comparison(seed in any::<u64>(), t in 0.01f64..0.99, h in 1usize..12, w in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Tensor::from_fn(&[1, 1, h, w], |_| rng.random::<f64>());
        let m = binarize(&p, t).unwrap();
        for r in 0..h {
            for c in 0..w {
                prop_assert_eq!(m.get(r, c), p.data()[r * w + c] >= t);
            }
        }
    }

    #[test]
    fn shape_loss_is_symmetric_and_losses_non_negative(seed in any::<u64>()) {
        let disc = ShapeDiscriminator::new(small_disc(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::from_fn(&[1, 1, 16, 16], |_| rng.random::<f64>());
        let b = Tensor::from_fn(&[1, 1, 16, 16], |_| rng.random::<f64>());
        let shape = |x: &Tensor, y: &Tensor| {
            let mut tape = Tape::new();
            let bind = disc.params.bind(&mut tape, false);
            let (x, y) = (tape.constant(x.clone()), tape.constant(y.clone()));
            let sx = disc.forward(&mut tape, &bind, x).unwrap();
            let sy = disc.forward(&mut tape, &bind, y).unwrap();
            let l = tape.mse(sx, sy).unwrap();
            tape.value(l).item().unwrap()
        };
        let (ab, ba) = (shape(&a, &b), shape(&b, &a));
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(shape(&a, &a), 0.0);
    }

    #[test]
    fn segmenter_loss_is_non_negative(seed in 0u64..1000) {
        let cfg = TrainConfig { seed, ..TrainConfig::default() };
        let mut st = state(cfg.clone());
        let b = random_batch(1, 32, seed);
        let l = segmenter_step(&mut st.model, &st.disc, &b, &cfg, &mut st.opt_seg).unwrap();
        prop_assert!(l.seg >= 0.0 && l.pix >= 0.0 && l.shape >= 0.0);
        prop_assert!((l.seg - (cfg.alpha * l.pix + cfg.beta * l.shape)).abs() <= 1e-12 * l.seg.max(1.0));
    }
}
