use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::synth::Sample;
use crate::tensor::Tensor;

use super::steps::{train_batch, Batch, BatchLosses};
use super::TrainState;

/// Number of per-epoch checkpoints kept on disk.
pub const KEEP_CHECKPOINTS: usize = 2;
pub const FINAL_CHECKPOINT: &str = "final.asln";
pub const LOG_HEADER: &str = "epoch,loss_dis,loss_pix,loss_shape,loss_seg";

/// Mean batch losses of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 1-based index of the finished epoch.
    pub epoch: usize,
    pub loss_dis: f64,
    pub loss_pix: f64,
    pub loss_shape: f64,
    pub loss_seg: f64,
}

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.8},{:.8},{:.8},{:.8}",
            self.epoch, self.loss_dis, self.loss_pix, self.loss_shape, self.loss_seg
        )
    }
}

pub fn write_log_csv(mut w: impl Write, logs: &[EpochLog]) -> std::io::Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for l in logs {
        writeln!(w, "{}", l.csv_row())?;
    }
    Ok(())
}

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.asln")
}

/// Mirrors a `[1, C, H, W]` tensor left-right and/or top-bottom.
pub fn flip(t: &Tensor, horizontal: bool, vertical: bool) -> Result<Tensor> {
    let (n, c, h, w) = t.dims4()?;
    let src = t.data();
    let mut out = vec![0.0; src.len()];
    for plane in 0..n * c {
        let base = plane * h * w;
        for r in 0..h {
            let sr = if vertical { h - 1 - r } else { r };
            for col in 0..w {
                let sc = if horizontal { w - 1 - col } else { col };
                out[base + r * w + col] = src[base + sr * w + sc];
            }
        }
    }
    Tensor::new(t.shape(), out)
}

/// Stacks samples into a batch, flipping each one with its own pair of flags.
pub fn make_batch(samples: &[&Sample], flips: &[(bool, bool)]) -> Result<Batch> {
    let first = samples.first().ok_or_else(|| Error::Usage("empty batch".into()))?;
    let (_, c, h, w) = first.image.dims4()?;
    let mut images = Vec::with_capacity(samples.len() * c * h * w);
    let mut labels = Vec::with_capacity(samples.len() * h * w);
    for (s, &(fh, fv)) in samples.iter().zip(flips) {
        if s.image.shape() != first.image.shape() || (s.label.height(), s.label.width()) != (h, w) {
            return Err(Error::Dimension("samples in a batch differ in size".into()));
        }
        images.extend_from_slice(flip(&s.image, fh, fv)?.data());
        let label = Tensor::new(&[1, 1, h, w], s.label.bits().iter().map(|&b| b as f64).collect())?;
        labels.extend_from_slice(flip(&label, fh, fv)?.data());
    }
    let n = samples.len();
    Batch::new(Tensor::new(&[n, c, h, w], images)?, Tensor::new(&[n, 1, h, w], labels)?)
}

/// Deterministic random source of one epoch.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Runs one epoch over `samples` and returns the mean batch losses.
pub fn train_epoch(state: &mut TrainState, samples: &[Sample]) -> Result<EpochLog> {
    if samples.is_empty() {
        return Err(Error::Usage("training set is empty".into()));
    }
    let cfg = state.config.clone();
    let mut rng = epoch_rng(cfg.seed, state.epoch);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let mut sum = BatchLosses::default();
    let mut batches = 0usize;
    for chunk in order.chunks(cfg.batch_size) {
        let picked: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
        let flips: Vec<(bool, bool)> = chunk
            .iter()
            .map(|_| {
                let f = (rng.random::<bool>(), rng.random::<bool>());
                if cfg.flips {
                    f
                } else {
                    (false, false)
                }
            })
            .collect();
        let batch = make_batch(&picked, &flips)?;
        let l = train_batch(
            &mut state.model,
            &mut state.disc,
            &batch,
            &cfg,
            &mut state.opt_seg,
            &mut state.opt_disc,
        )?;
        if ![l.dis, l.pix, l.shape, l.seg].iter().all(|v| v.is_finite()) {
            return Err(Error::Usage(format!("non-finite loss in epoch {}", state.epoch + 1)));
        }
        sum.dis += l.dis;
        sum.pix += l.pix;
        sum.shape += l.shape;
        sum.seg += l.seg;
        batches += 1;
    }
    state.epoch += 1;
    state.round_to_f32();
    let k = batches as f64;
    Ok(EpochLog {
        epoch: state.epoch,
        loss_dis: sum.dis / k,
        loss_pix: sum.pix / k,
        loss_shape: sum.shape / k,
        loss_seg: sum.seg / k,
    })
}

/// Trains from `state.epoch` up to `state.config.epochs`. With a checkpoint
/// directory, a checkpoint is written after every epoch (the last
/// [`KEEP_CHECKPOINTS`] are kept) and as [`FINAL_CHECKPOINT`] at the end.
pub fn train(state: &mut TrainState, samples: &[Sample], checkpoint_dir: Option<&Path>) -> Result<Vec<EpochLog>> {
    train_with_progress(state, samples, checkpoint_dir, |_| {})
}

pub fn train_with_progress(
    state: &mut TrainState,
    samples: &[Sample],
    checkpoint_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    if samples.is_empty() {
        return Err(Error::Usage("training set is empty".into()));
    }
    state.config.validate()?;
    if let Some(dir) = checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut logs = Vec::new();
    let mut written: Vec<PathBuf> = Vec::new();
    while state.epoch < state.config.epochs {
        let log = train_epoch(state, samples)?;
        on_epoch(&log);
        logs.push(log);
        if let Some(dir) = checkpoint_dir {
            let path = dir.join(epoch_checkpoint_name(state.epoch));
            state.save(&path)?;
            written.push(path);
            if written.len() > KEEP_CHECKPOINTS {
                let old = written.remove(0);
                fs::remove_file(&old).map_err(|e| Error::io(&old, e))?;
            }
        }
    }
    if let Some(dir) = checkpoint_dir {
        state.save(&dir.join(FINAL_CHECKPOINT))?;
    }
    Ok(logs)
}
