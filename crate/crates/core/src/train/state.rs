use std::path::Path;

use crate::autodiff::AdamState;
use crate::error::{Error, Result};
use crate::model::{DiscriminatorConfig, EdfcnConfig, ParamStore, SegmentationConfig, SegmentationModel, ShapeDiscriminator};

use super::checkpoint::{limbs_to_u64, u64_to_limbs, Checkpoint};
use super::TrainConfig;

/// Everything needed to continue a run: both networks, both optimizers and
/// the number of completed epochs.
///
/// Parameters and optimizer moments are kept `f32`-representable at epoch
/// boundaries, so a run resumed from a checkpoint replays the uninterrupted
/// run exactly.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: SegmentationModel,
    pub disc: ShapeDiscriminator,
    pub opt_seg: AdamState,
    pub opt_disc: AdamState,
    pub epoch: usize,
    pub config: TrainConfig,
}

/// Seed of the discriminator initialisation, kept apart from the segmenter's.
fn disc_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

impl TrainState {
    pub fn new(seg: SegmentationConfig, disc: DiscriminatorConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = SegmentationModel::new(seg, config.seed)?;
        let disc = ShapeDiscriminator::new(disc, disc_seed(config.seed))?;
        let mut state = TrainState {
            opt_seg: AdamState::new(config.lr_seg, &model.params),
            opt_disc: AdamState::new(config.lr_disc, &disc.params),
            model,
            disc,
            epoch: 0,
            config,
        };
        state.round_to_f32();
        Ok(state)
    }

    /// Rounds every stored value to the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        let round = |xs: &mut [f64]| xs.iter_mut().for_each(|x| *x = *x as f32 as f64);
        for store in [&mut self.model.params, &mut self.disc.params] {
            store.iter_mut().for_each(|(_, t)| round(t.data_mut()));
        }
        for opt in [&mut self.opt_seg, &mut self.opt_disc] {
            opt.m.iter_mut().chain(opt.v.iter_mut()).for_each(|xs| round(xs));
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::default();
        push_store(&mut c, "seg", &self.model.params);
        push_store(&mut c, "disc", &self.disc.params);
        push_moments(&mut c, "opt/seg", &self.model.params, &self.opt_seg);
        push_moments(&mut c, "opt/disc", &self.disc.params, &self.opt_disc);
        c.push("meta/epoch", &[4], u64_to_limbs(self.epoch as u64));
        // The RNG of every epoch is derived from the seed and the epoch.
        c.push("meta/seed", &[4], u64_to_limbs(self.config.seed));
        let e = self.model.config.edfcn;
        let seg = [e.input_channels, e.base_width, e.norm_groups, self.model.config.shape_regularizer as usize];
        c.push("meta/seg_config", &[4], seg.map(|v| v as f32));
        let d = &self.disc.config;
        let disc: Vec<f32> = std::iter::once(d.pool_factor).chain(d.widths.iter().copied()).map(|v| v as f32).collect();
        c.push("meta/disc_config", &[disc.len()], disc);
        c
    }

    /// Rebuilds a state from `ckpt`. Learning rates and loss weights come
    /// from `config`; the seed is the stored one.
    pub fn from_checkpoint(ckpt: &Checkpoint, mut config: TrainConfig) -> Result<Self> {
        config.seed = limbs_to_u64(&ckpt.require("meta/seed")?.data)?;
        let seg = seg_config(ckpt)?;
        let widths = counts(&ckpt.require("meta/disc_config")?.data)?;
        if widths.len() < 2 {
            return Err(Error::Usage("checkpoint has an empty discriminator configuration".into()));
        }
        let disc_cfg = DiscriminatorConfig {
            pool_factor: widths[0],
            widths: widths[1..].to_vec(),
            ..DiscriminatorConfig::default()
        };
        let mut state = TrainState::new(seg, disc_cfg, config)?;
        load_store(ckpt, "seg", &mut state.model.params)?;
        load_store(ckpt, "disc", &mut state.disc.params)?;
        load_moments(ckpt, "opt/seg", &state.model.params, &mut state.opt_seg)?;
        load_moments(ckpt, "opt/disc", &state.disc.params, &mut state.opt_disc)?;
        state.epoch = usize::try_from(limbs_to_u64(&ckpt.require("meta/epoch")?.data)?)
            .map_err(|_| Error::Usage("epoch counter out of range".into()))?;
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn load(path: &Path, config: TrainConfig) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?, config)
    }
}

/// Loads only the segmentation network from a checkpoint file.
pub fn load_model(path: &Path) -> Result<SegmentationModel> {
    let ckpt = Checkpoint::load(path)?;
    let mut model = SegmentationModel::new(seg_config(&ckpt)?, 0)?;
    load_store(&ckpt, "seg", &mut model.params)?;
    Ok(model)
}

fn seg_config(ckpt: &Checkpoint) -> Result<SegmentationConfig> {
    let v = counts(&ckpt.require("meta/seg_config")?.data)?;
    if v.len() != 4 || v[3] > 1 {
        return Err(Error::Usage("malformed segmenter configuration in checkpoint".into()));
    }
    Ok(SegmentationConfig {
        edfcn: EdfcnConfig {
            input_channels: v[0],
            base_width: v[1],
            norm_groups: v[2],
        },
        shape_regularizer: v[3] == 1,
    })
}

fn counts(xs: &[f32]) -> Result<Vec<usize>> {
    xs.iter()
        .map(|&x| {
            if x >= 0.0 && x.fract() == 0.0 && x < 16_777_216.0 {
                Ok(x as usize)
            } else {
                Err(Error::Usage(format!("bad integer {x} in checkpoint metadata")))
            }
        })
        .collect()
}

fn push_store(c: &mut Checkpoint, prefix: &str, store: &ParamStore) {
    for (name, t) in store.iter() {
        c.push(format!("{prefix}/{name}"), t.shape(), t.data().iter().map(|&x| x as f32));
    }
}

fn push_moments(c: &mut Checkpoint, prefix: &str, store: &ParamStore, opt: &AdamState) {
    for ((name, t), m) in store.iter().zip(&opt.m) {
        c.push(format!("{prefix}/m/{name}"), t.shape(), m.iter().map(|&x| x as f32));
    }
    for ((name, t), v) in store.iter().zip(&opt.v) {
        c.push(format!("{prefix}/v/{name}"), t.shape(), v.iter().map(|&x| x as f32));
    }
    c.push(format!("{prefix}/step"), &[4], u64_to_limbs(opt.step));
}

fn widen(xs: &[f32]) -> Vec<f64> {
    xs.iter().map(|&x| x as f64).collect()
}

fn load_store(c: &Checkpoint, prefix: &str, store: &mut ParamStore) -> Result<()> {
    store.load(|name| {
        c.get(&format!("{prefix}/{name}"))
            .map(|t| (t.shape.as_slice(), widen(&t.data)))
    })
}

fn load_moments(c: &Checkpoint, prefix: &str, store: &ParamStore, opt: &mut AdamState) -> Result<()> {
    for (i, (name, t)) in store.iter().enumerate() {
        for (kind, slot) in [("m", &mut opt.m[i]), ("v", &mut opt.v[i])] {
            let key = format!("{prefix}/{kind}/{name}");
            let stored = c.require(&key)?;
            if stored.shape != t.shape() {
                return Err(Error::Dimension(format!("{key} has shape {:?}, expected {:?}", stored.shape, t.shape())));
            }
            *slot = widen(&stored.data);
        }
    }
    opt.step = limbs_to_u64(&c.require(&format!("{prefix}/step"))?.data)?;
    Ok(())
}
