use crate::autodiff::{optimizer_step, AdamState, Tape, Var};
use crate::error::{Error, Result};
use crate::model::{Bindings, SegmentationModel, ShapeDiscriminator};
use crate::tensor::Tensor;

use super::TrainConfig;

/// Images and labels stacked as `[N, C, H, W]` and `[N, 1, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Tensor,
}

impl Batch {
    pub fn new(images: Tensor, labels: Tensor) -> Result<Self> {
        let (n, _, h, w) = images.dims4()?;
        let (ln, lc, lh, lw) = labels.dims4()?;
        if (ln, lc, lh, lw) != (n, 1, h, w) {
            return Err(Error::Dimension(format!(
                "labels {:?} do not fit images {:?}",
                labels.shape(),
                images.shape()
            )));
        }
        Ok(Batch { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loss values of one training batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchLosses {
    /// Discriminator loss; 0 when the discriminator is off.
    pub dis: f64,
    pub pix: f64,
    /// Shape loss; 0 when the discriminator is off.
    pub shape: f64,
    /// `α·pix + β·shape`.
    pub seg: f64,
}

fn constant_like(tape: &mut Tape, like: Var, value: f64) -> Var {
    let shape = tape.value(like).shape().to_vec();
    tape.constant(Tensor::full(&shape, value))
}

/// Fills the discriminator's gradient slots with `∂L_Dis` for real maps
/// `labels` and fake maps `fake`, and returns `L_Dis`.
pub fn discriminator_gradients(disc: &mut ShapeDiscriminator, labels: &Tensor, fake: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let b = disc.params.bind(&mut tape, true);
    let real = tape.constant(labels.clone());
    let fake = tape.constant(fake.clone());
    let real_score = disc.forward(&mut tape, &b, real)?;
    let fake_score = disc.forward(&mut tape, &b, fake)?;
    let real_prob = tape.sigmoid(real_score);
    let fake_prob = tape.sigmoid(fake_score);
    let ones = constant_like(&mut tape, real_prob, 1.0);
    let zeros = constant_like(&mut tape, fake_prob, 0.0);
    let real_loss = tape.bce(real_prob, ones)?;
    let fake_loss = tape.bce(fake_prob, zeros)?;
    let loss = tape.add(real_loss, fake_loss)?;
    tape.backward(loss)?;
    disc.params.zero_grads();
    b.collect_grads(&tape, &mut disc.params);
    tape.value(loss).item()
}

/// One discriminator update with the segmenter frozen. Returns `L_Dis`.
pub fn discriminator_step(
    model: &SegmentationModel,
    disc: &mut ShapeDiscriminator,
    batch: &Batch,
    opt: &mut AdamState,
) -> Result<f64> {
    let fake = model.predict_proba(&batch.images)?;
    let loss = discriminator_gradients(disc, &batch.labels, &fake)?;
    optimizer_step(&mut disc.params, opt);
    Ok(loss)
}

/// Builds the segmenter objective on `tape` from `σ(P)` (`prob`). The
/// discriminator enters as constants.
fn segmenter_objective(
    tape: &mut Tape,
    prob: Var,
    labels: &Tensor,
    disc: &ShapeDiscriminator,
    config: &TrainConfig,
) -> Result<(Var, f64, f64)> {
    let target = tape.constant(labels.clone());
    let pix = tape.mse(target, prob)?;
    let weighted_pix = tape.scale(pix, config.alpha);
    if !config.adversarial {
        let pix_value = tape.value(pix).item()?;
        return Ok((weighted_pix, pix_value, 0.0));
    }
    let b = disc.params.bind(tape, false);
    let real_score = disc.forward(tape, &b, target)?;
    let fake_score = disc.forward(tape, &b, prob)?;
    let shape = tape.mse(real_score, fake_score)?;
    let (pix_value, shape_value) = (tape.value(pix).item()?, tape.value(shape).item()?);
    // With β = 0 the shape term is logged but kept out of the graph.
    let total = if config.beta == 0.0 {
        weighted_pix
    } else {
        let weighted_shape = tape.scale(shape, config.beta);
        tape.add(weighted_pix, weighted_shape)?
    };
    Ok((total, pix_value, shape_value))
}

#[allow(clippy::too_many_arguments)]
fn segmenter_update(
    model: &mut SegmentationModel,
    tape: &mut Tape,
    bindings: &Bindings,
    prob: Var,
    batch: &Batch,
    disc: &ShapeDiscriminator,
    config: &TrainConfig,
    opt: &mut AdamState,
) -> Result<BatchLosses> {
    let (total, pix, shape) = segmenter_objective(tape, prob, &batch.labels, disc, config)?;
    tape.backward(total)?;
    model.params.zero_grads();
    bindings.collect_grads(tape, &mut model.params);
    optimizer_step(&mut model.params, opt);
    Ok(BatchLosses {
        dis: 0.0,
        pix,
        shape,
        seg: tape.value(total).item()?,
    })
}

/// One segmenter update with the discriminator frozen.
pub fn segmenter_step(
    model: &mut SegmentationModel,
    disc: &ShapeDiscriminator,
    batch: &Batch,
    config: &TrainConfig,
    opt: &mut AdamState,
) -> Result<BatchLosses> {
    let mut tape = Tape::new();
    let b = model.params.bind(&mut tape, true);
    let x = tape.constant(batch.images.clone());
    let logits = model.forward(&mut tape, &b, x)?;
    let prob = tape.sigmoid(logits);
    segmenter_update(model, &mut tape, &b, prob, batch, disc, config, opt)
}

/// One discriminator step followed by one segmenter step, sharing the
/// segmenter's forward pass. Equivalent to calling [`discriminator_step`]
/// and then [`segmenter_step`].
pub fn train_batch(
    model: &mut SegmentationModel,
    disc: &mut ShapeDiscriminator,
    batch: &Batch,
    config: &TrainConfig,
    opt_seg: &mut AdamState,
    opt_disc: &mut AdamState,
) -> Result<BatchLosses> {
    let mut tape = Tape::new();
    let b = model.params.bind(&mut tape, true);
    let x = tape.constant(batch.images.clone());
    let logits = model.forward(&mut tape, &b, x)?;
    let prob = tape.sigmoid(logits);
    let dis = if config.adversarial {
        let fake = tape.value(prob).clone();
        let loss = discriminator_gradients(disc, &batch.labels, &fake)?;
        optimizer_step(&mut disc.params, opt_disc);
        loss
    } else {
        0.0
    };
    let losses = segmenter_update(model, &mut tape, &b, prob, batch, disc, config, opt_seg)?;
    Ok(BatchLosses { dis, ..losses })
}
