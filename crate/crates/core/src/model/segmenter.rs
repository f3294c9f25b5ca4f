//! Encoder-decoder segmentation network with an optional shape regularizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Conv, ConvBlock, DeformConv};
use super::params::{Bindings, ParamStore};
use crate::autodiff::{ConvSpec, DeformableConvSpec, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Three-stage plain conv encoder (1/2, 1/4, 1/8 resolution) with a decoder
/// that fuses the upsampled 1/8 features with the 1/4 features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdfcnConfig {
    pub input_channels: usize,
    pub base_width: usize,
    pub norm_groups: usize,
}

impl Default for EdfcnConfig {
    fn default() -> Self {
        EdfcnConfig {
            input_channels: 1,
            base_width: 16,
            norm_groups: 4,
        }
    }
}

impl EdfcnConfig {
    /// Channels of the fused 1/4-scale feature map.
    pub fn fused_width(&self) -> usize {
        2 * self.base_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentationConfig {
    pub edfcn: EdfcnConfig,
    /// Ablation switch for the shape regularizer head.
    pub shape_regularizer: bool,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            edfcn: EdfcnConfig::default(),
            shape_regularizer: true,
        }
    }
}

#[derive(Debug, Clone)]
struct Edfcn {
    stages: [[ConvBlock; 2]; 3],
    fuse: ConvBlock,
}

impl Edfcn {
    fn new(store: &mut ParamStore, cfg: &EdfcnConfig, rng: &mut impl Rng) -> Self {
        let w = cfg.base_width;
        let widths = [(cfg.input_channels, w), (w, 2 * w), (2 * w, 4 * w)];
        let stages = std::array::from_fn(|s| {
            let (cin, cout) = widths[s];
            let down = ConvSpec::new(cin, cout, 3).stride(2).padding(1);
            let same = ConvSpec::new(cout, cout, 3).padding(1);
            [
                ConvBlock::new(store, &format!("enc{}.down", s + 1), down, cfg.norm_groups, rng),
                ConvBlock::new(store, &format!("enc{}.conv", s + 1), same, cfg.norm_groups, rng),
            ]
        });
        let fuse = ConvBlock::new(
            store,
            "dec.fuse",
            ConvSpec::new(6 * w, 2 * w, 3).padding(1),
            cfg.norm_groups,
            rng,
        );
        Edfcn { stages, fuse }
    }

    fn forward(&self, tape: &mut Tape, b: &Bindings, image: Var) -> Result<Var> {
        let mut x = image;
        let mut quarter = None;
        for (s, [down, conv]) in self.stages.iter().enumerate() {
            x = down.forward(tape, b, x)?;
            x = conv.forward(tape, b, x)?;
            if s == 1 {
                quarter = Some(x);
            }
        }
        let up = tape.upsample_bilinear(x, 2)?;
        let cat = tape.concat_channels(up, quarter.expect("three stages"))?;
        self.fuse.forward(tape, b, cat)
    }
}

/// Dilated residual unit, deformable conv and a 1×1 projection to one
/// logit channel, all at 1/4 resolution.
#[derive(Debug, Clone)]
pub struct ShapeRegularizer {
    pub dilated1: Conv,
    pub dilated2: Conv,
    pub deform: DeformConv,
    pub project: Conv,
}

/// Dilation of both convolutions in the residual unit. Two stacked 3×3
/// taps at rate 2 span 9×9 cells, i.e. 36×36 input pixels at 1/4 scale.
pub const SR_DILATION: usize = 2;

impl ShapeRegularizer {
    fn new(store: &mut ParamStore, width: usize, rng: &mut impl Rng) -> Self {
        let dilated = ConvSpec::new(width, width, 3)
            .dilation(SR_DILATION)
            .padding(SR_DILATION);
        ShapeRegularizer {
            dilated1: Conv::new(store, "sr.dilated1", dilated, rng),
            dilated2: Conv::new(store, "sr.dilated2", dilated, rng),
            deform: DeformConv::new(store, "sr.deform", DeformableConvSpec::new(width, width, 3), rng),
            project: Conv::new(store, "sr.project", ConvSpec::new(width, 1, 1), rng),
        }
    }

    /// `relu(x + DC2(relu(DC1(x))))`
    pub fn dilated_unit(&self, tape: &mut Tape, b: &Bindings, x: Var) -> Result<Var> {
        let y = self.dilated1.forward(tape, b, x)?;
        let y = tape.relu(y);
        let y = self.dilated2.forward(tape, b, y)?;
        let y = tape.add(x, y)?;
        Ok(tape.relu(y))
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, features: Var) -> Result<Var> {
        let y = self.dilated_unit(tape, b, features)?;
        let y = self.deform.forward(tape, b, y)?;
        let y = tape.relu(y);
        self.project.forward(tape, b, y)
    }

    /// The same stack with the deformable layer evaluated as a plain conv.
    pub fn forward_plain(&self, tape: &mut Tape, b: &Bindings, features: Var) -> Result<Var> {
        let y = self.dilated_unit(tape, b, features)?;
        let y = self.deform.forward_plain(tape, b, y)?;
        let y = tape.relu(y);
        self.project.forward(tape, b, y)
    }
}

/// Segmentation network producing pre-sigmoid logits at input resolution.
#[derive(Debug, Clone)]
pub struct SegmentationModel {
    pub config: SegmentationConfig,
    pub params: ParamStore,
    edfcn: Edfcn,
    sr: Option<ShapeRegularizer>,
    head: Option<Conv>,
}

impl SegmentationModel {
    pub fn new(config: SegmentationConfig, seed: u64) -> Result<Self> {
        let e = &config.edfcn;
        if e.base_width == 0 || e.input_channels == 0 || e.norm_groups == 0 || e.base_width % e.norm_groups != 0 {
            return Err(Error::Usage(format!("invalid encoder configuration {e:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let edfcn = Edfcn::new(&mut params, e, &mut rng);
        let (sr, head) = if config.shape_regularizer {
            (Some(ShapeRegularizer::new(&mut params, e.fused_width(), &mut rng)), None)
        } else {
            let head = Conv::new(&mut params, "head", ConvSpec::new(e.fused_width(), 1, 1), &mut rng);
            (None, Some(head))
        };
        Ok(SegmentationModel {
            config,
            params,
            edfcn,
            sr,
            head,
        })
    }

    pub fn shape_regularizer(&self) -> Option<&ShapeRegularizer> {
        self.sr.as_ref()
    }

    /// The 1×1 convolution producing the single logit channel.
    pub fn final_projection(&self) -> &Conv {
        match (&self.sr, &self.head) {
            (Some(sr), _) => &sr.project,
            (None, Some(head)) => head,
            (None, None) => unreachable!("model has either a regularizer or a head"),
        }
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let (_, c, h, w) = image.dims4()?;
        if c != self.config.edfcn.input_channels {
            return Err(Error::Dimension(format!(
                "model expects {} input channels, got {c}",
                self.config.edfcn.input_channels
            )));
        }
        if h % 8 != 0 || w % 8 != 0 || h == 0 || w == 0 {
            return Err(Error::Geometry(format!("input {h}x{w} is not divisible by 8")));
        }
        Ok(())
    }

    /// 1/4-resolution fused encoder-decoder features.
    pub fn features(&self, tape: &mut Tape, b: &Bindings, image: Var) -> Result<Var> {
        self.check_input(tape.value(image))?;
        self.edfcn.forward(tape, b, image)
    }

    /// Logits `P` with the input's height and width.
    pub fn forward(&self, tape: &mut Tape, b: &Bindings, image: Var) -> Result<Var> {
        let f = self.features(tape, b, image)?;
        let logits = match &self.sr {
            Some(sr) => sr.forward(tape, b, f)?,
            None => self.final_projection().forward(tape, b, f)?,
        };
        tape.upsample_bilinear(logits, 4)
    }

    /// Forward pass with the deformable layer replaced by a plain conv.
    pub fn forward_plain(&self, tape: &mut Tape, b: &Bindings, image: Var) -> Result<Var> {
        let f = self.features(tape, b, image)?;
        let logits = match &self.sr {
            Some(sr) => sr.forward_plain(tape, b, f)?,
            None => self.final_projection().forward(tape, b, f)?,
        };
        tape.upsample_bilinear(logits, 4)
    }

    /// Inference: logits for a batch of images.
    pub fn predict_logits(&self, image: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, false);
        let x = tape.constant(image.clone());
        let p = self.forward(&mut tape, &b, x)?;
        Ok(tape.value(p).clone())
    }

    /// Inference: `σ(P)` for a batch of images.
    pub fn predict_proba(&self, image: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, false);
        let x = tape.constant(image.clone());
        let p = self.forward(&mut tape, &b, x)?;
        let s = tape.sigmoid(p);
        Ok(tape.value(s).clone())
    }
}
