//! Shape discriminator over single-channel maps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::Conv;
use super::params::{Bindings, ParamStore};
use crate::autodiff::{ConvSpec, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    /// Output widths of the stride-2 convolutions.
    pub widths: Vec<usize>,
    /// Average-pooling factor applied before the convolutions; it softens
    /// hard 0/1 label edges into fractional boundary cells.
    pub pool_factor: usize,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            widths: vec![16, 32, 64, 128],
            pool_factor: 2,
            leaky_slope: 0.2,
        }
    }
}

impl DiscriminatorConfig {
    /// Input-to-score downsampling factor.
    pub fn total_stride(&self) -> usize {
        self.pool_factor << self.widths.len()
    }
}

/// Scores a map in `[0, 1]` with a raw (pre-sigmoid) score map at
/// `1 / total_stride` resolution. It only ever sees one channel, never the
/// image.
#[derive(Debug, Clone)]
pub struct ShapeDiscriminator {
    pub config: DiscriminatorConfig,
    pub params: ParamStore,
    convs: Vec<Conv>,
    head: Conv,
}

impl ShapeDiscriminator {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        if config.widths.is_empty() || config.pool_factor == 0 || config.widths.contains(&0) {
            return Err(Error::Usage(format!("invalid discriminator configuration {config:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut cin = 1;
        let mut convs = Vec::with_capacity(config.widths.len());
        for (i, &w) in config.widths.iter().enumerate() {
            let spec = ConvSpec::new(cin, w, 3).stride(2).padding(1);
            convs.push(Conv::new(&mut params, &format!("sd.conv{}", i + 1), spec, &mut rng));
            cin = w;
        }
        let head = Conv::new(&mut params, "sd.score", ConvSpec::new(cin, 1, 1), &mut rng);
        Ok(ShapeDiscriminator {
            config,
            params,
            convs,
            head,
        })
    }

    pub fn score_head(&self) -> &Conv {
        &self.head
    }

    fn check_input(&self, map: &Tensor) -> Result<()> {
        let (_, c, h, w) = map.dims4()?;
        if c != 1 {
            return Err(Error::Dimension(format!(
                "discriminator takes a single-channel map, got {c} channels"
            )));
        }
        let s = self.config.total_stride();
        if h == 0 || w == 0 || h % s != 0 || w % s != 0 {
            return Err(Error::Geometry(format!("map {h}x{w} is not divisible by {s}")));
        }
        Ok(())
    }

    /// Raw score map `[N, 1, H/s, W/s]`.
    pub fn forward(&self, tape: &mut Tape, b: &Bindings, map: Var) -> Result<Var> {
        self.check_input(tape.value(map))?;
        let mut x = tape.avg_pool2d(map, self.config.pool_factor)?;
        for conv in &self.convs {
            x = conv.forward(tape, b, x)?;
            x = tape.leaky_relu(x, self.config.leaky_slope);
        }
        self.head.forward(tape, b, x)
    }

    pub fn score(&self, map: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, false);
        let x = tape.constant(map.clone());
        let s = self.forward(&mut tape, &b, x)?;
        Ok(tape.value(s).clone())
    }
}
