use crate::config::{parse_bool, parse_value, KeyValueConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the pixel loss.
    pub alpha: f64,
    /// Weight of the shape loss; 0 gives the pixel-only baseline.
    pub beta: f64,
    pub lr_seg: f64,
    /// Kept well below `lr_seg`: a faster discriminator inflates its raw
    /// scores until the shape loss swamps the pixel loss.
    pub lr_disc: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub binarize_threshold: f64,
    /// Train the shape discriminator and use the shape loss.
    pub adversarial: bool,
    /// Random horizontal and vertical flips per sample and epoch.
    pub flips: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 5.0,
            beta: 1.0,
            lr_seg: 2e-4,
            lr_disc: 5e-6,
            batch_size: 8,
            epochs: 30,
            seed: 0,
            binarize_threshold: 0.5,
            adversarial: true,
            flips: true,
        }
    }
}

impl TrainConfig {
    /// The shape-loss weight actually applied.
    pub fn effective_beta(&self) -> f64 {
        if self.adversarial {
            self.beta
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Usage(m));
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta >= 0.0) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if !(self.lr_seg > 0.0 && self.lr_disc > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return bad(format!("binarize_threshold {} outside (0, 1)", self.binarize_threshold));
        }
        Ok(())
    }
}

impl KeyValueConfig for TrainConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "alpha" => self.alpha = parse_value(key, value)?,
            "beta" => self.beta = parse_value(key, value)?,
            "lr_seg" => self.lr_seg = parse_value(key, value)?,
            "lr_disc" => self.lr_disc = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "binarize_threshold" => self.binarize_threshold = parse_value(key, value)?,
            "adversarial" => self.adversarial = parse_bool(key, value)?,
            "flips" => self.flips = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("lr_seg", self.lr_seg.to_string()),
            ("lr_disc", self.lr_disc.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("binarize_threshold", self.binarize_threshold.to_string()),
            ("adversarial", self.adversarial.to_string()),
            ("flips", self.flips.to_string()),
        ]
    }
}
