//! Flat run configuration: scene, model and training settings in one file.

use std::path::Path;

use aslnet::config::{parse_bool, parse_lines, parse_value, render, KeyValueConfig};
use aslnet::model::{DiscriminatorConfig, EdfcnConfig, SegmentationConfig};
use aslnet::synth::SceneConfig;
use aslnet::train::TrainConfig;
use aslnet::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub seg: SegmentationConfig,
    pub disc: DiscriminatorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            seg: SegmentationConfig {
                edfcn: EdfcnConfig::default(),
                shape_regularizer: true,
            },
            disc: DiscriminatorConfig::default(),
        }
    }
}

impl KeyValueConfig for ModelConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let e = &mut self.seg.edfcn;
        match key {
            "input_channels" => e.input_channels = parse_value(key, value)?,
            "base_width" => e.base_width = parse_value(key, value)?,
            "norm_groups" => e.norm_groups = parse_value(key, value)?,
            "shape_regularizer" => self.seg.shape_regularizer = parse_bool(key, value)?,
            "disc_widths" => {
                self.disc.widths = value
                    .split(',')
                    .map(|w| parse_value(key, w))
                    .collect::<Result<_>>()?
            }
            "disc_pool" => self.disc.pool_factor = parse_value(key, value)?,
            "disc_leaky_slope" => self.disc.leaky_slope = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let e = &self.seg.edfcn;
        let widths: Vec<String> = self.disc.widths.iter().map(|w| w.to_string()).collect();
        vec![
            ("input_channels", e.input_channels.to_string()),
            ("base_width", e.base_width.to_string()),
            ("norm_groups", e.norm_groups.to_string()),
            ("shape_regularizer", self.seg.shape_regularizer.to_string()),
            ("disc_widths", widths.join(",")),
            ("disc_pool", self.disc.pool_factor.to_string()),
            ("disc_leaky_slope", self.disc.leaky_slope.to_string()),
        ]
    }
}

/// Everything a command may read from a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Images per inference batch during evaluation.
    pub eval_batch_size: usize,
}

pub const DEFAULT_EVAL_BATCH: usize = 16;

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: SceneConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval_batch_size: DEFAULT_EVAL_BATCH,
        }
    }
}

impl RunConfig {
    pub fn new() -> Self {
        RunConfig::default()
    }

    /// Parses config text on top of the defaults. Unknown keys and bad
    /// values are reported with their line number.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::new();
        for (line, key, value) in parse_lines(text)? {
            let known = cfg
                .set(&key, &value)
                .map_err(|e| Error::Usage(format!("line {line}: {}", strip_usage(e))))?;
            if !known {
                return Err(Error::Usage(format!("line {line}: unknown key `{key}`")));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::new());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::Error::new(e).context(format!("reading config {}", path.display())))?;
        RunConfig::parse(&text).map_err(|e| match e {
            Error::Usage(m) => Error::Usage(format!("{}: {m}", path.display())).into(),
            other => other.into(),
        })
    }

    pub fn render(&self) -> String {
        render(&self.entries())
    }
}

fn strip_usage(e: Error) -> String {
    match e {
        Error::Usage(m) => m,
        other => other.to_string(),
    }
}

impl KeyValueConfig for RunConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        if key == "eval_batch_size" {
            self.eval_batch_size = parse_value(key, value)?;
            return Ok(true);
        }
        Ok(self.scene.set(key, value)? || self.model.set(key, value)? || self.train.set(key, value)?)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = self.scene.entries();
        out.extend(self.model.entries());
        out.extend(self.train.entries());
        out.push(("eval_batch_size", self.eval_batch_size.to_string()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = RunConfig::new();
        assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
        let keys: Vec<&str> = cfg.entries().iter().map(|e| e.0).collect();
        let mut unique = keys.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), keys.len(), "keys shared between sections");
    }

    #[test]
    fn file_values_override_defaults() {
        let cfg = RunConfig::parse("# comment\nbeta = 0.5\n\nbase_width = 8\ndisc_widths = 8,16\nn_buildings = 1..2\n").unwrap();
        assert_eq!(cfg.train.beta, 0.5);
        assert_eq!(cfg.model.seg.edfcn.base_width, 8);
        assert_eq!(cfg.model.disc.widths, vec![8, 16]);
        assert_eq!(cfg.scene.n_buildings, (1, 2));
    }

    #[test]
    fn errors_name_the_line() {
        let err = RunConfig::parse("alpha = 2\n\nbogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("bogus"), "{err}");
        let err = RunConfig::parse("epochs = many\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        let err = RunConfig::parse("alpha 2\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }
}
