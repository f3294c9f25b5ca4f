use std::fs;
use std::path::{Path, PathBuf};

use super::{Sample, SceneConfig};
use crate::config::{render, KeyValueConfig};
use crate::error::{Error, Result};
use crate::metrics::BinaryMap;
use crate::tensor::Tensor;

/// 8-bit binary PGM (`P5`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Pgm> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::format(pos, "truncated PGM header"));
            }
            fields.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
        }
        if fields[0].1 != "P5" {
            return Err(Error::format(0, format!("expected magic P5, found {:?}", fields[0].1)));
        }
        let num = |(at, s): &(usize, String)| -> Result<usize> {
            s.parse().map_err(|_| Error::format(*at, format!("invalid header number {s:?}")))
        };
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(Error::format(fields[3].0, format!("unsupported maxval {maxval}")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let n = width * height;
        if bytes.len() < pos + n {
            return Err(Error::format(bytes.len(), format!("raster needs {n} bytes")));
        }
        Ok(Pgm {
            width,
            height,
            pixels: bytes[pos..pos + n].to_vec(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Pgm> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Format { offset, reason } => Error::Format {
                offset,
                reason: format!("{}: {reason}", path.display()),
            },
            other => other,
        })
    }

    /// Quantizes a single-channel `[.., H, W]` image in `[0, 1]`.
    pub fn from_image(image: &Tensor) -> Result<Pgm> {
        let s = image.shape();
        if s.len() < 2 || s[..s.len() - 2].iter().any(|&d| d != 1) {
            return Err(Error::Dimension(format!("expected a single-channel image, got {s:?}")));
        }
        Ok(Pgm {
            width: s[s.len() - 1],
            height: s[s.len() - 2],
            pixels: image.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect(),
        })
    }

    /// `[1, 1, H, W]` tensor of `value / 255`.
    pub fn to_image(&self) -> Tensor {
        Tensor::new(
            &[1, 1, self.height, self.width],
            self.pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
        )
        .expect("consistent size")
    }

    /// Labels are stored as 0 / 255.
    pub fn from_label(map: &BinaryMap) -> Pgm {
        Pgm {
            width: map.width(),
            height: map.height(),
            pixels: map.bits().iter().map(|&b| b * 255).collect(),
        }
    }

    pub fn to_label(&self) -> Result<BinaryMap> {
        let bits = self
            .pixels
            .iter()
            .enumerate()
            .map(|(i, &p)| match p {
                0 => Ok(0),
                255 => Ok(1),
                _ => Err(Error::format(i, format!("label value {p} is neither 0 nor 255"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        BinaryMap::new(self.width, self.height, bits)
    }
}

pub fn image_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("img_{index:05}.pgm"))
}

pub fn label_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("lbl_{index:05}.pgm"))
}

/// Writes images, labels, `manifest.txt` (index and seed per line) and
/// `config.txt`.
pub fn write_dataset(dir: &Path, samples: &[Sample], config: &SceneConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for (i, s) in samples.iter().enumerate() {
        Pgm::from_image(&s.image)?.write(&image_path(dir, i))?;
        Pgm::from_label(&s.label).write(&label_path(dir, i))?;
        manifest.push_str(&format!("{i} {}\n", s.seed));
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("config.txt");
    fs::write(&path, render(&config.entries())).map_err(|e| Error::io(&path, e))
}

/// Reads a dataset written by [`write_dataset`]. Building metadata and
/// distractor masks are not stored and come back empty.
pub fn read_dataset(dir: &Path) -> Result<Vec<Sample>> {
    let path = dir.join("manifest.txt");
    let manifest = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut samples = Vec::new();
    for (line_no, line) in manifest.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Usage(format!("{}: line {}: expected `index seed`", path.display(), line_no + 1));
        let mut parts = line.split_whitespace();
        let index: usize = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let seed: u64 = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let img = Pgm::read(&image_path(dir, index))?;
        let lbl = Pgm::read(&label_path(dir, index))?;
        if (img.width, img.height) != (lbl.width, lbl.height) {
            return Err(Error::Dimension(format!("sample {index}: image and label sizes differ")));
        }
        samples.push(Sample {
            image: img.to_image(),
            label: lbl.to_label()?,
            seed,
            buildings: Vec::new(),
            discs: BinaryMap::zeros(lbl.width, lbl.height),
        });
    }
    Ok(samples)
}
