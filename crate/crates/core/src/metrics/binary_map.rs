use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-major raster of `{0, 1}` values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMap {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl BinaryMap {
    pub fn new(width: usize, height: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}x{height} map given {} values",
                bits.len()
            )));
        }
        if let Some(v) = bits.iter().find(|&&v| v > 1) {
            return Err(Error::Usage(format!("binary map value {v} is not 0 or 1")));
        }
        Ok(BinaryMap { width, height, bits })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        BinaryMap {
            width,
            height,
            bits: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                bits.push(u8::from(f(r, c)));
            }
        }
        BinaryMap { width, height, bits }
    }

    /// Foreground where `value >= threshold`; ties count as foreground.
    pub fn from_threshold(width: usize, height: usize, values: &[f64], threshold: f64) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}x{height} map given {} values",
                values.len()
            )));
        }
        Ok(BinaryMap {
            width,
            height,
            bits: values.iter().map(|&v| u8::from(v >= threshold)).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col] == 1
    }

    /// Out-of-range reads are background.
    pub fn get_signed(&self, row: isize, col: isize) -> bool {
        row >= 0
            && col >= 0
            && (row as usize) < self.height
            && (col as usize) < self.width
            && self.get(row as usize, col as usize)
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = u8::from(value);
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn same_size(&self, other: &BinaryMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn invert(&self) -> BinaryMap {
        BinaryMap {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| 1 - b).collect(),
        }
    }

    /// Quarter turn clockwise; the result is `height × width`.
    pub fn rotate90(&self) -> BinaryMap {
        let (w, h) = (self.height, self.width);
        BinaryMap::from_fn(w, h, |r, c| self.get(self.height - 1 - c, r))
    }

    /// Shifts content by `(dr, dc)` on a canvas of the same size; pixels
    /// pushed off the canvas are lost.
    pub fn translate(&self, dr: isize, dc: isize) -> BinaryMap {
        BinaryMap::from_fn(self.width, self.height, |r, c| {
            self.get_signed(r as isize - dr, c as isize - dc)
        })
    }

    /// `[1, 1, H, W]` tensor of 0.0 / 1.0.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            &[1, 1, self.height, self.width],
            self.bits.iter().map(|&b| f64::from(b)).collect(),
        )
        .expect("consistent size")
    }
}
