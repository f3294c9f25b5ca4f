//! A small raster line plot written as PNG.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];
pub const BLACK: Rgb = [0, 0, 0];
pub const GRID: Rgb = [220, 220, 220];
pub const LINE: Rgb = [40, 90, 200];
pub const MARKER: Rgb = [200, 40, 40];

const WIDTH: usize = 480;
const HEIGHT: usize = 320;
const LEFT: usize = 64;
const RIGHT: usize = 16;
const TOP: usize = 16;
const BOTTOM: usize = 40;
const MARKER_HALF: i64 = 2;

/// 3×5 glyphs, one row per entry, high bit on the left.
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        'A' => [0b010, 0b101, 0b111, 0b101, 0b101],
        'O' => [0b111, 0b101, 0b101, 0b101, 0b111],
        'T' => [0b111, 0b010, 0b010, 0b010, 0b010],
        ' ' => [0; 5],
        _ => return None,
    })
}

/// An RGB canvas with a fixed data-to-pixel mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Canvas {
    fn new(x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Canvas {
            width: WIDTH,
            height: HEIGHT,
            pixels: vec![WHITE; WIDTH * HEIGHT],
            x_range,
            y_range,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = c;
        }
    }

    /// Pixel position of a data point.
    pub fn to_pixel(&self, x: f64, y: f64) -> (usize, usize) {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        let pw = (self.width - LEFT - RIGHT - 1) as f64;
        let ph = (self.height - TOP - BOTTOM - 1) as f64;
        let px = LEFT as f64 + (x - x0) / (x1 - x0) * pw;
        let py = TOP as f64 + (1.0 - (y - y0) / (y1 - y0)) * ph;
        (px.round() as usize, py.round() as usize)
    }

    fn line(&mut self, (x0, y0): (usize, usize), (x1, y1): (usize, usize), c: Rgb) {
        let (mut x, mut y) = (x0 as i64, y0 as i64);
        let (x1, y1) = (x1 as i64, y1 as i64);
        let (dx, dy) = ((x1 - x).abs(), -(y1 - y).abs());
        let (sx, sy) = (if x < x1 { 1 } else { -1 }, if y < y1 { 1 } else { -1 });
        let mut err = dx + dy;
        loop {
            self.put(x, y, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn text(&mut self, x: usize, y: usize, s: &str, scale: usize) {
        let mut cx = x;
        for ch in s.chars() {
            if let Some(rows) = glyph(ch) {
                for (r, bits) in rows.iter().enumerate() {
                    for col in 0..3 {
                        if bits & (0b100 >> col) != 0 {
                            for dy in 0..scale {
                                for dx in 0..scale {
                                    self.put((cx + col * scale + dx) as i64, (y + r * scale + dy) as i64, BLACK);
                                }
                            }
                        }
                    }
                }
            }
            cx += 4 * scale;
        }
    }

    pub fn write_png(&self, path: &Path) -> anyhow::Result<()> {
        let file = File::create(path).map_err(|e| anyhow::anyhow!("creating {}: {e}", path.display()))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        let data: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        w.write_image_data(&data)?;
        Ok(())
    }
}

/// The y range shown for `values`: the data span plus a margin, at least
/// 0.01 wide.
fn y_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.1).max(0.005);
    (lo - pad, hi + pad)
}

/// Plots `(threshold, OA)` pairs on a `[0, 1]` threshold axis.
pub fn plot_curve(points: &[(f64, f64)]) -> Canvas {
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (y0, y1) = if ys.is_empty() { (0.0, 1.0) } else { y_range(&ys) };
    let mut c = Canvas::new((0.0, 1.0), (y0, y1));
    let corner = c.to_pixel(0.0, y0);
    let top = c.to_pixel(0.0, y1);
    let right = c.to_pixel(1.0, y0);
    for i in 1..10 {
        let t = i as f64 / 10.0;
        let (x, _) = c.to_pixel(t, y0);
        c.line((x, top.1), (x, corner.1), GRID);
        c.line((x, corner.1), (x, corner.1 + 4), BLACK);
        c.text(x.saturating_sub(5), corner.1 + 8, &format!("{t:.1}"), 1);
    }
    c.line(corner, top, BLACK);
    c.line(corner, right, BLACK);
    c.text(4, top.1, &format!("{y1:.3}"), 1);
    c.text(4, corner.1 - 5, &format!("{y0:.3}"), 1);
    c.text(4, (top.1 + corner.1) / 2 - 5, "OA", 2);
    c.text(right.0 - 8, corner.1 + 20, "T", 2);
    let px: Vec<(usize, usize)> = points.iter().map(|&(x, y)| c.to_pixel(x, y)).collect();
    for w in px.windows(2) {
        c.line(w[0], w[1], LINE);
    }
    for &(x, y) in &px {
        for dy in -MARKER_HALF..=MARKER_HALF {
            for dx in -MARKER_HALF..=MARKER_HALF {
                c.put(x as i64 + dx, y as i64 + dy, MARKER);
            }
        }
    }
    c
}

/// Reads an RGB PNG back into a canvas-sized pixel list.
pub fn read_png(path: &Path) -> anyhow::Result<(usize, usize, Vec<Rgb>)> {
    let decoder = png::Decoder::new(std::io::BufReader::new(File::open(path)?));
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    anyhow::ensure!(info.color_type == png::ColorType::Rgb, "expected an RGB image");
    let pixels = buf[..info.buffer_size()].chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok((info.width as usize, info.height as usize, pixels))
}
