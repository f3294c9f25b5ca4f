use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::SceneConfig;
use crate::error::{Error, Result};
use crate::metrics::BinaryMap;
use crate::tensor::Tensor;

const SCENE_ATTEMPTS: usize = 20;
const PLACEMENT_ATTEMPTS: usize = 200;
/// Smallest labelled object.
pub const MIN_OBJECT_AREA: usize = 9;

const LAYOUT_STREAM: u64 = 0;
const APPEARANCE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuildingKind {
    Rectangle,
    LShape,
    Bar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Occluder {
    Tree,
    Shadow,
}

/// A placed building and the parameters it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Building {
    pub kind: BuildingKind,
    /// Nominal extents along the building's own column and row axes.
    pub width: usize,
    pub height: usize,
    /// L-shape arm thickness; 0 for other kinds.
    pub arm: usize,
    pub rotation_deg: f64,
    /// Raster-ordered label pixels.
    pub pixels: Vec<(usize, usize)>,
    pub occluder: Option<Occluder>,
}

/// One generated image and its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[1, 1, size, size]`, values in `[0, 1]`.
    pub image: Tensor,
    pub label: BinaryMap,
    pub seed: u64,
    /// Empty for samples read back from disk.
    pub buildings: Vec<Building>,
    /// Pixels of round distractors, whether or not they are labelled.
    pub discs: BinaryMap,
}

struct Shape {
    kind: BuildingKind,
    cx: f64,
    cy: f64,
    w: usize,
    h: usize,
    arm: usize,
    flip_x: bool,
    flip_y: bool,
    theta: f64,
}

impl Shape {
    fn contains(&self, r: f64, c: f64) -> bool {
        let (dx, dy) = (c - self.cx, r - self.cy);
        let (s, co) = self.theta.sin_cos();
        let mut x = dx * co + dy * s;
        let mut y = -dx * s + dy * co;
        let (hw, hh) = (self.w as f64 / 2.0, self.h as f64 / 2.0);
        if !(x >= -hw && x < hw && y >= -hh && y < hh) {
            return false;
        }
        match self.kind {
            BuildingKind::LShape => {
                if self.flip_x {
                    x = -x;
                }
                if self.flip_y {
                    y = -y;
                }
                let t = self.arm as f64;
                y < -hh + t || x < -hw + t
            }
            _ => true,
        }
    }

    /// Pixels whose centres fall inside, or `None` if the shape leaves the
    /// canvas interior.
    fn rasterize(&self, size: usize) -> Option<Vec<(usize, usize)>> {
        let reach = ((self.w * self.w + self.h * self.h) as f64).sqrt() / 2.0 + 1.0;
        let r_lo = (self.cy - reach).floor() as isize;
        let r_hi = (self.cy + reach).ceil() as isize;
        let c_lo = (self.cx - reach).floor() as isize;
        let c_hi = (self.cx + reach).ceil() as isize;
        let mut pixels = Vec::new();
        for r in r_lo..=r_hi {
            for c in c_lo..=c_hi {
                if self.contains(r as f64, c as f64) {
                    if r < 1 || c < 1 || r as usize >= size - 1 || c as usize >= size - 1 {
                        return None;
                    }
                    pixels.push((r as usize, c as usize));
                }
            }
        }
        Some(pixels)
    }
}

fn pick(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

/// Chebyshev-dilated occupancy used to keep objects apart.
struct Occupancy {
    size: usize,
    blocked: Vec<bool>,
    reach: usize,
}

impl Occupancy {
    fn new(size: usize, min_separation: usize) -> Self {
        Occupancy {
            size,
            blocked: vec![false; size * size],
            reach: min_separation.saturating_sub(1),
        }
    }

    fn is_free(&self, pixels: &[(usize, usize)]) -> bool {
        pixels.iter().all(|&(r, c)| !self.blocked[r * self.size + c])
    }

    fn claim(&mut self, pixels: &[(usize, usize)]) {
        let n = self.size;
        for &(r, c) in pixels {
            for rr in r.saturating_sub(self.reach)..=(r + self.reach).min(n - 1) {
                for cc in c.saturating_sub(self.reach)..=(c + self.reach).min(n - 1) {
                    self.blocked[rr * n + cc] = true;
                }
            }
        }
    }
}

fn draw_shape(cfg: &SceneConfig, kinds: &WeightedIndex<f64>, rng: &mut ChaCha8Rng) -> Shape {
    let kind = match kinds.sample(rng) {
        0 => BuildingKind::Rectangle,
        1 => BuildingKind::LShape,
        _ => BuildingKind::Bar,
    };
    let (mut w, mut h, arm) = match kind {
        BuildingKind::Rectangle => (pick(rng, cfg.rect_long), pick(rng, cfg.rect_short), 0),
        BuildingKind::LShape => (pick(rng, cfg.l_side), pick(rng, cfg.l_side), pick(rng, cfg.l_arm)),
        BuildingKind::Bar => (pick(rng, cfg.bar_length), pick(rng, cfg.bar_thickness), 0),
    };
    if kind != BuildingKind::LShape && rng.random_bool(0.5) {
        std::mem::swap(&mut w, &mut h);
    }
    let flip_x = rng.random_bool(0.5);
    let flip_y = rng.random_bool(0.5);
    let theta = if cfg.max_rotation_deg > 0.0 {
        rng.random_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg).to_radians()
    } else {
        0.0
    };
    let size = cfg.size;
    let c0 = rng.random_range(1..(size - 1).saturating_sub(w).max(2));
    let r0 = rng.random_range(1..(size - 1).saturating_sub(h).max(2));
    Shape {
        kind,
        cx: c0 as f64 + (w as f64 - 1.0) / 2.0,
        cy: r0 as f64 + (h as f64 - 1.0) / 2.0,
        w,
        h,
        arm,
        flip_x,
        flip_y,
        theta,
    }
}

struct Layout {
    buildings: Vec<(Shape, Vec<(usize, usize)>)>,
    discs: Vec<Vec<(usize, usize)>>,
}

fn try_layout(cfg: &SceneConfig, rng: &mut ChaCha8Rng, kinds: &WeightedIndex<f64>) -> Option<Layout> {
    let n = pick(rng, cfg.n_buildings);
    let mut occ = Occupancy::new(cfg.size, cfg.min_separation);
    let mut buildings = Vec::with_capacity(n);
    for _ in 0..n {
        let placed = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
            let shape = draw_shape(cfg, kinds, rng);
            let pixels = shape.rasterize(cfg.size)?;
            (pixels.len() >= MIN_OBJECT_AREA && occ.is_free(&pixels)).then_some((shape, pixels))
        })?;
        occ.claim(&placed.1);
        buildings.push(placed);
    }
    let n_discs = pick(rng, cfg.n_discs);
    let mut discs = Vec::with_capacity(n_discs);
    for _ in 0..n_discs {
        let placed = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
            let radius = pick(rng, cfg.disc_radius) as f64;
            let cy = rng.random_range(1.0..(cfg.size - 1) as f64);
            let cx = rng.random_range(1.0..(cfg.size - 1) as f64);
            let reach = radius.ceil() as isize;
            let mut pixels = Vec::new();
            for r in (cy as isize - reach)..=(cy as isize + reach + 1) {
                for c in (cx as isize - reach)..=(cx as isize + reach + 1) {
                    let (dr, dc) = (r as f64 - cy, c as f64 - cx);
                    if dr * dr + dc * dc <= radius * radius {
                        if r < 1 || c < 1 || r as usize >= cfg.size - 1 || c as usize >= cfg.size - 1 {
                            return None;
                        }
                        pixels.push((r as usize, c as usize));
                    }
                }
            }
            (pixels.len() >= MIN_OBJECT_AREA && occ.is_free(&pixels)).then_some(pixels)
        })?;
        occ.claim(&placed);
        discs.push(placed);
    }
    Some(Layout { buildings, discs })
}

/// Generates one scene; deterministic in `(config, seed)`.
///
/// Layout, appearance and pixel noise use separate random streams, so the
/// label depends only on the layout settings and the seed.
pub fn generate_scene(cfg: &SceneConfig, seed: u64) -> Result<Sample> {
    cfg.validate()?;
    let kinds = WeightedIndex::new(cfg.kind_weights).map_err(|e| Error::Usage(format!("building kind weights: {e}")))?;
    let mut layout_rng = ChaCha8Rng::seed_from_u64(seed);
    layout_rng.set_stream(LAYOUT_STREAM);
    let layout = (0..SCENE_ATTEMPTS)
        .find_map(|_| try_layout(cfg, &mut layout_rng, &kinds))
        .ok_or_else(|| {
            Error::Generation(format!(
                "could not place {:?} buildings and {:?} discs on a {}x{} scene after {SCENE_ATTEMPTS} attempts",
                cfg.n_buildings, cfg.n_discs, cfg.size, cfg.size
            ))
        })?;

    let n = cfg.size;
    let mut label = BinaryMap::zeros(n, n);
    let mut disc_map = BinaryMap::zeros(n, n);
    for (_, pixels) in &layout.buildings {
        for &(r, c) in pixels {
            label.set(r, c, true);
        }
    }
    for pixels in &layout.discs {
        for &(r, c) in pixels {
            disc_map.set(r, c, true);
            if cfg.include_discs_in_labels {
                label.set(r, c, true);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(APPEARANCE_STREAM);
    let jitter = cfg.texture_jitter * cfg.contrast;
    let vary = |rng: &mut ChaCha8Rng, base: f64| {
        if jitter > 0.0 {
            base + rng.random_range(-jitter..=jitter)
        } else {
            base
        }
    };
    let ground = vary(&mut rng, cfg.ground_level());
    let mut image = vec![ground; n * n];

    for _ in 0..pick(&mut rng, cfg.n_roads) {
        let width = pick(&mut rng, cfg.road_width);
        let offset = rng.random_range(0..n.saturating_sub(width).max(1));
        let level = vary(&mut rng, cfg.ground_level() - 0.2 * cfg.contrast);
        let horizontal = rng.random_bool(0.5);
        for i in offset..(offset + width).min(n) {
            for j in 0..n {
                let (r, c) = if horizontal { (i, j) } else { (j, i) };
                image[r * n + c] = level;
            }
        }
    }

    let mut buildings = Vec::with_capacity(layout.buildings.len());
    for (shape, pixels) in &layout.buildings {
        let level = vary(&mut rng, cfg.roof_level());
        for &(r, c) in pixels {
            image[r * n + c] = level;
        }
        buildings.push(Building {
            kind: shape.kind,
            width: shape.w,
            height: shape.h,
            arm: shape.arm,
            rotation_deg: shape.theta.to_degrees(),
            pixels: pixels.clone(),
            occluder: None,
        });
    }
    for pixels in &layout.discs {
        let level = vary(&mut rng, cfg.roof_level());
        for &(r, c) in pixels {
            image[r * n + c] = level;
        }
    }

    for b in &mut buildings {
        if !rng.random_bool(cfg.occluder_density) {
            continue;
        }
        if rng.random_bool(0.5) {
            let &(cr, cc) = &b.pixels[rng.random_range(0..b.pixels.len())];
            let radius = pick(&mut rng, cfg.tree_radius) as isize;
            let level = vary(&mut rng, cfg.ground_level() + 0.1 * cfg.contrast);
            for r in (cr as isize - radius).max(0)..=(cr as isize + radius).min(n as isize - 1) {
                for c in (cc as isize - radius).max(0)..=(cc as isize + radius).min(n as isize - 1) {
                    let (dr, dc) = (r - cr as isize, c - cc as isize);
                    if dr * dr + dc * dc <= radius * radius {
                        image[r as usize * n + c as usize] = level;
                    }
                }
            }
            b.occluder = Some(Occluder::Tree);
        } else {
            let width = pick(&mut rng, cfg.shadow_width) as isize;
            let side = rng.random_range(0..4);
            let (r0, c0, r1, c1) = b.pixels.iter().fold(
                (usize::MAX, usize::MAX, 0, 0),
                |(a, b, c, d), &(r, col)| (a.min(r), b.min(col), c.max(r), d.max(col)),
            );
            let (r0, c0, r1, c1) = (r0 as isize, c0 as isize, r1 as isize, c1 as isize);
            // A strip straddling one side of the bounding box.
            let (rows, cols) = match side {
                0 => ((r0 - width, r0 + width - 1), (c0, c1)),
                1 => ((r1 - width + 1, r1 + width), (c0, c1)),
                2 => ((r0, r1), (c0 - width, c0 + width - 1)),
                _ => ((r0, r1), (c1 - width + 1, c1 + width)),
            };
            for r in rows.0.max(0)..=rows.1.min(n as isize - 1) {
                for c in cols.0.max(0)..=cols.1.min(n as isize - 1) {
                    image[r as usize * n + c as usize] *= cfg.shadow_factor;
                }
            }
            b.occluder = Some(Occluder::Shadow);
        }
    }

    if cfg.noise_sigma > 0.0 {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
        noise_rng.set_stream(NOISE_STREAM);
        let normal = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Usage(format!("noise_sigma: {e}")))?;
        for v in &mut image {
            *v += normal.sample(&mut noise_rng);
        }
    }
    for v in &mut image {
        *v = v.clamp(0.0, 1.0);
    }

    Ok(Sample {
        image: Tensor::new(&[1, 1, n, n], image)?,
        label,
        seed,
        buildings,
        discs: disc_map,
    })
}

/// `n` samples seeded `seed, seed + 1, …`.
pub fn generate_dataset(cfg: &SceneConfig, n: usize, seed: u64) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::Usage("dataset size must be at least 1".into()));
    }
    (0..n as u64).map(|i| generate_scene(cfg, seed.wrapping_add(i))).collect()
}
