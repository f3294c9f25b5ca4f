use crate::config::{format_range, parse_bool, parse_range, parse_value, KeyValueConfig};
use crate::error::{Error, Result};

/// Scene generator settings. Sizes are in pixels, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    /// Side length of the square scene; must be a multiple of 32.
    pub size: usize,
    /// Inclusive range of the number of buildings per scene.
    pub n_buildings: (usize, usize),
    /// Relative weights of rectangles, L-shapes and bars.
    pub kind_weights: [f64; 3],
    /// Rectangle sides: one drawn from `rect_long`, the other from `rect_short`.
    pub rect_long: (usize, usize),
    pub rect_short: (usize, usize),
    /// L-shape bounding box sides and arm thickness.
    pub l_side: (usize, usize),
    pub l_arm: (usize, usize),
    pub bar_length: (usize, usize),
    pub bar_thickness: (usize, usize),
    /// Largest absolute rotation jitter in degrees, on top of quarter turns.
    pub max_rotation_deg: f64,
    /// Minimum Chebyshev distance between pixels of different objects.
    pub min_separation: usize,
    /// Fraction of buildings that receive a tree or shadow occluder.
    pub occluder_density: f64,
    pub tree_radius: (usize, usize),
    pub shadow_width: (usize, usize),
    /// Intensity multiplier inside shadow strips.
    pub shadow_factor: f64,
    /// Separation of roof and ground intensities around mid-gray.
    pub contrast: f64,
    /// Half-width of the per-region uniform gray jitter, relative to contrast.
    pub texture_jitter: f64,
    /// Standard deviation of per-pixel Gaussian speckle.
    pub noise_sigma: f64,
    /// Inclusive range of round distractor blobs at roof intensity.
    pub n_discs: (usize, usize),
    pub disc_radius: (usize, usize),
    /// Inclusive range of road strips.
    pub n_roads: (usize, usize),
    pub road_width: (usize, usize),
    /// Label round distractors as foreground.
    pub include_discs_in_labels: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            size: 64,
            n_buildings: (2, 6),
            kind_weights: [0.5, 0.25, 0.25],
            rect_long: (12, 18),
            rect_short: (8, 14),
            l_side: (12, 18),
            l_arm: (5, 8),
            bar_length: (16, 30),
            bar_thickness: (5, 8),
            max_rotation_deg: 4.0,
            min_separation: 3,
            occluder_density: 0.5,
            tree_radius: (3, 5),
            shadow_width: (2, 4),
            shadow_factor: 0.55,
            contrast: 0.6,
            texture_jitter: 0.15,
            noise_sigma: 0.06,
            n_discs: (0, 1),
            disc_radius: (4, 7),
            n_roads: (0, 1),
            road_width: (3, 5),
            include_discs_in_labels: false,
        }
    }
}

impl SceneConfig {
    /// A clean configuration: no occluders, distractors, texture or noise,
    /// full contrast.
    pub fn noiseless() -> Self {
        SceneConfig {
            occluder_density: 0.0,
            texture_jitter: 0.0,
            noise_sigma: 0.0,
            n_discs: (0, 0),
            n_roads: (0, 0),
            contrast: 1.0,
            ..SceneConfig::default()
        }
    }

    pub fn ground_level(&self) -> f64 {
        0.5 - self.contrast / 4.0
    }

    pub fn roof_level(&self) -> f64 {
        0.5 + self.contrast / 4.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Usage(m));
        if self.size == 0 || self.size % 32 != 0 {
            return bad(format!("scene size {} is not a positive multiple of 32", self.size));
        }
        if self.kind_weights.iter().any(|w| !(*w >= 0.0)) || self.kind_weights.iter().sum::<f64>() <= 0.0 {
            return bad("building kind weights must be non-negative with a positive sum".into());
        }
        for (name, (lo, hi)) in [
            ("n_buildings", self.n_buildings),
            ("rect_long", self.rect_long),
            ("rect_short", self.rect_short),
            ("l_side", self.l_side),
            ("l_arm", self.l_arm),
            ("bar_length", self.bar_length),
            ("bar_thickness", self.bar_thickness),
            ("tree_radius", self.tree_radius),
            ("shadow_width", self.shadow_width),
            ("n_discs", self.n_discs),
            ("disc_radius", self.disc_radius),
            ("n_roads", self.n_roads),
            ("road_width", self.road_width),
        ] {
            if lo > hi {
                return bad(format!("{name}: empty range {lo}..{hi}"));
            }
        }
        if self.rect_short.0 == 0 || self.bar_thickness.0 == 0 || self.l_arm.0 == 0 {
            return bad("building dimensions must be positive".into());
        }
        if self.l_arm.1 >= self.l_side.0 {
            return bad("L-shape arms must be thinner than the shape".into());
        }
        for (name, v) in [
            ("occluder_density", self.occluder_density),
            ("contrast", self.contrast),
            ("shadow_factor", self.shadow_factor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.texture_jitter >= 0.0 && self.max_rotation_deg >= 0.0) {
            return bad("noise, jitter and rotation must be non-negative".into());
        }
        Ok(())
    }

    /// Expected number of buildings per scene.
    pub fn expected_building_count(&self) -> f64 {
        (self.n_buildings.0 + self.n_buildings.1) as f64 / 2.0
    }

    /// Expected building area, from the nominal (unrotated) shapes.
    pub fn expected_building_area(&self) -> f64 {
        let mean = |(lo, hi): (usize, usize)| (lo + hi) as f64 / 2.0;
        let mean_sq = |(lo, hi): (usize, usize)| (lo..=hi).map(|v| (v * v) as f64).sum::<f64>() / (hi - lo + 1) as f64;
        let rect = mean(self.rect_long) * mean(self.rect_short);
        let side = mean(self.l_side);
        let l = 2.0 * side * mean(self.l_arm) - mean_sq(self.l_arm);
        let bar = mean(self.bar_length) * mean(self.bar_thickness);
        let total: f64 = self.kind_weights.iter().sum();
        (self.kind_weights[0] * rect + self.kind_weights[1] * l + self.kind_weights[2] * bar) / total
    }
}

impl KeyValueConfig for SceneConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "size" => self.size = parse_value(key, value)?,
            "n_buildings" => self.n_buildings = parse_range(key, value)?,
            "weight_rect" => self.kind_weights[0] = parse_value(key, value)?,
            "weight_l_shape" => self.kind_weights[1] = parse_value(key, value)?,
            "weight_bar" => self.kind_weights[2] = parse_value(key, value)?,
            "rect_long" => self.rect_long = parse_range(key, value)?,
            "rect_short" => self.rect_short = parse_range(key, value)?,
            "l_side" => self.l_side = parse_range(key, value)?,
            "l_arm" => self.l_arm = parse_range(key, value)?,
            "bar_length" => self.bar_length = parse_range(key, value)?,
            "bar_thickness" => self.bar_thickness = parse_range(key, value)?,
            "max_rotation_deg" => self.max_rotation_deg = parse_value(key, value)?,
            "min_separation" => self.min_separation = parse_value(key, value)?,
            "occluder_density" => self.occluder_density = parse_value(key, value)?,
            "tree_radius" => self.tree_radius = parse_range(key, value)?,
            "shadow_width" => self.shadow_width = parse_range(key, value)?,
            "shadow_factor" => self.shadow_factor = parse_value(key, value)?,
            "contrast" => self.contrast = parse_value(key, value)?,
            "texture_jitter" => self.texture_jitter = parse_value(key, value)?,
            "noise_sigma" => self.noise_sigma = parse_value(key, value)?,
            "n_discs" => self.n_discs = parse_range(key, value)?,
            "disc_radius" => self.disc_radius = parse_range(key, value)?,
            "n_roads" => self.n_roads = parse_range(key, value)?,
            "road_width" => self.road_width = parse_range(key, value)?,
            "include_discs_in_labels" => self.include_discs_in_labels = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("size", self.size.to_string()),
            ("n_buildings", format_range(self.n_buildings)),
            ("weight_rect", self.kind_weights[0].to_string()),
            ("weight_l_shape", self.kind_weights[1].to_string()),
            ("weight_bar", self.kind_weights[2].to_string()),
            ("rect_long", format_range(self.rect_long)),
            ("rect_short", format_range(self.rect_short)),
            ("l_side", format_range(self.l_side)),
            ("l_arm", format_range(self.l_arm)),
            ("bar_length", format_range(self.bar_length)),
            ("bar_thickness", format_range(self.bar_thickness)),
            ("max_rotation_deg", self.max_rotation_deg.to_string()),
            ("min_separation", self.min_separation.to_string()),
            ("occluder_density", self.occluder_density.to_string()),
            ("tree_radius", format_range(self.tree_radius)),
            ("shadow_width", format_range(self.shadow_width)),
            ("shadow_factor", self.shadow_factor.to_string()),
            ("contrast", self.contrast.to_string()),
            ("texture_jitter", self.texture_jitter.to_string()),
            ("noise_sigma", self.noise_sigma.to_string()),
            ("n_discs", format_range(self.n_discs)),
            ("disc_radius", format_range(self.disc_radius)),
            ("n_roads", format_range(self.n_roads)),
            ("road_width", format_range(self.road_width)),
            ("include_discs_in_labels", self.include_discs_in_labels.to_string()),
        ]
    }
}
