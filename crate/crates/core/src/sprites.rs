//! Procedural dSprites-style images with a known five-factor latent space:
//! shape, scale, orientation, horizontal and vertical position.
//!
//! Sprites are white (1.0) on black (0.0), rasterized by testing each pixel
//! center against the rotated shape. Sampled positions lie on an integer
//! pixel lattice, so moving a sprite between sampled positions translates
//! its raster exactly.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::models::{thresholds_from_counts, top_half_class, top_half_count};
use crate::rng::{self, Domain};

pub const NUM_SCALES: usize = 6;
pub const NUM_SHAPES: usize = 3;
pub const DEFAULT_SIZE: usize = 64;

/// Radii at the 64-pixel reference grid; other grids scale linearly.
const REFERENCE_RADII: [f64; NUM_SCALES] = [5.0, 6.0, 7.0, 8.0, 9.0, 9.8];
const ELLIPSE_ASPECT: f64 = 1.3;
const CALIBRATION_ORIENTATIONS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpriteShape {
    Square,
    Ellipse,
    Triangle,
}

impl SpriteShape {
    pub const ALL: [SpriteShape; NUM_SHAPES] = [SpriteShape::Square, SpriteShape::Ellipse, SpriteShape::Triangle];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Equal-area geometry: every shape at radius `r` covers `πr²`.
    fn contains(self, r: f64, u: f64, v: f64) -> bool {
        match self {
            SpriteShape::Square => {
                let half = PI.sqrt() * r / 2.0;
                u.abs() <= half && v.abs() <= half
            }
            SpriteShape::Ellipse => {
                let (a, b) = (ELLIPSE_ASPECT * r, r / ELLIPSE_ASPECT);
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            }
            SpriteShape::Triangle => {
                let apothem = triangle_circumradius(r) / 2.0;
                (0..3).all(|k| {
                    let angle = PI / 2.0 + TAU * k as f64 / 3.0;
                    u * angle.cos() + v * angle.sin() <= apothem
                })
            }
        }
    }

    /// Largest distance from the center to any point of the shape.
    fn extent(self, r: f64) -> f64 {
        match self {
            SpriteShape::Square => PI.sqrt() * r / 2.0 * std::f64::consts::SQRT_2,
            SpriteShape::Ellipse => ELLIPSE_ASPECT * r,
            SpriteShape::Triangle => triangle_circumradius(r),
        }
    }
}

fn triangle_circumradius(r: f64) -> f64 {
    let side = (4.0 * PI / 3f64.sqrt()).sqrt() * r;
    side / 3f64.sqrt()
}

impl fmt::Display for SpriteShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpriteShape::Square => "square",
            SpriteShape::Ellipse => "ellipse",
            SpriteShape::Triangle => "triangle",
        })
    }
}

impl FromStr for SpriteShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(SpriteShape::Square),
            "ellipse" => Ok(SpriteShape::Ellipse),
            "triangle" => Ok(SpriteShape::Triangle),
            other => Err(Error::LatentOutOfRange(format!("unknown shape {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpriteLatents {
    pub shape: SpriteShape,
    pub scale_idx: usize,
    /// Radians in `[0, 2π)`.
    pub orientation: f64,
    /// Normalized center, `0` = left edge of the allowed range.
    pub pos_x: f64,
    /// Normalized center, `0` = top edge of the allowed range.
    pub pos_y: f64,
}

impl SpriteLatents {
    pub fn validate(&self) -> Result<()> {
        if self.scale_idx >= NUM_SCALES {
            return Err(Error::LatentOutOfRange(format!(
                "scale_idx {} not in 0..{NUM_SCALES}",
                self.scale_idx
            )));
        }
        if !(0.0..TAU).contains(&self.orientation) {
            return Err(Error::LatentOutOfRange(format!(
                "orientation {} not in [0, 2π)",
                self.orientation
            )));
        }
        for (name, p) in [("pos_x", self.pos_x), ("pos_y", self.pos_y)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::LatentOutOfRange(format!("{name} {p} not in [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn to_scalars(&self) -> [f64; 5] {
        [
            self.shape.index() as f64,
            self.scale_idx as f64,
            self.orientation,
            self.pos_x,
            self.pos_y,
        ]
    }

    /// Inverse of [`SpriteLatents::to_scalars`]; discrete factors are rounded
    /// and every factor is brought back into range.
    pub fn from_scalars(s: &[f64; 5]) -> Self {
        let shape_idx = s[0].round().clamp(0.0, (NUM_SHAPES - 1) as f64) as usize;
        let orientation = s[2].rem_euclid(TAU);
        SpriteLatents {
            shape: SpriteShape::ALL[shape_idx],
            scale_idx: s[1].round().clamp(0.0, (NUM_SCALES - 1) as f64) as usize,
            orientation: if orientation >= TAU { 0.0 } else { orientation },
            pos_x: s[3].clamp(0.0, 1.0),
            pos_y: s[4].clamp(0.0, 1.0),
        }
    }
}

pub const LATENT_NAMES: [&str; 5] = ["shape", "scale", "orientation", "pos-x", "pos-y"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpriteGenerator {
    size: usize,
    scale_radii: [f64; NUM_SCALES],
    margin: f64,
    positions: usize,
}

impl Default for SpriteGenerator {
    fn default() -> Self {
        SpriteGenerator::new(DEFAULT_SIZE).expect("default grid is valid")
    }
}

impl SpriteGenerator {
    /// Square `size × size` grid; `size` must be a multiple of 4, at least 16.
    pub fn new(size: usize) -> Result<Self> {
        if size < 16 || !size.is_multiple_of(4) {
            return Err(Error::config(format!(
                "sprite grid size {size} must be a multiple of 4 and at least 16"
            )));
        }
        let factor = size as f64 / DEFAULT_SIZE as f64;
        let scale_radii = REFERENCE_RADII.map(|r| r * factor);
        let margin = (size / 4) as f64;
        let gen = SpriteGenerator {
            size,
            scale_radii,
            margin,
            positions: size / 2 + 1,
        };
        debug_assert!(SpriteShape::ALL
            .iter()
            .all(|s| s.extent(scale_radii[NUM_SCALES - 1]) < margin));
        Ok(gen)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.size, self.size, 1)
    }

    pub fn scale_radii(&self) -> &[f64; NUM_SCALES] {
        &self.scale_radii
    }

    /// Number of lattice positions per axis used by sampling.
    pub fn positions(&self) -> usize {
        self.positions
    }

    /// Pixel coordinate of a normalized position.
    pub fn center_coord(&self, pos: f64) -> f64 {
        self.margin + pos * (self.size as f64 - 2.0 * self.margin)
    }

    pub fn render(&self, lat: &SpriteLatents) -> Result<Image> {
        lat.validate()?;
        let mut img = Image::filled(self.shape(), 0.0);
        let r = self.scale_radii[lat.scale_idx];
        let (cx, cy) = (self.center_coord(lat.pos_x), self.center_coord(lat.pos_y));
        let reach = lat.shape.extent(r) + 1.0;
        let (sin, cos) = lat.orientation.sin_cos();
        let span = |c: f64| {
            let lo = (c - reach).floor().max(0.0) as usize;
            let hi = ((c + reach).ceil() as usize).min(self.size);
            lo..hi
        };
        for row in span(cy) {
            let dy = row as f64 + 0.5 - cy;
            for col in span(cx) {
                let dx = col as f64 + 0.5 - cx;
                let u = cos * dx + sin * dy;
                let v = -sin * dx + cos * dy;
                if lat.shape.contains(r, u, v) {
                    img.set(row, col, 0, 1.0);
                }
            }
        }
        Ok(img)
    }

    /// Every shape and scale at the top-most position over a fixed sweep of
    /// orientations; each sprite lies wholly in the top half.
    pub fn calibration_latents(&self) -> Vec<SpriteLatents> {
        let mut out = Vec::new();
        for shape in SpriteShape::ALL {
            for scale_idx in 0..NUM_SCALES {
                for k in 0..CALIBRATION_ORIENTATIONS {
                    out.push(SpriteLatents {
                        shape,
                        scale_idx,
                        orientation: TAU * k as f64 / CALIBRATION_ORIENTATIONS as f64,
                        pos_x: 0.5,
                        pos_y: 0.0,
                    });
                }
            }
        }
        out
    }

    /// Top-half count thresholds separating the six scale clusters.
    pub fn calibrated_thresholds(&self) -> Result<Vec<f64>> {
        let counts: Vec<usize> = self
            .calibration_latents()
            .iter()
            .map(|l| self.render(l).map(|img| top_half_count(&img)))
            .collect::<Result<_>>()?;
        thresholds_from_counts(&counts, NUM_SCALES)
    }

    pub fn sample_latents(&self, seed: u64, index: u64) -> SpriteLatents {
        let mut rng = rng::substream(seed, Domain::SPRITES, index);
        let lattice = (self.positions - 1) as f64;
        let shape = SpriteShape::ALL[rng.gen_range(0..NUM_SHAPES)];
        let scale_idx = rng.gen_range(0..NUM_SCALES);
        let orientation = rng.gen::<f64>() * TAU;
        let pos_x = rng.gen_range(0..self.positions) as f64 / lattice;
        let pos_y = rng.gen_range(0..self.positions) as f64 / lattice;
        SpriteLatents {
            shape,
            scale_idx,
            orientation: if orientation >= TAU { 0.0 } else { orientation },
            pos_x,
            pos_y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpriteSample {
    pub latents: SpriteLatents,
    pub image: Image,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpriteDataset {
    pub generator: SpriteGenerator,
    pub thresholds: Vec<f64>,
    pub samples: Vec<SpriteSample>,
}

impl SpriteDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn images(&self) -> Vec<Image> {
        self.samples.iter().map(|s| s.image.clone()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

/// `n` sprites with independently drawn latents, labeled by the top-half
/// counter under the generator's calibrated thresholds.
pub fn sample_dataset(n: usize, seed: u64, generator: &SpriteGenerator) -> Result<SpriteDataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let thresholds = generator.calibrated_thresholds()?;
    let samples = (0..n as u64)
        .map(|i| {
            let latents = generator.sample_latents(seed, i);
            let image = generator.render(&latents)?;
            let label = top_half_class(top_half_count(&image), &thresholds);
            Ok(SpriteSample { latents, image, label })
        })
        .collect::<Result<_>>()?;
    Ok(SpriteDataset {
        generator: generator.clone(),
        thresholds,
        samples,
    })
}

pub const MANIFEST_HEADER: &str = "index,shape,scale_idx,orientation,pos_x,pos_y,label";

pub fn image_file_name(index: usize) -> String {
    format!("{index:05}.png")
}

/// Writes one PNG per sprite plus `manifest.csv` and `thresholds.json`.
pub fn export_dataset(dataset: &SpriteDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::from(MANIFEST_HEADER);
    manifest.push('\n');
    for (i, s) in dataset.samples.iter().enumerate() {
        s.image.save_png(&dir.join(image_file_name(i)))?;
        let l = &s.latents;
        manifest.push_str(&format!(
            "{i},{},{},{},{},{},{}\n",
            l.shape, l.scale_idx, l.orientation, l.pos_x, l.pos_y, s.label
        ));
    }
    fs::write(dir.join("manifest.csv"), manifest)?;
    let meta = serde_json::json!({
        "size": dataset.generator.size(),
        "thresholds": dataset.thresholds,
    });
    fs::write(
        dir.join("thresholds.json"),
        serde_json::to_string_pretty(&meta).expect("json") + "\n",
    )?;
    Ok(())
}

/// Parses a manifest written by [`export_dataset`] into `(latents, label)` rows.
pub fn parse_manifest(text: &str) -> Result<Vec<(SpriteLatents, usize)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == MANIFEST_HEADER => {}
        _ => return Err(Error::config("manifest.csv has an unexpected header")),
    }
    let bad = |n: usize, what: &str| Error::config(format!("manifest line {}: bad {what}", n + 2));
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(bad(n, "field count"));
        }
        let index: usize = f[0].parse().map_err(|_| bad(n, "index"))?;
        if index != out.len() {
            return Err(bad(n, "index order"));
        }
        let lat = SpriteLatents {
            shape: f[1].parse()?,
            scale_idx: f[2].parse().map_err(|_| bad(n, "scale_idx"))?,
            orientation: f[3].parse().map_err(|_| bad(n, "orientation"))?,
            pos_x: f[4].parse().map_err(|_| bad(n, "pos_x"))?,
            pos_y: f[5].parse().map_err(|_| bad(n, "pos_y"))?,
        };
        lat.validate()?;
        let label = f[6].parse().map_err(|_| bad(n, "label"))?;
        out.push((lat, label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn centered(shape: SpriteShape, scale_idx: usize) -> SpriteLatents {
        SpriteLatents {
            shape,
            scale_idx,
            orientation: 0.0,
            pos_x: 0.5,
            pos_y: 0.5,
        }
    }

    #[test]
    fn centered_square_is_mirror_symmetric() {
        for size in [32, 64] {
            let gen = SpriteGenerator::new(size).unwrap();
            let img = gen.render(&centered(SpriteShape::Square, 3)).unwrap();
            for r in 0..size {
                for c in 0..size {
                    assert_eq!(img.get(r, c, 0), img.get(r, size - 1 - c, 0));
                    assert_eq!(img.get(r, c, 0), img.get(size - 1 - r, c, 0));
                }
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let gen = SpriteGenerator::default();
        let lat = gen.sample_latents(3, 17);
        assert_eq!(gen.render(&lat).unwrap(), gen.render(&lat).unwrap());
    }

    #[test]
    fn square_area_grows_with_scale() {
        let gen = SpriteGenerator::default();
        let counts: Vec<usize> = (0..NUM_SCALES)
            .map(|s| {
                let img = gen.render(&centered(SpriteShape::Square, s)).unwrap();
                img.data().iter().filter(|&&v| v > 0.5).count()
            })
            .collect();
        assert!(counts.windows(2).all(|w| w[0] < w[1]), "{counts:?}");
    }

    #[test]
    fn sprites_stay_in_frame() {
        let gen = SpriteGenerator::default();
        for shape in SpriteShape::ALL {
            for (px, py) in [(0.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
                let lat = SpriteLatents {
                    shape,
                    scale_idx: NUM_SCALES - 1,
                    orientation: 0.7,
                    pos_x: px,
                    pos_y: py,
                };
                let img = gen.render(&lat).unwrap();
                let n = gen.size();
                for i in 0..n {
                    for (r, c) in [(0, i), (n - 1, i), (i, 0), (i, n - 1)] {
                        assert_eq!(img.get(r, c, 0), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn out_of_range_latents_are_rejected() {
        let gen = SpriteGenerator::default();
        let mut lat = centered(SpriteShape::Ellipse, 6);
        assert!(matches!(gen.render(&lat), Err(Error::LatentOutOfRange(_))));
        lat.scale_idx = 0;
        lat.orientation = TAU;
        assert!(gen.render(&lat).is_err());
        lat.orientation = 0.0;
        lat.pos_y = 1.5;
        assert!(gen.render(&lat).is_err());
    }

    #[test]
    fn scalars_round_trip() {
        let gen = SpriteGenerator::default();
        for i in 0..50 {
            let lat = gen.sample_latents(9, i);
            assert_eq!(SpriteLatents::from_scalars(&lat.to_scalars()), lat);
        }
    }

    #[test]
    fn manifest_round_trip() {
        let gen = SpriteGenerator::new(32).unwrap();
        let ds = sample_dataset(5, 2, &gen).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_dataset(&ds, dir.path()).unwrap();
        let rows = parse_manifest(&fs::read_to_string(dir.path().join("manifest.csv")).unwrap()).unwrap();
        assert_eq!(rows.len(), 5);
        for ((lat, label), s) in rows.iter().zip(&ds.samples) {
            assert_eq!(*lat, s.latents);
            assert_eq!(*label, s.label);
        }
        let png = Image::load_png(&dir.path().join(image_file_name(3))).unwrap();
        assert_eq!(png, ds.samples[3].image);
    }
}
