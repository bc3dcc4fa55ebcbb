//! Dense images and their file formats.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_array(self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// `H×W×C` intensities, row-major and channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    shape: Shape,
    data: Vec<f64>,
}

impl Image {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::config(format!("image shape {shape} is empty")));
        }
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values for {shape}", shape.len()),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Image { shape, data })
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Image {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.shape.width + col) * self.shape.channels + channel
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.index(row, col, channel)]
    }

    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let i = self.index(row, col, channel);
        self.data[i] = value;
    }

    pub fn ensure_shape(&self, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(Error::ShapeMismatch {
                expected: expected.to_string(),
                actual: self.shape.to_string(),
            });
        }
        Ok(())
    }

    /// Loads a PNG or CSV grid, chosen by file extension.
    pub fn load(path: &Path, csv_channels: usize) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("png") => Image::load_png(path),
            Some("csv") => Image::load_csv(path, csv_channels),
            _ => Err(Error::ImageFile {
                path: path.to_path_buf(),
                message: "expected a .png or .csv file".into(),
            }),
        }
    }

    /// 8-bit grayscale or RGB PNG, mapped to `[0, 1]` by `/255`.
    pub fn load_png(path: &Path) -> Result<Self> {
        let file_err = |message: String| Error::ImageFile {
            path: path.to_path_buf(),
            message,
        };
        let img = image::open(path).map_err(|e| file_err(e.to_string()))?;
        let (width, height) = (img.width() as usize, img.height() as usize);
        let (channels, raw) = match img {
            image::DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
            image::DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
            other => {
                return Err(file_err(format!(
                    "unsupported pixel format {:?}; expected 8-bit grayscale or RGB",
                    other.color()
                )))
            }
        };
        let shape = Shape::new(height, width, channels);
        let data = raw.into_iter().map(|b| f64::from(b) / 255.0).collect();
        Image::new(shape, data)
    }

    /// One line per pixel row, channels interleaved within the row.
    pub fn load_csv(path: &Path, channels: usize) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Image::parse_csv(&text, channels).map_err(|e| match e {
            Error::Config(message) => Error::ImageFile {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn parse_csv(text: &str, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::config("channel count must be positive"));
        }
        let mut data = Vec::new();
        let mut width = None;
        let mut height = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))
                })
                .collect::<Result<_>>()?;
            if !row.len().is_multiple_of(channels) {
                return Err(Error::config(format!(
                    "line {}: {} values is not a multiple of {channels} channels",
                    lineno + 1,
                    row.len()
                )));
            }
            let w = row.len() / channels;
            if *width.get_or_insert(w) != w {
                return Err(Error::config(format!("line {}: ragged row", lineno + 1)));
            }
            data.extend(row);
            height += 1;
        }
        let width = width.ok_or_else(|| Error::config("empty CSV image"))?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("CSV image contains non-finite values"));
        }
        Image::new(Shape::new(height, width, channels), data)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let row_len = self.shape.width * self.shape.channels;
        for row in self.data.chunks(row_len) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Quantizes to 8 bits; only 1- and 3-channel images are supported.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let color = match self.shape.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            c => return Err(Error::config(format!("cannot write {c}-channel PNG"))),
        };
        image::save_buffer(path, &bytes, self.shape.width as u32, self.shape.height as u32, color).map_err(|e| {
            Error::ImageFile {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
        })
    }
}
