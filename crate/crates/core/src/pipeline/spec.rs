use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use crate::codec::{external_codec, identity_codec, Codec, FeatureGrouping, FourierCodec, GroundTruthCodec};
use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::models::{calibrate_thresholds, external_model, Connectivity, HoleDetector, Model, TopHalfCounter};
use crate::protocol::{ProcessSpec, DEFAULT_TIMEOUT};
use crate::sprites::{image_file_name, parse_manifest, SpriteGenerator, SpriteLatents, NUM_SCALES};

/// `builtin:tophalf`, `builtin:hole` or `exec:<command>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    TopHalf,
    Hole,
    Exec(String),
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "builtin:tophalf" => Ok(ModelSpec::TopHalf),
            "builtin:hole" => Ok(ModelSpec::Hole),
            _ => match s.strip_prefix("exec:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(ModelSpec::Exec(cmd.to_string())),
                _ => Err(Error::config(format!(
                    "bad model {s:?}; use builtin:tophalf, builtin:hole or exec:<cmd>"
                ))),
            },
        }
    }
}

/// `identity`, `fourier`, `ground-truth` or `exec:<command>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodecSpec {
    Identity,
    Fourier,
    GroundTruth,
    Exec(String),
}

impl FromStr for CodecSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(CodecSpec::Identity),
            "fourier" => Ok(CodecSpec::Fourier),
            "ground-truth" => Ok(CodecSpec::GroundTruth),
            _ => match s.strip_prefix("exec:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(CodecSpec::Exec(cmd.to_string())),
                _ => Err(Error::config(format!(
                    "bad codec {s:?}; use identity, fourier, ground-truth or exec:<cmd>"
                ))),
            },
        }
    }
}

/// Knobs that shape built-in models and codecs.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub bins: Option<usize>,
    /// Identity-codec pixel blocks; one feature per pixel when unset.
    pub block: Option<(usize, usize)>,
    pub hole_threshold: f64,
    pub connectivity: Connectivity,
    pub workers: usize,
    pub timeout: Duration,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            bins: None,
            block: None,
            hole_threshold: 0.5,
            connectivity: Connectivity::Four,
            workers: 1,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

impl BuildOptions {
    fn process(&self, command: &str) -> ProcessSpec {
        ProcessSpec::new(command)
            .with_pool_size(self.workers)
            .with_timeout(self.timeout)
    }
}

/// Images read from a directory, with sprite metadata when present.
#[derive(Debug, Clone, PartialEq)]
pub struct DataDir {
    pub images: Vec<Image>,
    pub labels: Option<Vec<usize>>,
    pub latents: Option<Vec<SpriteLatents>>,
    pub thresholds: Option<Vec<f64>>,
}

/// Reads a directory written by `gen-sprites` (`manifest.csv` + PNGs), or
/// otherwise every `.png`/`.csv` image in it, sorted by file name.
pub fn load_data_dir(dir: &Path, csv_channels: usize) -> Result<DataDir> {
    let manifest = dir.join("manifest.csv");
    let data = if manifest.exists() {
        let rows = parse_manifest(&fs::read_to_string(&manifest)?)?;
        let images = (0..rows.len())
            .map(|i| Image::load_png(&dir.join(image_file_name(i))))
            .collect::<Result<Vec<_>>>()?;
        DataDir {
            images,
            labels: Some(rows.iter().map(|r| r.1).collect()),
            latents: Some(rows.iter().map(|r| r.0).collect()),
            thresholds: read_thresholds(dir)?,
        }
    } else {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        paths.retain(|p| {
            matches!(
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(str::to_ascii_lowercase)
                    .as_deref(),
                Some("png") | Some("csv")
            )
        });
        paths.sort();
        DataDir {
            images: paths
                .iter()
                .map(|p| Image::load(p, csv_channels))
                .collect::<Result<_>>()?,
            labels: None,
            latents: None,
            thresholds: read_thresholds(dir)?,
        }
    };
    if data.images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(data)
}

fn read_thresholds(dir: &Path) -> Result<Option<Vec<f64>>> {
    let path = dir.join("thresholds.json");
    if !path.exists() {
        return Ok(None);
    }
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path)?)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    let t = v
        .get("thresholds")
        .and_then(|t| serde_json::from_value::<Vec<f64>>(t.clone()).ok())
        .ok_or_else(|| Error::config(format!("{}: missing thresholds array", path.display())))?;
    Ok(Some(t))
}

fn sprite_generator(shape: Shape) -> Result<SpriteGenerator> {
    if shape.height != shape.width || shape.channels != 1 {
        return Err(Error::config(format!(
            "sprite images are square and grayscale, got {shape}"
        )));
    }
    SpriteGenerator::new(shape.height)
}

impl ModelSpec {
    pub fn build(&self, shape: Shape, data: Option<&DataDir>, opts: &BuildOptions) -> Result<Arc<dyn Model>> {
        Ok(match self {
            ModelSpec::TopHalf => {
                let thresholds = match data.and_then(|d| d.thresholds.clone()) {
                    Some(t) => t,
                    None => match sprite_generator(shape) {
                        Ok(gen) => gen.calibrated_thresholds()?,
                        Err(_) => {
                            let d = data.ok_or_else(|| {
                                Error::config(
                                    "builtin:tophalf needs thresholds.json, sprite-shaped images or a dataset",
                                )
                            })?;
                            calibrate_thresholds(&d.images, NUM_SCALES)?
                        }
                    },
                };
                Arc::new(TopHalfCounter::new(thresholds)?)
            }
            ModelSpec::Hole => Arc::new(HoleDetector::new(opts.hole_threshold)?.with_connectivity(opts.connectivity)),
            ModelSpec::Exec(cmd) => Arc::new(external_model(&opts.process(cmd))?),
        })
    }
}

impl CodecSpec {
    pub fn build(&self, shape: Shape, data: Option<&DataDir>, opts: &BuildOptions) -> Result<Arc<dyn Codec>> {
        Ok(match self {
            CodecSpec::Identity => {
                let grouping = match opts.block {
                    Some((bh, bw)) => FeatureGrouping::pixel_blocks(shape, bh, bw)?,
                    None => FeatureGrouping::per_pixel(shape)?,
                };
                Arc::new(identity_codec(shape, grouping)?)
            }
            CodecSpec::Fourier => Arc::new(FourierCodec::new(shape, opts.bins)?),
            CodecSpec::GroundTruth => {
                let d = data
                    .filter(|d| d.latents.is_some())
                    .ok_or_else(|| Error::config("ground-truth codec needs a sprite directory with manifest.csv"))?;
                let mut codec = GroundTruthCodec::new(sprite_generator(shape)?);
                for (i, (lat, img)) in d.latents.as_ref().unwrap().iter().zip(&d.images).enumerate() {
                    if codec.register(*lat)? != *img {
                        return Err(Error::config(format!(
                            "image {} does not match its manifest latents",
                            image_file_name(i)
                        )));
                    }
                }
                Arc::new(codec)
            }
            CodecSpec::Exec(cmd) => Arc::new(external_codec(&opts.process(cmd))?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_parse() {
        assert_eq!("builtin:tophalf".parse::<ModelSpec>().unwrap(), ModelSpec::TopHalf);
        assert_eq!(
            "exec:python3 m.py".parse::<ModelSpec>().unwrap(),
            ModelSpec::Exec("python3 m.py".into())
        );
        assert!("exec:".parse::<ModelSpec>().is_err());
        assert_eq!("ground-truth".parse::<CodecSpec>().unwrap(), CodecSpec::GroundTruth);
        assert!(matches!("wavelet".parse::<CodecSpec>(), Err(Error::Config(_))));
    }

    #[test]
    fn plain_directory_loads_sorted_images() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.csv"), "1,1\n1,1\n").unwrap();
        fs::write(dir.path().join("a.csv"), "0,0\n0,0\n").unwrap();
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let d = load_data_dir(dir.path(), 1).unwrap();
        assert_eq!(d.images.len(), 2);
        assert_eq!(d.images[0].data(), &[0.0; 4]);
        assert!(d.labels.is_none());
    }

    #[test]
    fn ground_truth_needs_a_manifest() {
        let shape = Shape::new(32, 32, 1);
        assert!(CodecSpec::GroundTruth
            .build(shape, None, &BuildOptions::default())
            .is_err());
    }
}
