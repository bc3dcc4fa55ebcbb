//! Black-box classifiers: the two rules-based models, small analytic models
//! used in tests and diagnostics, and the external-process client.

mod external;
mod hole;

pub use external::{external_model, ExternalModel};
pub use hole::{has_hole, hole_detector_model, Connectivity, HoleDetector};

use crate::error::{Error, Result};
use crate::image::{Image, Shape};

/// Pixels brighter than this count as white.
pub const WHITE_THRESHOLD: f64 = 0.5;

const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A classifier returning a probability vector per image.
pub trait Model: Send + Sync {
    fn num_classes(&self) -> usize;

    /// Required input shape, when the model has one.
    fn input_shape(&self) -> Option<Shape> {
        None
    }

    fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>>;

    fn predict_one(&self, image: &Image) -> Result<Vec<f64>> {
        let mut out = self.predict(std::slice::from_ref(image))?;
        out.pop()
            .ok_or_else(|| Error::BadProbabilities("model returned no output".into()))
    }
}

/// Checks that `probs` is a length-`num_classes` probability vector.
pub fn check_probabilities(probs: &[f64], num_classes: usize) -> Result<()> {
    if probs.len() != num_classes {
        return Err(Error::BadProbabilities(format!(
            "expected {num_classes} classes, got {}",
            probs.len()
        )));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::BadProbabilities(format!("entry {p} is not a probability")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::BadProbabilities(format!("probabilities sum to {sum}")));
    }
    Ok(())
}

pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

fn one_hot(class: usize, num_classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; num_classes];
    v[class] = 1.0;
    v
}

/// White pixels in rows `0..⌊H/2⌋`, any channel above the white threshold.
pub fn top_half_count(image: &Image) -> usize {
    let row_len = image.width() * image.channels();
    let rows = image.height() / 2;
    image.data()[..rows * row_len]
        .chunks(image.channels())
        .filter(|px| px.iter().any(|&v| v > WHITE_THRESHOLD))
        .count()
}

/// Number of thresholds strictly below `count`.
pub fn top_half_class(count: usize, thresholds: &[f64]) -> usize {
    thresholds.iter().filter(|&&t| t < count as f64).count()
}

/// Midpoints of the `num_classes − 1` widest gaps between consecutive
/// distinct counts, ascending.
pub fn thresholds_from_counts(counts: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    if num_classes < 2 {
        return Err(Error::config("need at least 2 classes"));
    }
    let mut distinct = counts.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < num_classes {
        return Err(Error::DegenerateClusters {
            distinct: distinct.len(),
            classes: num_classes,
        });
    }
    let mut gaps: Vec<(usize, usize)> = distinct.windows(2).enumerate().map(|(i, w)| (w[1] - w[0], i)).collect();
    // widest first; among equal gaps the lower one wins
    gaps.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = gaps[..num_classes - 1].iter().map(|g| g.1).collect();
    chosen.sort_unstable();
    Ok(chosen
        .into_iter()
        .map(|i| (distinct[i] + distinct[i + 1]) as f64 / 2.0)
        .collect())
}

/// Calibrates top-half count thresholds on a set of images.
pub fn calibrate_thresholds(dataset: &[Image], num_classes: usize) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let counts: Vec<usize> = dataset.iter().map(top_half_count).collect();
    thresholds_from_counts(&counts, num_classes)
}

/// Classifies by the number of white pixels in the top half of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct TopHalfCounter {
    thresholds: Vec<f64>,
    flipped: bool,
}

impl TopHalfCounter {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::config("top-half counter needs at least one threshold"));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) || thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("thresholds must be finite and strictly increasing"));
        }
        Ok(TopHalfCounter {
            thresholds,
            flipped: false,
        })
    }

    /// The same rule applied to the bottom half (the image is flipped vertically).
    pub fn bottom_half(thresholds: Vec<f64>) -> Result<Self> {
        let mut m = TopHalfCounter::new(thresholds)?;
        m.flipped = true;
        Ok(m)
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn classify(&self, image: &Image) -> usize {
        let count = if self.flipped {
            top_half_count(&flip_vertical(image))
        } else {
            top_half_count(image)
        };
        top_half_class(count, &self.thresholds)
    }
}

/// Mirror image across the horizontal midline.
pub fn flip_vertical(image: &Image) -> Image {
    let row_len = image.width() * image.channels();
    let data: Vec<f64> = image.data().chunks(row_len).rev().flatten().copied().collect();
    Image::new(image.shape(), data).expect("same shape")
}

pub fn top_half_counter_model(thresholds: Vec<f64>) -> Result<TopHalfCounter> {
    TopHalfCounter::new(thresholds)
}

impl Model for TopHalfCounter {
    fn num_classes(&self) -> usize {
        self.thresholds.len() + 1
    }

    fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        Ok(images
            .iter()
            .map(|img| one_hot(self.classify(img), self.num_classes()))
            .collect())
    }
}

/// Returns the same probability vector for every input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantModel {
    probs: Vec<f64>,
}

impl ConstantModel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_probabilities(&probs, probs.len())?;
        Ok(ConstantModel { probs })
    }

    pub fn uniform(num_classes: usize) -> Self {
        ConstantModel {
            probs: vec![1.0 / num_classes as f64; num_classes],
        }
    }
}

impl Model for ConstantModel {
    fn num_classes(&self) -> usize {
        self.probs.len()
    }

    fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![self.probs.clone(); images.len()])
    }
}

/// Two-class model with `p₀ = Σ wᵢxᵢ / Σ wᵢ` for non-negative weights.
///
/// With intensities in `[0, 1]` the output is always a probability; with
/// uniform weights it is the mean intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    shape: Shape,
    weights: Vec<f64>,
    total: f64,
}

impl LinearModel {
    pub fn new(shape: Shape, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} weights", shape.len()),
                actual: format!("{}", weights.len()),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config("linear model weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::config("linear model weights must not all be zero"));
        }
        Ok(LinearModel { shape, weights, total })
    }

    pub fn mean_intensity(shape: Shape) -> Self {
        LinearModel::new(shape, vec![1.0; shape.len()]).expect("uniform weights")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Model for LinearModel {
    fn num_classes(&self) -> usize {
        2
    }

    fn input_shape(&self) -> Option<Shape> {
        Some(self.shape)
    }

    fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        images
            .iter()
            .map(|img| {
                img.ensure_shape(self.shape)?;
                let dot: f64 = img.data().iter().zip(&self.weights).map(|(x, w)| x * w).sum();
                let p = (dot / self.total).clamp(0.0, 1.0);
                Ok(vec![p, 1.0 - p])
            })
            .collect()
    }
}
