use std::collections::VecDeque;

use super::{one_hot, Model};
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
        }
    }
}

/// Whether some black pixel cannot reach the image border through black pixels.
///
/// `black` is row-major over `height × width`.
pub fn has_hole(black: &[bool], height: usize, width: usize, connectivity: Connectivity) -> bool {
    let mut reached = vec![false; black.len()];
    let mut queue = VecDeque::new();
    for r in 0..height {
        for c in 0..width {
            let on_border = r == 0 || c == 0 || r + 1 == height || c + 1 == width;
            let i = r * width + c;
            if on_border && black[i] {
                reached[i] = true;
                queue.push_back((r, c));
            }
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        for &(dr, dc) in connectivity.offsets() {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr < 0 || nc < 0 || nr >= height as isize || nc >= width as isize {
                continue;
            }
            let j = nr as usize * width + nc as usize;
            if black[j] && !reached[j] {
                reached[j] = true;
                queue.push_back((nr as usize, nc as usize));
            }
        }
    }
    black.iter().zip(&reached).any(|(&b, &seen)| b && !seen)
}

/// Two-class model: class 1 iff the binarized image contains a geometric hole.
#[derive(Debug, Clone, PartialEq)]
pub struct HoleDetector {
    binarize_threshold: f64,
    connectivity: Connectivity,
}

impl HoleDetector {
    pub fn new(binarize_threshold: f64) -> Result<Self> {
        if !(binarize_threshold > 0.0 && binarize_threshold < 1.0) {
            return Err(Error::config(format!(
                "binarize threshold {binarize_threshold} must lie in (0, 1)"
            )));
        }
        Ok(HoleDetector {
            binarize_threshold,
            connectivity: Connectivity::Four,
        })
    }

    pub fn with_connectivity(mut self, connectivity: Connectivity) -> Self {
        self.connectivity = connectivity;
        self
    }

    /// Pixels whose mean channel intensity is below the threshold.
    pub fn binarize(&self, image: &Image) -> Vec<bool> {
        let ch = image.channels();
        image
            .data()
            .chunks(ch)
            .map(|px| px.iter().sum::<f64>() / (ch as f64) < self.binarize_threshold)
            .collect()
    }

    pub fn classify(&self, image: &Image) -> usize {
        let black = self.binarize(image);
        has_hole(&black, image.height(), image.width(), self.connectivity) as usize
    }
}

pub fn hole_detector_model(binarize_threshold: f64) -> Result<HoleDetector> {
    HoleDetector::new(binarize_threshold)
}

impl Model for HoleDetector {
    fn num_classes(&self) -> usize {
        2
    }

    fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        Ok(images.iter().map(|img| one_hot(self.classify(img), 2)).collect())
    }
}
