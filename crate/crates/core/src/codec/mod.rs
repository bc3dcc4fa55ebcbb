//! Encode/decode pairs between images and latent vectors, and the feature
//! groupings that turn latent scalars into Shapley players.

mod external;
mod fourier;
mod ground_truth;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use rustfft::num_complex::Complex64 as Scalar;

pub use external::{external_codec, ExternalCodec};
pub use fourier::{bin_center, fft2_encode, fourier_grouping, ifft2_decode, ifft2_raw, mode_bin, FourierCodec};
pub use ground_truth::{ground_truth_codec, GroundTruthCodec, EXEMPLAR_TOLERANCE};

use crate::coalition::MAX_PLAYERS;
use crate::error::{Error, Result};
use crate::image::{Image, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Pixel,
    FourierMode,
    FourierBin,
    GroundTruthLatent,
    External,
}

/// Partition of latent scalars into named semantic features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrouping {
    scalar_assignment: Vec<usize>,
    feature_names: Vec<String>,
    kind: FeatureKind,
    members: Vec<Vec<usize>>,
}

impl FeatureGrouping {
    pub fn new(scalar_assignment: Vec<usize>, feature_names: Vec<String>, kind: FeatureKind) -> Result<Self> {
        let n = feature_names.len();
        if n == 0 {
            return Err(Error::GroupingMismatch("grouping has no features".into()));
        }
        if n > MAX_PLAYERS {
            return Err(Error::TooManyFeatures(n));
        }
        let mut members = vec![Vec::new(); n];
        for (scalar, &feature) in scalar_assignment.iter().enumerate() {
            if feature >= n {
                return Err(Error::GroupingMismatch(format!(
                    "scalar {scalar} assigned to feature {feature}, but only {n} features exist"
                )));
            }
            members[feature].push(scalar);
        }
        if let Some(empty) = members.iter().position(Vec::is_empty) {
            return Err(Error::GroupingMismatch(format!(
                "feature {empty} ({}) owns no scalars",
                feature_names[empty]
            )));
        }
        Ok(FeatureGrouping {
            scalar_assignment,
            feature_names,
            kind,
            members,
        })
    }

    /// One feature per pixel location; the channels of a pixel move together.
    pub fn per_pixel(shape: Shape) -> Result<Self> {
        let assignment = (0..shape.len()).map(|s| s / shape.channels).collect();
        let names = (0..shape.height * shape.width)
            .map(|p| format!("pixel({},{})", p / shape.width, p % shape.width))
            .collect();
        FeatureGrouping::new(assignment, names, FeatureKind::Pixel)
    }

    /// Rectangular pixel blocks of `block_h × block_w`, all channels included.
    pub fn pixel_blocks(shape: Shape, block_h: usize, block_w: usize) -> Result<Self> {
        if block_h == 0 || block_w == 0 {
            return Err(Error::config("block size must be positive"));
        }
        let rows = shape.height.div_ceil(block_h);
        let cols = shape.width.div_ceil(block_w);
        let mut assignment = Vec::with_capacity(shape.len());
        for r in 0..shape.height {
            for c in 0..shape.width {
                for _ in 0..shape.channels {
                    assignment.push((r / block_h) * cols + c / block_w);
                }
            }
        }
        let names = (0..rows * cols)
            .map(|b| format!("block({},{})", b / cols, b % cols))
            .collect();
        FeatureGrouping::new(assignment, names, FeatureKind::Pixel)
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn num_scalars(&self) -> usize {
        self.scalar_assignment.len()
    }

    pub fn feature_of(&self, scalar: usize) -> usize {
        self.scalar_assignment[scalar]
    }

    pub fn scalar_assignment(&self) -> &[usize] {
        &self.scalar_assignment
    }

    pub fn scalars_of(&self, feature: usize) -> &[usize] {
        &self.members[feature]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }
}

/// Latent scalars of one data point, tied to the grouping that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector {
    scalars: Vec<Scalar>,
    grouping: Arc<FeatureGrouping>,
}

impl LatentVector {
    pub fn new(scalars: Vec<Scalar>, grouping: Arc<FeatureGrouping>) -> Result<Self> {
        if scalars.len() != grouping.num_scalars() {
            return Err(Error::GroupingMismatch(format!(
                "latent has {} scalars, grouping expects {}",
                scalars.len(),
                grouping.num_scalars()
            )));
        }
        Ok(LatentVector { scalars, grouping })
    }

    pub fn from_real(values: &[f64], grouping: Arc<FeatureGrouping>) -> Result<Self> {
        LatentVector::new(values.iter().map(|&v| Scalar::new(v, 0.0)).collect(), grouping)
    }

    pub fn scalars(&self) -> &[Scalar] {
        &self.scalars
    }

    pub fn grouping(&self) -> &Arc<FeatureGrouping> {
        &self.grouping
    }

    pub fn same_grouping(&self, other: &LatentVector) -> bool {
        Arc::ptr_eq(&self.grouping, &other.grouping) || self.grouping == other.grouping
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.scalars.iter().map(|s| s.re).collect()
    }
}

/// An encode/decode pair `x ↔ z` with its feature grouping.
pub trait Codec: Send + Sync {
    fn input_shape(&self) -> Shape;

    fn grouping(&self) -> &Arc<FeatureGrouping>;

    fn encode(&self, image: &Image) -> Result<LatentVector>;

    fn decode(&self, latent: &LatentVector) -> Result<Image>;

    fn decode_many(&self, latents: &[LatentVector]) -> Result<Vec<Image>> {
        latents.iter().map(|z| self.decode(z)).collect()
    }

    fn as_fourier(&self) -> Option<&FourierCodec> {
        None
    }

    fn check_latent(&self, latent: &LatentVector) -> Result<()> {
        if !Arc::ptr_eq(latent.grouping(), self.grouping()) && **latent.grouping() != **self.grouping() {
            return Err(Error::GroupingMismatch(
                "latent was not produced by this codec's grouping".into(),
            ));
        }
        Ok(())
    }
}

/// Flattens on encode, reshapes on decode.
#[derive(Debug, Clone)]
pub struct IdentityCodec {
    shape: Shape,
    grouping: Arc<FeatureGrouping>,
}

impl IdentityCodec {
    pub fn new(shape: Shape, grouping: FeatureGrouping) -> Result<Self> {
        if grouping.num_scalars() != shape.len() {
            return Err(Error::GroupingMismatch(format!(
                "grouping covers {} scalars, image {shape} has {}",
                grouping.num_scalars(),
                shape.len()
            )));
        }
        Ok(IdentityCodec {
            shape,
            grouping: Arc::new(grouping),
        })
    }
}

pub fn identity_codec(shape: Shape, grouping: FeatureGrouping) -> Result<IdentityCodec> {
    IdentityCodec::new(shape, grouping)
}

impl Codec for IdentityCodec {
    fn input_shape(&self) -> Shape {
        self.shape
    }

    fn grouping(&self) -> &Arc<FeatureGrouping> {
        &self.grouping
    }

    fn encode(&self, image: &Image) -> Result<LatentVector> {
        image.ensure_shape(self.shape)?;
        LatentVector::from_real(image.data(), self.grouping.clone())
    }

    fn decode(&self, latent: &LatentVector) -> Result<Image> {
        self.check_latent(latent)?;
        Image::new(self.shape, latent.real_parts())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_pixel_groups_channels() {
        let g = FeatureGrouping::per_pixel(Shape::new(2, 2, 3)).unwrap();
        assert_eq!(g.num_features(), 4);
        assert_eq!(g.scalars_of(1), &[3, 4, 5]);
    }

    #[test]
    fn quadrants_own_four_scalars_each() {
        let g = FeatureGrouping::pixel_blocks(Shape::new(4, 4, 1), 2, 2).unwrap();
        assert_eq!(g.num_features(), 4);
        for f in 0..4 {
            assert_eq!(g.scalars_of(f).len(), 4);
        }
        assert_eq!(g.scalars_of(1), &[2, 3, 6, 7]);
    }

    #[test]
    fn grouping_rejects_empty_features_and_bad_indices() {
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(FeatureGrouping::new(vec![0, 0], names.clone(), FeatureKind::External).is_err());
        assert!(FeatureGrouping::new(vec![0, 2], names.clone(), FeatureKind::External).is_err());
        assert!(FeatureGrouping::new(vec![1, 0], names, FeatureKind::External).is_ok());
        let many: Vec<String> = (0..65).map(|i| i.to_string()).collect();
        assert!(matches!(
            FeatureGrouping::new((0..65).collect(), many, FeatureKind::External),
            Err(Error::TooManyFeatures(65))
        ));
    }

    #[test]
    fn identity_round_trip_is_bit_exact() {
        let shape = Shape::new(3, 2, 2);
        let codec = identity_codec(shape, FeatureGrouping::per_pixel(shape).unwrap()).unwrap();
        let x = Image::new(shape, (0..12).map(|i| (i as f64 * 0.37).sin().abs()).collect()).unwrap();
        assert_eq!(codec.decode(&codec.encode(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn identity_rejects_mismatched_grouping() {
        let g = FeatureGrouping::per_pixel(Shape::new(2, 2, 1)).unwrap();
        assert!(matches!(
            identity_codec(Shape::new(2, 2, 3), g),
            Err(Error::GroupingMismatch(_))
        ));
    }
}
