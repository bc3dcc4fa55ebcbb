use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use super::{Codec, FeatureGrouping, FeatureKind, LatentVector};
use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::sprites::{SpriteDataset, SpriteGenerator, SpriteLatents, LATENT_NAMES};

/// Largest L2 pixel distance accepted by nearest-exemplar encoding.
pub const EXEMPLAR_TOLERANCE: f64 = 1e-9;

/// Encodes generator images to their true latent factors and decodes by
/// rendering. Encoding needs the image's provenance: it must have been
/// registered as an exemplar, or lie within tolerance of one.
#[derive(Debug, Clone)]
pub struct GroundTruthCodec {
    generator: SpriteGenerator,
    grouping: Arc<FeatureGrouping>,
    exemplars: Vec<(SpriteLatents, Image)>,
    by_hash: HashMap<u64, Vec<usize>>,
}

fn image_hash(image: &Image) -> u64 {
    let mut h = DefaultHasher::new();
    for v in image.data() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

impl GroundTruthCodec {
    pub fn new(generator: SpriteGenerator) -> Self {
        let names = LATENT_NAMES.iter().map(|s| s.to_string()).collect();
        let grouping = FeatureGrouping::new((0..5).collect(), names, FeatureKind::GroundTruthLatent)
            .expect("five singleton features");
        GroundTruthCodec {
            generator,
            grouping: Arc::new(grouping),
            exemplars: Vec::new(),
            by_hash: HashMap::new(),
        }
    }

    pub fn from_dataset(dataset: &SpriteDataset) -> Self {
        let mut codec = GroundTruthCodec::new(dataset.generator.clone());
        for s in &dataset.samples {
            codec.insert(s.latents, s.image.clone());
        }
        codec
    }

    /// Renders `latents` and records the result as an exemplar.
    pub fn register(&mut self, latents: SpriteLatents) -> Result<Image> {
        let image = self.generator.render(&latents)?;
        self.insert(latents, image.clone());
        Ok(image)
    }

    fn insert(&mut self, latents: SpriteLatents, image: Image) {
        let hash = image_hash(&image);
        let idx = self.exemplars.len();
        self.exemplars.push((latents, image));
        self.by_hash.entry(hash).or_default().push(idx);
    }

    pub fn generator(&self) -> &SpriteGenerator {
        &self.generator
    }

    pub fn latents_of(&self, image: &Image) -> Result<SpriteLatents> {
        image.ensure_shape(self.generator.shape())?;
        if let Some(candidates) = self.by_hash.get(&image_hash(image)) {
            if let Some(&i) = candidates.iter().find(|&&i| self.exemplars[i].1 == *image) {
                return Ok(self.exemplars[i].0);
            }
        }
        let mut best: Option<(f64, usize)> = None;
        for (i, (_, ex)) in self.exemplars.iter().enumerate() {
            let d2: f64 = ex.data().iter().zip(image.data()).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.is_none_or(|(bd, _)| d2 < bd) {
                best = Some((d2, i));
            }
        }
        match best {
            Some((d2, i)) if d2.sqrt() <= EXEMPLAR_TOLERANCE => Ok(self.exemplars[i].0),
            _ => Err(Error::UnknownImage),
        }
    }
}

pub fn ground_truth_codec(generator: SpriteGenerator) -> GroundTruthCodec {
    GroundTruthCodec::new(generator)
}

impl Codec for GroundTruthCodec {
    fn input_shape(&self) -> Shape {
        self.generator.shape()
    }

    fn grouping(&self) -> &Arc<FeatureGrouping> {
        &self.grouping
    }

    fn encode(&self, image: &Image) -> Result<LatentVector> {
        let lat = self.latents_of(image)?;
        LatentVector::from_real(&lat.to_scalars(), self.grouping.clone())
    }

    fn decode(&self, latent: &LatentVector) -> Result<Image> {
        self.check_latent(latent)?;
        let s = latent.real_parts();
        let lat = SpriteLatents::from_scalars(&[s[0], s[1], s[2], s[3], s[4]]);
        self.generator.render(&lat)
    }
}
