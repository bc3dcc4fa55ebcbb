//! Value functions that marginalize a model over out-of-coalition features.
//!
//! For a data point `x`, target class `y` and background points `x'`, the
//! latent value function is
//!
//! ```text
//! ṽ(S) = mean_j f_y(decode(z_S(x) ⊔ z_S̄(x'_j)))
//! ```
//!
//! where `z = encode(·)`. The full coalition evaluates `f_y(decode(encode(x)))`
//! without touching the background, so for lossy codecs efficiency holds with
//! respect to the reconstruction rather than `x` itself.
//!
//! Background draws for a plain `evaluate(S)` are keyed on `(seed, S)`, which
//! makes `ṽ` a deterministic function of the coalition. Monte-Carlo chains
//! instead share one draw set per sample, keyed on `(seed, sample)`.

use std::sync::Arc;

use rand::Rng;

use crate::coalition::Coalition;
use crate::codec::{identity_codec, Codec, FeatureGrouping, LatentVector};
use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::models::Model;
use crate::rng::{self, Domain};
use crate::shapley::ValueFunction;

const PREDICT_BATCH: usize = 256;

/// In-coalition scalars from `z`, the rest from `z_prime`.
pub fn splice(z: &LatentVector, z_prime: &LatentVector, s: Coalition) -> Result<LatentVector> {
    if !z.same_grouping(z_prime) {
        return Err(Error::GroupingMismatch(
            "spliced latents use different groupings".into(),
        ));
    }
    let grouping = z.grouping();
    if s.num_players() != grouping.num_features() {
        return Err(Error::GroupingMismatch(format!(
            "coalition over {} players, grouping has {} features",
            s.num_players(),
            grouping.num_features()
        )));
    }
    let scalars = z
        .scalars()
        .iter()
        .zip(z_prime.scalars())
        .zip(grouping.scalar_assignment())
        .map(|((&a, &b), &f)| if s.contains(f) { a } else { b })
        .collect();
    LatentVector::new(scalars, grouping.clone())
}

/// Points standing in for the data distribution `p(x')`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSet {
    points: Vec<Image>,
}

impl BackgroundSet {
    pub fn new(points: Vec<Image>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyDataset)?.shape();
        for p in &points {
            p.ensure_shape(first)?;
        }
        Ok(BackgroundSet { points })
    }

    pub fn points(&self) -> &[Image] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn shape(&self) -> Shape {
        self.points[0].shape()
    }

    pub fn encode(&self, codec: &dyn Codec) -> Result<EncodedBackground> {
        let latents = self
            .points
            .iter()
            .map(|p| codec.encode(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncodedBackground {
            latents: latents.into(),
        })
    }
}

/// Background latents, encoded once and shared between value functions.
#[derive(Debug, Clone)]
pub struct EncodedBackground {
    latents: Arc<[LatentVector]>,
}

impl EncodedBackground {
    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    pub fn latents(&self) -> &[LatentVector] {
        &self.latents
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundMode {
    /// Average over every background point.
    Exhaustive,
    /// Average over `num_background_draws` points drawn with replacement.
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFnConfig {
    pub target_class: usize,
    pub num_background_draws: usize,
    pub seed: u64,
    pub background: BackgroundMode,
}

impl ValueFnConfig {
    pub fn sampled(target_class: usize, num_background_draws: usize, seed: u64) -> Self {
        ValueFnConfig {
            target_class,
            num_background_draws,
            seed,
            background: BackgroundMode::Sampled,
        }
    }

    pub fn exhaustive(target_class: usize) -> Self {
        ValueFnConfig {
            target_class,
            num_background_draws: 1,
            seed: 0,
            background: BackgroundMode::Exhaustive,
        }
    }
}

/// `ṽ(S)` for one data point; see the module docs.
pub struct LatentValueFn {
    model: Arc<dyn Model>,
    codec: Arc<dyn Codec>,
    x_latent: LatentVector,
    background: EncodedBackground,
    cfg: ValueFnConfig,
    v_full: f64,
}

impl std::fmt::Debug for LatentValueFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LatentValueFn")
            .field("cfg", &self.cfg)
            .field("v_full", &self.v_full)
            .field("background", &self.background.len())
            .finish()
    }
}

pub fn make_latent_value_fn(
    model: Arc<dyn Model>,
    codec: Arc<dyn Codec>,
    x: &Image,
    background: &BackgroundSet,
    cfg: ValueFnConfig,
) -> Result<LatentValueFn> {
    let encoded = background.encode(codec.as_ref())?;
    LatentValueFn::new(model, codec, x, encoded, cfg)
}

/// Raw-feature value function: the identity codec with a pixel grouping
/// (one feature per pixel location when `grouping` is `None`).
pub fn make_raw_value_fn(
    model: Arc<dyn Model>,
    x: &Image,
    background: &BackgroundSet,
    cfg: ValueFnConfig,
    grouping: Option<FeatureGrouping>,
) -> Result<LatentValueFn> {
    let grouping = match grouping {
        Some(g) => g,
        None => FeatureGrouping::per_pixel(x.shape())?,
    };
    let codec: Arc<dyn Codec> = Arc::new(identity_codec(x.shape(), grouping)?);
    make_latent_value_fn(model, codec, x, background, cfg)
}

impl LatentValueFn {
    pub fn new(
        model: Arc<dyn Model>,
        codec: Arc<dyn Codec>,
        x: &Image,
        background: EncodedBackground,
        cfg: ValueFnConfig,
    ) -> Result<Self> {
        x.ensure_shape(codec.input_shape())?;
        if let Some(shape) = model.input_shape() {
            if shape != codec.input_shape() {
                return Err(Error::ShapeMismatch {
                    expected: format!("model input {shape}"),
                    actual: format!("codec output {}", codec.input_shape()),
                });
            }
        }
        if cfg.target_class >= model.num_classes() {
            return Err(Error::config(format!(
                "target class {} but the model has {} classes",
                cfg.target_class,
                model.num_classes()
            )));
        }
        if cfg.num_background_draws == 0 {
            return Err(Error::config("need at least one background draw"));
        }
        if background.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for z in background.latents() {
            codec.check_latent(z)?;
        }
        let x_latent = codec.encode(x)?;
        let recon = codec.decode(&x_latent)?;
        let probs = model.predict_one(&recon)?;
        let v_full = probs[cfg.target_class];
        Ok(LatentValueFn {
            model,
            codec,
            x_latent,
            background,
            cfg,
            v_full,
        })
    }

    pub fn v_full(&self) -> f64 {
        self.v_full
    }

    pub fn config(&self) -> &ValueFnConfig {
        &self.cfg
    }

    pub fn feature_names(&self) -> &[String] {
        self.codec.grouping().feature_names()
    }

    fn draws(&self, domain: Domain, key: u64) -> Vec<usize> {
        match self.cfg.background {
            BackgroundMode::Exhaustive => (0..self.background.len()).collect(),
            BackgroundMode::Sampled => {
                let mut rng = rng::substream(self.cfg.seed, domain, key);
                (0..self.cfg.num_background_draws)
                    .map(|_| rng.gen_range(0..self.background.len()))
                    .collect()
            }
        }
    }

    /// Target-class probabilities of the decoded splices, in request order.
    fn target_probs(&self, requests: &[(Coalition, usize)]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(requests.len());
        for batch in requests.chunks(PREDICT_BATCH) {
            let latents = batch
                .iter()
                .map(|&(s, j)| splice(&self.x_latent, &self.background.latents()[j], s))
                .collect::<Result<Vec<_>>>()?;
            let images = self.codec.decode_many(&latents)?;
            let probs = self.model.predict(&images)?;
            if probs.len() != images.len() {
                return Err(Error::BadProbabilities(format!(
                    "{} outputs for {} images",
                    probs.len(),
                    images.len()
                )));
            }
            out.extend(probs.iter().map(|p| p[self.cfg.target_class]));
        }
        Ok(out)
    }

    fn mean_with_draws(&self, s: Coalition, draws: &[usize]) -> Result<f64> {
        if s.is_full() {
            return Ok(self.v_full);
        }
        let requests: Vec<(Coalition, usize)> = draws.iter().map(|&j| (s, j)).collect();
        let probs = self.target_probs(&requests).map_err(|e| with_context(s, e))?;
        Ok(shifted_mean(&probs))
    }
}

/// Mean computed relative to the first value; exact when all values agree.
fn shifted_mean(values: &[f64]) -> f64 {
    let first = values[0];
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

fn with_context(s: Coalition, e: Error) -> Error {
    match e {
        e @ Error::ValueFunction { .. } => e,
        other => Error::ValueFunction {
            coalition: s.members(),
            source: Box::new(other),
        },
    }
}

impl ValueFunction for LatentValueFn {
    fn num_players(&self) -> usize {
        self.codec.grouping().num_features()
    }

    fn evaluate(&self, coalition: Coalition) -> Result<f64> {
        let draws = self.draws(Domain::COALITION_BACKGROUND, coalition.members());
        self.mean_with_draws(coalition, &draws)
    }

    fn evaluate_chain(&self, chain: &[Coalition], sample: u64) -> Result<Vec<f64>> {
        if self.cfg.background == BackgroundMode::Exhaustive {
            return self.evaluate_many(chain);
        }
        let draws = self.draws(Domain::SAMPLE_BACKGROUND, sample);
        let m = draws.len();
        let partial: Vec<Coalition> = chain.iter().copied().filter(|s| !s.is_full()).collect();
        let requests: Vec<(Coalition, usize)> = partial
            .iter()
            .flat_map(|&s| draws.iter().map(move |&j| (s, j)))
            .collect();
        let probs = self
            .target_probs(&requests)
            .map_err(|e| with_context(*partial.first().unwrap_or(&chain[0]), e))?;
        let mut means = probs.chunks(m).map(shifted_mean);
        Ok(chain
            .iter()
            .map(|s| {
                if s.is_full() {
                    self.v_full
                } else {
                    means.next().expect("one mean per partial coalition")
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::IdentityCodec;
    use crate::models::{ConstantModel, LinearModel};
    use crate::shapley::exact_shapley;

    fn grouping_2x2() -> Arc<FeatureGrouping> {
        Arc::new(
            FeatureGrouping::new(
                vec![0, 0, 1, 1],
                vec!["a".into(), "b".into()],
                crate::codec::FeatureKind::External,
            )
            .unwrap(),
        )
    }

    #[test]
    fn splice_takes_coalition_scalars_from_first_argument() {
        let g = grouping_2x2();
        let z = LatentVector::from_real(&[1.0, 2.0, 3.0, 4.0], g.clone()).unwrap();
        let zp = LatentVector::from_real(&[5.0, 6.0, 7.0, 8.0], g).unwrap();
        let out = splice(&z, &zp, Coalition::new(0b01, 2).unwrap()).unwrap();
        assert_eq!(out.real_parts(), vec![1.0, 2.0, 7.0, 8.0]);
        assert_eq!(splice(&z, &zp, Coalition::full(2)).unwrap(), z);
        assert_eq!(splice(&z, &zp, Coalition::empty(2)).unwrap(), zp);
    }

    #[test]
    fn splice_rejects_mismatched_groupings() {
        let z = LatentVector::from_real(&[1.0, 2.0, 3.0, 4.0], grouping_2x2()).unwrap();
        let other = Arc::new(FeatureGrouping::per_pixel(Shape::new(2, 2, 1)).unwrap());
        let zp = LatentVector::from_real(&[0.0; 4], other).unwrap();
        assert!(matches!(
            splice(&z, &zp, Coalition::full(2)),
            Err(Error::GroupingMismatch(_))
        ));
        assert!(splice(&z, &z, Coalition::full(3)).is_err());
    }

    fn two_pixel(values: [f64; 2]) -> Image {
        Image::new(Shape::new(2, 1, 1), values.to_vec()).unwrap()
    }

    #[test]
    fn raw_value_fn_by_hand() {
        // f₀(x) = x₀ via a linear model with weight only on pixel 0
        let shape = Shape::new(2, 1, 1);
        let model: Arc<dyn Model> = Arc::new(LinearModel::new(shape, vec![1.0, 0.0]).unwrap());
        let x = two_pixel([0.8, 0.3]);
        let bg = BackgroundSet::new(vec![two_pixel([0.0, 0.0])]).unwrap();
        let v = make_raw_value_fn(model, &x, &bg, ValueFnConfig::exhaustive(0), None).unwrap();
        let c = |bits| Coalition::new(bits, 2).unwrap();
        assert_eq!(v.evaluate(c(0b01)).unwrap(), 0.8);
        assert_eq!(v.evaluate(c(0b10)).unwrap(), 0.0);
        assert_eq!(v.evaluate(c(0b00)).unwrap(), 0.0);
        assert_eq!(v.evaluate(c(0b11)).unwrap(), 0.8);
    }

    /// Class-0 probability `x₀·x₁`.
    struct ProductModel;
    impl Model for ProductModel {
        fn num_classes(&self) -> usize {
            2
        }
        fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
            Ok(images
                .iter()
                .map(|i| {
                    let p = i.data()[0] * i.data()[1];
                    vec![p, 1.0 - p]
                })
                .collect())
        }
    }

    #[test]
    fn product_model_splits_evenly() {
        let x = two_pixel([1.0, 1.0]);
        let bg = BackgroundSet::new(vec![two_pixel([0.0, 0.0])]).unwrap();
        let v = make_raw_value_fn(Arc::new(ProductModel), &x, &bg, ValueFnConfig::exhaustive(0), None).unwrap();
        let a = exact_shapley(&v).unwrap();
        assert!((a.values[0] - 0.5).abs() < 1e-12 && (a.values[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_model_gives_constant_value() {
        let shape = Shape::new(2, 2, 1);
        let model: Arc<dyn Model> = Arc::new(ConstantModel::new(vec![0.7, 0.3]).unwrap());
        let codec: Arc<dyn Codec> =
            Arc::new(IdentityCodec::new(shape, FeatureGrouping::per_pixel(shape).unwrap()).unwrap());
        let x = Image::filled(shape, 0.2);
        let bg = BackgroundSet::new(vec![Image::filled(shape, 0.9), Image::filled(shape, 0.1)]).unwrap();
        let v = make_latent_value_fn(model, codec, &x, &bg, ValueFnConfig::sampled(0, 3, 5)).unwrap();
        for bits in 0..16 {
            assert_eq!(v.evaluate(Coalition::new(bits, 4).unwrap()).unwrap(), 0.7);
        }
        let a = exact_shapley(&v).unwrap();
        assert!(a.values.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let shape = Shape::new(2, 1, 1);
        let model: Arc<dyn Model> = Arc::new(ConstantModel::uniform(2));
        let bg = BackgroundSet::new(vec![two_pixel([0.0, 0.0])]).unwrap();
        let x = two_pixel([1.0, 0.0]);
        assert!(make_raw_value_fn(model.clone(), &x, &bg, ValueFnConfig::exhaustive(2), None).is_err());
        assert!(make_raw_value_fn(model.clone(), &x, &bg, ValueFnConfig::sampled(0, 0, 1), None).is_err());
        let wrong = Image::filled(Shape::new(1, 2, 1), 0.0);
        let codec: Arc<dyn Codec> =
            Arc::new(IdentityCodec::new(shape, FeatureGrouping::per_pixel(shape).unwrap()).unwrap());
        assert!(matches!(
            make_latent_value_fn(model, codec, &wrong, &bg, ValueFnConfig::exhaustive(0)),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(BackgroundSet::new(vec![]).is_err());
        assert!(BackgroundSet::new(vec![two_pixel([0.0, 0.0]), wrong]).is_err());
    }
}
