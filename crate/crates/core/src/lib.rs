//! Shapley-value explanations of black-box image classifiers in terms of
//! latent features.
//!
//! A [`codec::Codec`] maps images to latent vectors whose scalars are grouped
//! into semantic features. [`value_fn`] builds the coalition game that
//! splices latent features of the explained image with those of background
//! points, and [`shapley`] attributes the model output to the features,
//! exactly or by Monte-Carlo permutation sampling. [`pipeline`] ties these
//! together into local, global and frequency-spectrum explanations.

pub mod coalition;
pub mod codec;
pub mod error;
pub mod image;
pub mod models;
pub mod pipeline;
pub mod protocol;
pub mod rng;
pub mod shapley;
pub mod sprites;
pub mod value_fn;

pub use coalition::Coalition;
pub use error::{Error, Result};
pub use image::{Image, Shape};
pub use shapley::{efficiency_gap, exact_shapley, mc_shapley, Attribution, Method, ValueFunction};
