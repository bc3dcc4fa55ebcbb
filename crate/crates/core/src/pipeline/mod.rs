//! Orchestration: local and global explanations, the sum-rule diagnostic,
//! frequency spectra, the sprite benchmark and report output.

mod benchmark;
mod output;
mod spec;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use benchmark::{benchmark_dsprites, run_benchmark, BenchmarkConfig, BenchmarkReport, Check, LocalCase};
pub use output::{Format, Report};
pub use spec::{load_data_dir, BuildOptions, CodecSpec, DataDir, ModelSpec};

use crate::codec::{bin_center, Codec, FourierCodec};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::models::{argmax, Model};
use crate::rng::{self, Domain};
use crate::shapley::{exact_shapley, mc_shapley, Attribution, Method, EXACT_MAX_PLAYERS};
use crate::value_fn::{BackgroundMode, BackgroundSet, EncodedBackground, LatentValueFn, ValueFnConfig};

pub const SCHEMA: &str = "latent-shap/1";
pub const DEFAULT_SAMPLES: usize = 10_000;
/// Largest `2^n · |bg|` for which exact enumeration is chosen automatically.
pub const EXACT_BUDGET: f64 = 1e7;
/// Datasets up to this size use every cross pair for the sum-rule baseline.
pub const CROSS_PAIR_LIMIT: usize = 512;
pub const SAMPLED_CROSS_PAIRS: usize = 1 << 16;

/// Which class each explanation attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPolicy {
    Argmax,
    Fixed(usize),
    TrueLabel,
}

impl FromStr for TargetPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" => Ok(TargetPolicy::Argmax),
            "label" => Ok(TargetPolicy::TrueLabel),
            _ => s
                .strip_prefix("class:")
                .and_then(|k| k.parse().ok())
                .map(TargetPolicy::Fixed)
                .ok_or_else(|| Error::config(format!("bad target {s:?}; use argmax, class:<k> or label"))),
        }
    }
}

impl fmt::Display for TargetPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetPolicy::Argmax => write!(f, "argmax"),
            TargetPolicy::Fixed(k) => write!(f, "class:{k}"),
            TargetPolicy::TrueLabel => write!(f, "label"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    /// Exact when `n` and `2^n · |bg|` are within budget, otherwise Monte-Carlo.
    Auto,
    Exact,
    MonteCarlo,
}

impl FromStr for MethodChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(MethodChoice::Auto),
            "exact" => Ok(MethodChoice::Exact),
            "mc" | "monte-carlo" => Ok(MethodChoice::MonteCarlo),
            _ => Err(Error::config(format!("bad method {s:?}; use auto, exact or mc"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub target: TargetPolicy,
    pub method: MethodChoice,
    /// Permutations per Monte-Carlo explanation.
    pub num_samples: usize,
    /// Background draws per coalition evaluation when sampling.
    pub num_background_draws: usize,
    pub seed: u64,
    /// Explain a seeded subset of this many points in global mode.
    pub max_explain: Option<usize>,
    /// Keep per-sample attributions in global reports.
    pub retain_locals: bool,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            target: TargetPolicy::Argmax,
            method: MethodChoice::Auto,
            num_samples: DEFAULT_SAMPLES,
            num_background_draws: 1,
            seed: 0,
            max_explain: None,
            retain_locals: false,
        }
    }
}

impl ExplainConfig {
    /// Defaults for global runs: targets are true labels.
    pub fn global() -> Self {
        ExplainConfig {
            target: TargetPolicy::TrueLabel,
            ..ExplainConfig::default()
        }
    }
}

/// A model, a codec and the settings used to explain it.
#[derive(Clone)]
pub struct Explainer {
    pub model: Arc<dyn Model>,
    pub codec: Arc<dyn Codec>,
    pub config: ExplainConfig,
}

impl fmt::Debug for Explainer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Explainer")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

/// Images with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(images: Vec<Image>, labels: Option<Vec<usize>>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(l) = &labels {
            if l.len() != images.len() {
                return Err(Error::config(format!("{} labels for {} images", l.len(), images.len())));
            }
        }
        Ok(Dataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Plan {
    method: Method,
    background: BackgroundMode,
}

impl Explainer {
    pub fn new(model: Arc<dyn Model>, codec: Arc<dyn Codec>, config: ExplainConfig) -> Self {
        Explainer { model, codec, config }
    }

    fn plan(&self, n: usize, background: usize) -> Result<Plan> {
        let affordable = n <= EXACT_MAX_PLAYERS && (n as f64).exp2() * background as f64 <= EXACT_BUDGET;
        let exhaustive = if affordable {
            BackgroundMode::Exhaustive
        } else {
            BackgroundMode::Sampled
        };
        match self.config.method {
            MethodChoice::Auto if affordable => Ok(Plan {
                method: Method::Exact,
                background: BackgroundMode::Exhaustive,
            }),
            MethodChoice::Exact if n > EXACT_MAX_PLAYERS => Err(Error::PlayerCountExceeded {
                n,
                max: EXACT_MAX_PLAYERS,
            }),
            MethodChoice::Exact => Ok(Plan {
                method: Method::Exact,
                background: exhaustive,
            }),
            MethodChoice::Auto | MethodChoice::MonteCarlo => Ok(Plan {
                method: Method::MonteCarlo,
                background: BackgroundMode::Sampled,
            }),
        }
    }

    fn target_for(&self, x: &Image, label: Option<usize>) -> Result<usize> {
        let target = match self.config.target {
            TargetPolicy::Argmax => argmax(&self.model.predict_one(x)?),
            TargetPolicy::Fixed(k) => k,
            TargetPolicy::TrueLabel => {
                label.ok_or_else(|| Error::config("target policy 'label' needs a labeled input"))?
            }
        };
        if target >= self.model.num_classes() {
            return Err(Error::config(format!(
                "target class {target} but the model has {} classes",
                self.model.num_classes()
            )));
        }
        Ok(target)
    }

    fn explain_encoded(
        &self,
        x: &Image,
        background: &EncodedBackground,
        target: usize,
        seed: u64,
    ) -> Result<Attribution> {
        let n = self.codec.grouping().num_features();
        let plan = self.plan(n, background.len())?;
        let cfg = ValueFnConfig {
            target_class: target,
            num_background_draws: self.config.num_background_draws,
            seed,
            background: plan.background,
        };
        let v = LatentValueFn::new(self.model.clone(), self.codec.clone(), x, background.clone(), cfg)?;
        let a = match plan.method {
            Method::Exact => exact_shapley(&v)?,
            Method::MonteCarlo => mc_shapley(&v, self.config.num_samples, seed)?,
        };
        Ok(Attribution {
            target_class: Some(target),
            ..a.with_feature_names(self.codec.grouping().feature_names())
        })
    }
}

/// Attribution of the model's prediction on `x` to the codec's features.
pub fn explain_local(
    explainer: &Explainer,
    x: &Image,
    background: &BackgroundSet,
    label: Option<usize>,
) -> Result<Attribution> {
    let target = explainer.target_for(x, label)?;
    let encoded = background.encode(explainer.codec.as_ref())?;
    explainer.explain_encoded(x, &encoded, target, explainer.config.seed)
}

/// `Σ_i Φ(i)` against `E[f_y(x)] − E_{p(x')p(y)}[f_y(x')]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumRule {
    pub lhs: f64,
    pub rhs: f64,
    /// `E[f_y(x)]` over the explained points (reconstructions).
    pub mean_target_prob: f64,
    /// `E_{p(x')p(y)}[f_y(x')]`.
    pub baseline: f64,
    pub lhs_std_error: f64,
    pub rhs_std_error: f64,
    pub tolerance: f64,
    pub cross_pairs: usize,
    pub cross_pairs_sampled: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalRecord {
    pub index: usize,
    pub attribution: Attribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalReport {
    pub feature_names: Vec<String>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub method: Method,
    pub num_samples: usize,
    pub target: TargetPolicy,
    pub dataset_size: usize,
    pub explained: Vec<usize>,
    pub sum_rule: SumRule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub locals: Option<Vec<LocalRecord>>,
}

impl GlobalReport {
    pub fn value_of(&self, feature: &str) -> Option<f64> {
        let i = self.feature_names.iter().position(|n| n == feature)?;
        Some(self.values[i])
    }
}

/// Indices of the points explained in a global run, ascending.
fn explained_indices(cfg: &ExplainConfig, n: usize) -> Vec<usize> {
    match cfg.max_explain {
        Some(k) if k < n => {
            let mut rng = rng::substream(cfg.seed, Domain::DATASET_SUBSET, 0);
            let mut picked = index::sample(&mut rng, n, k).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..n).collect(),
    }
}

/// Global attribution: the mean of local attributions over the dataset (or
/// a seeded subset of it), with every point's own label as target by default.
/// The whole dataset serves as background.
pub fn explain_global(explainer: &Explainer, dataset: &Dataset) -> Result<GlobalReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if explainer.config.max_explain == Some(0) {
        return Err(Error::config("must explain at least one point"));
    }
    let background = BackgroundSet::new(dataset.images.clone())?;
    let encoded = background.encode(explainer.codec.as_ref())?;
    let explained = explained_indices(&explainer.config, dataset.len());
    let label = |i: usize| dataset.labels.as_ref().map(|l| l[i]);
    let targets: Vec<usize> = explained
        .iter()
        .map(|&i| explainer.target_for(&dataset.images[i], label(i)))
        .collect::<Result<_>>()?;

    let locals: Vec<Attribution> = explained
        .par_iter()
        .zip(&targets)
        .map(|(&i, &y)| {
            let seed = rng::derive_seed(explainer.config.seed, Domain::LOCAL_SEED, i as u64);
            explainer.explain_encoded(&dataset.images[i], &encoded, y, seed)
        })
        .collect::<Result<_>>()?;

    let n = explainer.codec.grouping().num_features();
    let k = locals.len() as f64;
    let values: Vec<f64> = (0..n)
        .map(|f| locals.iter().map(|a| a.values[f]).sum::<f64>() / k)
        .collect();

    // Monte-Carlo error of each local estimate, plus sampling error when only
    // part of the dataset is explained.
    let population = dataset.len() as f64;
    let subset = explained.len() < dataset.len();
    let std_errors: Vec<f64> = (0..n)
        .map(|f| {
            let mc: f64 = locals.iter().map(|a| a.std_errors[f].powi(2)).sum::<f64>() / (k * k);
            let sampling = if subset && k > 1.0 {
                let var = locals.iter().map(|a| (a.values[f] - values[f]).powi(2)).sum::<f64>() / (k - 1.0);
                var / k * (population - k) / (population - 1.0)
            } else {
                0.0
            };
            (mc + sampling).sqrt()
        })
        .collect();

    let sum_rule = sum_rule(explainer, dataset, &encoded, &explained, &targets, &locals, &values)?;
    let first = &locals[0];
    Ok(GlobalReport {
        feature_names: explainer.codec.grouping().feature_names().to_vec(),
        values,
        std_errors,
        method: first.method,
        num_samples: first.num_samples,
        target: explainer.config.target,
        dataset_size: dataset.len(),
        locals: explainer.config.retain_locals.then(|| {
            explained
                .iter()
                .zip(&locals)
                .map(|(&index, a)| LocalRecord {
                    index,
                    attribution: a.clone(),
                })
                .collect()
        }),
        explained,
        sum_rule,
    })
}

fn sum_rule(
    explainer: &Explainer,
    dataset: &Dataset,
    encoded: &EncodedBackground,
    explained: &[usize],
    targets: &[usize],
    locals: &[Attribution],
    values: &[f64],
) -> Result<SumRule> {
    // f(decode(encode(x'))) for every background point
    let recon = explainer.codec.decode_many(encoded.latents())?;
    let probs = explainer.model.predict(&recon)?;
    if probs.len() != recon.len() {
        return Err(Error::BadProbabilities(format!(
            "{} outputs for {} images",
            probs.len(),
            recon.len()
        )));
    }
    let k = explained.len() as f64;
    let mean_target_prob = explained.iter().zip(targets).map(|(&i, &y)| probs[i][y]).sum::<f64>() / k;

    let (baseline, rhs_std_error, cross_pairs, sampled) = if dataset.len() <= CROSS_PAIR_LIMIT {
        let total: f64 = targets
            .iter()
            .map(|&y| probs.iter().map(|p| p[y]).sum::<f64>() / probs.len() as f64)
            .sum();
        (total / k, 0.0, targets.len() * probs.len(), false)
    } else {
        let mut rng = rng::substream(explainer.config.seed, Domain::CROSS_PAIRS, 0);
        let draws: Vec<f64> = (0..SAMPLED_CROSS_PAIRS)
            .map(|_| {
                let j = rng.gen_range(0..probs.len());
                let y = targets[rng.gen_range(0..targets.len())];
                probs[j][y]
            })
            .collect();
        let m = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / m;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (mean, (var / m).sqrt(), draws.len(), true)
    };

    let lhs: f64 = values.iter().sum();
    let rhs = mean_target_prob - baseline;
    let lhs_std_error = locals.iter().map(|a| a.total_std_error.powi(2)).sum::<f64>().sqrt() / k;
    let rounding = 1e-10 * lhs.abs().max(rhs.abs()).max(1.0);
    let tolerance = 3.0 * lhs_std_error.hypot(rhs_std_error) + rounding;
    Ok(SumRule {
        lhs,
        rhs,
        mean_target_prob,
        baseline,
        lhs_std_error,
        rhs_std_error,
        tolerance,
        cross_pairs,
        cross_pairs_sampled: sampled,
        holds: (lhs - rhs).abs() <= tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub bin: usize,
    /// Center of the bin in normalized frequency, `[0, √2/2]`.
    pub frequency: f64,
    pub phi: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub num_bins: usize,
    pub rows: Vec<SpectrumRow>,
    pub attribution: Attribution,
}

/// Shapley values of `num_bins` frequency bands, one row per band.
pub fn spectrum_report(
    explainer: &Explainer,
    x: &Image,
    background: &BackgroundSet,
    num_bins: usize,
    label: Option<usize>,
) -> Result<SpectrumReport> {
    let fourier = explainer.codec.as_fourier().ok_or(Error::CodecMismatch)?;
    let binned: Arc<dyn Codec> = Arc::new(FourierCodec::new(fourier.input_shape(), Some(num_bins))?);
    let ex = Explainer {
        codec: binned,
        ..explainer.clone()
    };
    let attribution = explain_local(&ex, x, background, label)?;
    let rows = (0..num_bins)
        .map(|k| SpectrumRow {
            bin: k,
            frequency: bin_center(k, num_bins),
            phi: attribution.values[k],
            std_error: attribution.std_errors[k],
        })
        .collect();
    Ok(SpectrumReport {
        num_bins,
        rows,
        attribution,
    })
}
