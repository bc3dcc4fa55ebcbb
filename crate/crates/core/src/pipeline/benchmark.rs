use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    explain_global, explain_local, Dataset, ExplainConfig, Explainer, GlobalReport, MethodChoice, TargetPolicy,
};
use crate::codec::{Codec, GroundTruthCodec};
use crate::error::Result;
use crate::models::{argmax, flip_vertical, top_half_count, Model, TopHalfCounter};
use crate::shapley::Attribution;
use crate::sprites::{sample_dataset, SpriteGenerator, SpriteLatents, SpriteShape, DEFAULT_SIZE, NUM_SCALES};
use crate::value_fn::BackgroundSet;

const SHAPE: usize = 0;
const SCALE: usize = 1;
const ORIENTATION: usize = 2;
const POS_X: usize = 3;
const POS_Y: usize = 4;

/// Share of `Σ|Φ|` that pos-y and scale must carry together.
pub const CONCENTRATION: f64 = 0.90;
/// Largest share of `Σ|Φ|` allowed for each of shape, orientation and pos-x.
pub const DUMMY_SHARE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub seed: u64,
    /// Sprites in the generated dataset; they are also the background.
    pub n_train: usize,
    /// Sprites explained in the global run.
    pub n_explain: usize,
    /// Permutations per local explanation.
    pub num_samples: usize,
    pub grid: usize,
    /// Count white pixels in the bottom half instead of the top half.
    pub bottom_half: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            seed: 0,
            n_train: 1000,
            n_explain: 200,
            num_samples: 2000,
            grid: DEFAULT_SIZE,
            bottom_half: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// A sprite with no white pixels in the counted half, explained locally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalCase {
    pub latents: SpriteLatents,
    pub counted_pixels: usize,
    pub predicted: usize,
    pub attribution: Attribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub thresholds: Vec<f64>,
    pub global: GlobalReport,
    pub local: Vec<LocalCase>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

pub fn benchmark_dsprites(seed: u64, n_train: usize, n_explain: usize) -> Result<BenchmarkReport> {
    run_benchmark(&BenchmarkConfig {
        seed,
        n_train,
        n_explain,
        ..BenchmarkConfig::default()
    })
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let generator = SpriteGenerator::new(cfg.grid)?;
    let dataset = sample_dataset(cfg.n_train, cfg.seed, &generator)?;
    let counter = if cfg.bottom_half {
        TopHalfCounter::bottom_half(dataset.thresholds.clone())?
    } else {
        TopHalfCounter::new(dataset.thresholds.clone())?
    };
    let labels: Vec<usize> = dataset.samples.iter().map(|s| counter.classify(&s.image)).collect();

    // Local cases sit at the far edge of the uncounted half.
    let case_latents: Vec<SpriteLatents> = [NUM_SCALES - 1, 2]
        .iter()
        .map(|&scale_idx| SpriteLatents {
            shape: SpriteShape::Square,
            scale_idx,
            orientation: 0.0,
            pos_x: 0.5,
            pos_y: if cfg.bottom_half { 0.0 } else { 1.0 },
        })
        .collect();
    let mut codec = GroundTruthCodec::from_dataset(&dataset);
    let case_images: Vec<_> = case_latents.iter().map(|l| codec.register(*l)).collect::<Result<_>>()?;
    let codec: Arc<dyn Codec> = Arc::new(codec);
    let model: Arc<dyn Model> = Arc::new(counter.clone());

    let global_cfg = ExplainConfig {
        target: TargetPolicy::TrueLabel,
        method: MethodChoice::MonteCarlo,
        num_samples: cfg.num_samples,
        num_background_draws: 1,
        seed: cfg.seed,
        max_explain: Some(cfg.n_explain),
        retain_locals: false,
    };
    let explainer = Explainer::new(model.clone(), codec.clone(), global_cfg);
    let data = Dataset::new(dataset.images(), Some(labels))?;
    let global = explain_global(&explainer, &data)?;

    let background = BackgroundSet::new(data.images.clone())?;
    let local_explainer = Explainer::new(
        model.clone(),
        codec,
        ExplainConfig {
            seed: cfg.seed,
            ..ExplainConfig::default()
        },
    );
    let local = case_latents
        .iter()
        .zip(&case_images)
        .map(|(lat, img)| {
            let counted = if cfg.bottom_half {
                top_half_count(&flip_vertical(img))
            } else {
                top_half_count(img)
            };
            Ok(LocalCase {
                latents: *lat,
                counted_pixels: counted,
                predicted: argmax(&model.predict_one(img)?),
                attribution: explain_local(&local_explainer, img, &background, None)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let checks = checks(&global, &local);
    let passed = checks.iter().all(|c| c.passed);
    Ok(BenchmarkReport {
        config: cfg.clone(),
        thresholds: dataset.thresholds,
        global,
        local,
        checks,
        passed,
    })
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

fn largest_abs(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.abs() > values[best].abs() {
            best = i;
        }
    }
    best
}

fn checks(global: &GlobalReport, local: &[LocalCase]) -> Vec<Check> {
    let phi = &global.values;
    let se = &global.std_errors;
    let total: f64 = phi.iter().map(|v| v.abs()).sum();
    let main = phi[POS_Y].abs() + phi[SCALE].abs();
    let mut out = vec![check(
        "concentration",
        total > 0.0 && main >= CONCENTRATION * total,
        format!("|pos-y| + |scale| = {main:.6}, sum |phi| = {total:.6}"),
    )];
    for (i, name) in [(SHAPE, "shape"), (ORIENTATION, "orientation"), (POS_X, "pos-x")] {
        let lower = phi[i].abs() - 3.0 * se[i];
        out.push(check(
            &format!("minor-{name}"),
            lower <= DUMMY_SHARE * total,
            format!(
                "|phi| = {:.6} +- {:.6}, limit {:.6}",
                phi[i].abs(),
                se[i],
                DUMMY_SHARE * total
            ),
        ));
    }
    let sr = &global.sum_rule;
    out.push(check(
        "sum-rule",
        sr.holds,
        format!("lhs {:.6}, rhs {:.6}, tolerance {:.6}", sr.lhs, sr.rhs, sr.tolerance),
    ));
    for case in local {
        let a = &case.attribution;
        let tag = format!("local-scale{}", case.latents.scale_idx);
        out.push(check(
            &format!("{tag}-class"),
            case.counted_pixels == 0 && case.predicted == 0,
            format!(
                "{} counted pixels, predicted class {}",
                case.counted_pixels, case.predicted
            ),
        ));
        out.push(check(
            &format!("{tag}-pos-y-dominant"),
            largest_abs(&a.values) == POS_Y,
            format!("phi = {:?}", a.values),
        ));
        if case.latents.scale_idx == NUM_SCALES - 1 {
            out.push(check(
                &format!("{tag}-scale-negative"),
                a.values[SCALE] < 0.0,
                format!("phi(scale) = {:.6}", a.values[SCALE]),
            ));
        }
    }
    out
}
