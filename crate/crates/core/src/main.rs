use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use latent_shap::codec::{Codec, FeatureGrouping, FourierCodec, LatentVector, Scalar};
use latent_shap::models::{Connectivity, ConstantModel, HoleDetector, Model, TopHalfCounter};
use latent_shap::pipeline::{
    explain_global, explain_local, load_data_dir, run_benchmark, spectrum_report, BenchmarkConfig, BuildOptions,
    CodecSpec, DataDir, Dataset, ExplainConfig, Explainer, Format, MethodChoice, ModelSpec, Report, TargetPolicy,
    DEFAULT_SAMPLES,
};
use latent_shap::sprites::{export_dataset, sample_dataset, SpriteGenerator, DEFAULT_SIZE};
use latent_shap::value_fn::BackgroundSet;
use latent_shap::{Error, Image, Result, Shape};

const THREADS_VAR: &str = "LATENT_SHAP_THREADS";

#[derive(Parser)]
#[command(
    name = "latent-shap",
    version,
    about = "Shapley-value explanations over latent features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explain one prediction.
    ExplainLocal {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
    },
    /// Average local explanations over a labeled dataset.
    ExplainGlobal {
        #[command(flatten)]
        common: Common,
        /// Explain a seeded subset of this many images.
        #[arg(long)]
        max_explain: Option<usize>,
        /// Include every local attribution in the report.
        #[arg(long)]
        keep_locals: bool,
    },
    /// Shapley values of frequency bands of one image.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
    },
    /// Sprite benchmark with the top-half counting model.
    BenchmarkDsprites {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        n_train: usize,
        #[arg(long, default_value_t = 200)]
        n_explain: usize,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SIZE)]
        grid: usize,
        /// Count the bottom half instead of the top half.
        #[arg(long)]
        bottom_half: bool,
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a sprite dataset: PNGs, manifest.csv and thresholds.json.
    GenSprites {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_SIZE)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(hide = true)]
    ServeModel(ServeModel),
    #[command(hide = true)]
    ServeCodec(ServeCodec),
}

#[derive(Args)]
struct Common {
    /// builtin:tophalf, builtin:hole or exec:<cmd>
    #[arg(long, default_value = "builtin:tophalf")]
    model: String,
    /// identity, fourier, ground-truth or exec:<cmd>
    #[arg(long, default_value = "identity")]
    codec: String,
    /// Frequency bins for the Fourier codec (per-mode features when unset).
    #[arg(long)]
    bins: Option<usize>,
    /// Pixel block size HxW for the identity codec.
    #[arg(long)]
    block: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    bg_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// argmax, class:<k> or label
    #[arg(long)]
    target: Option<String>,
    /// auto, exact or mc
    #[arg(long, default_value = "auto")]
    method: String,
    /// json or csv
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory of images used as background (and as the dataset in global mode).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Channels per pixel in CSV images.
    #[arg(long, default_value_t = 1)]
    channels: usize,
    /// Child processes per external model or codec.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Seconds to wait for an external process reply.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    #[arg(long, default_value_t = 0.5)]
    hole_threshold: f64,
    /// 4 or 8
    #[arg(long, default_value_t = 4)]
    connectivity: u8,
}

#[derive(Args)]
struct InputArgs {
    /// Image to explain (.png or .csv).
    #[arg(long, conflicts_with = "index")]
    input: Option<PathBuf>,
    /// Explain image number `index` of the data directory instead.
    #[arg(long)]
    index: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelDouble {
    Tophalf,
    Hole,
    Uniform,
    BadProbs,
    Malformed,
    Exit,
}

#[derive(Args)]
struct ServeModel {
    #[arg(long, value_enum)]
    kind: ModelDouble,
    /// H,W,C
    #[arg(long, default_value = "64,64,1")]
    shape: String,
    #[arg(long, default_value_t = 2)]
    classes: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum CodecDouble {
    Identity,
    Fourier,
    Malformed,
}

#[derive(Args)]
struct ServeCodec {
    #[arg(long, value_enum)]
    kind: CodecDouble,
    #[arg(long, default_value = "8,8,1")]
    shape: String,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    block: Option<String>,
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::config(format!("bad block {s:?}; expected HxW"));
    let (h, w) = s.split_once('x').ok_or_else(bad)?;
    Ok((h.parse().map_err(|_| bad())?, w.parse().map_err(|_| bad())?))
}

fn parse_shape(s: &str) -> Result<Shape> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|d| d.trim().parse().map_err(|_| Error::config(format!("bad shape {s:?}"))))
        .collect::<Result<_>>()?;
    match dims.as_slice() {
        [h, w, c] => Ok(Shape::new(*h, *w, *c)),
        _ => Err(Error::config(format!("bad shape {s:?}; expected H,W,C"))),
    }
}

impl Common {
    fn options(&self) -> Result<BuildOptions> {
        Ok(BuildOptions {
            bins: self.bins,
            block: self.block.as_deref().map(parse_pair).transpose()?,
            hole_threshold: self.hole_threshold,
            connectivity: match self.connectivity {
                4 => Connectivity::Four,
                8 => Connectivity::Eight,
                c => return Err(Error::config(format!("connectivity must be 4 or 8, got {c}"))),
            },
            workers: self.workers,
            timeout: Duration::from_secs(self.timeout),
        })
    }

    fn config(&self, default_target: TargetPolicy) -> Result<ExplainConfig> {
        Ok(ExplainConfig {
            target: self
                .target
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or(default_target),
            method: self.method.parse::<MethodChoice>()?,
            num_samples: self.samples,
            num_background_draws: self.bg_draws,
            seed: self.seed,
            max_explain: None,
            retain_locals: false,
        })
    }

    fn data(&self) -> Result<Option<DataDir>> {
        self.data
            .as_deref()
            .map(|d| load_data_dir(d, self.channels))
            .transpose()
    }

    fn explainer(&self, shape: Shape, data: Option<&DataDir>, cfg: ExplainConfig) -> Result<Explainer> {
        let opts = self.options()?;
        let model = self.model.parse::<ModelSpec>()?.build(shape, data, &opts)?;
        let codec = self.codec.parse::<CodecSpec>()?.build(shape, data, &opts)?;
        Ok(Explainer::new(model, codec, cfg))
    }
}

/// The image to explain, its label when known, and the background set.
fn local_inputs(common: &Common, input: &InputArgs) -> Result<(Image, Option<usize>, Option<DataDir>, BackgroundSet)> {
    let data = common.data()?;
    let (x, label) = match (&input.input, input.index) {
        (Some(path), _) => (Image::load(path, common.channels)?, None),
        (None, Some(i)) => {
            let d = data.as_ref().ok_or_else(|| Error::config("--index needs --data"))?;
            let img = d
                .images
                .get(i)
                .ok_or_else(|| Error::config(format!("--index {i} but the data has {} images", d.images.len())))?;
            (img.clone(), d.labels.as_ref().map(|l| l[i]))
        }
        (None, None) => return Err(Error::config("give --input or --index")),
    };
    let background = match &data {
        Some(d) => BackgroundSet::new(d.images.clone())?,
        None => return Err(Error::config("--data is required as the background set")),
    };
    Ok((x, label, data, background))
}

fn emit(report: &Report, format: &str, out: Option<&Path>) -> Result<()> {
    let text = report.render(format.parse::<Format>()?);
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::config(format!("{THREADS_VAR}={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::ExplainLocal { common, input } => {
            let (x, label, data, bg) = local_inputs(&common, &input)?;
            let ex = common.explainer(x.shape(), data.as_ref(), common.config(TargetPolicy::Argmax)?)?;
            let a = explain_local(&ex, &x, &bg, label)?;
            emit(&Report::Local(a), &common.format, common.out.as_deref())?;
        }
        Command::ExplainGlobal {
            common,
            max_explain,
            keep_locals,
        } => {
            let data = common
                .data()?
                .ok_or_else(|| Error::config("explain-global needs --data"))?;
            let mut cfg = common.config(TargetPolicy::TrueLabel)?;
            cfg.max_explain = max_explain;
            cfg.retain_locals = keep_locals;
            let ex = common.explainer(data.images[0].shape(), Some(&data), cfg)?;
            let dataset = Dataset::new(data.images.clone(), data.labels.clone())?;
            let report = explain_global(&ex, &dataset)?;
            emit(&Report::Global(report), &common.format, common.out.as_deref())?;
        }
        Command::Spectrum { common, input } => {
            let bins = common.bins.ok_or_else(|| Error::config("spectrum needs --bins"))?;
            let (x, label, data, bg) = local_inputs(&common, &input)?;
            let ex = common.explainer(x.shape(), data.as_ref(), common.config(TargetPolicy::Argmax)?)?;
            let report = spectrum_report(&ex, &x, &bg, bins, label)?;
            emit(&Report::Spectrum(report), &common.format, common.out.as_deref())?;
        }
        Command::BenchmarkDsprites {
            seed,
            n_train,
            n_explain,
            samples,
            grid,
            bottom_half,
            format,
            out,
        } => {
            let report = run_benchmark(&BenchmarkConfig {
                seed,
                n_train,
                n_explain,
                num_samples: samples,
                grid,
                bottom_half,
            })?;
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("benchmark check failed: {}: {}", c.name, c.detail);
            }
            let passed = report.passed;
            emit(&Report::Benchmark(report), &format, out.as_deref())?;
            if !passed {
                return Ok(ExitCode::from(4));
            }
        }
        Command::GenSprites { n, seed, grid, out } => {
            let ds = sample_dataset(n, seed, &SpriteGenerator::new(grid)?)?;
            export_dataset(&ds, &out)?;
        }
        Command::ServeModel(args) => serve_model(&args)?,
        Command::ServeCodec(args) => serve_codec(&args)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Line-oriented request loop shared by the test doubles.
fn serve(hello: Value, mut handle: impl FnMut(&Value) -> Result<Option<String>>) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "{hello}")?;
    out.flush()?;
    for line in io::stdin().lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Value = serde_json::from_str(&line).map_err(|e| Error::protocol(None, e.to_string()))?;
        let id = req.get("id").cloned().unwrap_or(Value::Null);
        let reply = match handle(&req) {
            Ok(Some(raw)) => raw,
            Ok(None) => return Ok(()),
            Err(e) => json!({"id": id, "error": e.to_string()}).to_string(),
        };
        writeln!(out, "{reply}")?;
        out.flush()?;
    }
    Ok(())
}

fn floats(v: Option<&Value>) -> Result<Vec<f64>> {
    v.and_then(Value::as_array)
        .ok_or_else(|| Error::protocol(None, "expected an array"))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| Error::protocol(None, "expected a number")))
        .collect()
}

fn serve_model(args: &ServeModel) -> Result<()> {
    let shape = parse_shape(&args.shape)?;
    let model: Arc<dyn Model> = match args.kind {
        ModelDouble::Tophalf => {
            let thresholds = SpriteGenerator::new(shape.height)?.calibrated_thresholds()?;
            Arc::new(TopHalfCounter::new(thresholds)?)
        }
        ModelDouble::Hole => Arc::new(HoleDetector::new(0.5)?),
        _ => Arc::new(ConstantModel::uniform(args.classes)),
    };
    let hello = json!({
        "type": "hello",
        "role": "model",
        "num_classes": model.num_classes(),
        "input_shape": shape.to_array(),
    });
    let kind = args.kind;
    serve(hello, |req| {
        let id = req.get("id").cloned().unwrap_or(Value::Null);
        match kind {
            ModelDouble::Exit => return Ok(None),
            ModelDouble::Malformed => return Ok(Some(format!("{{\"id\": {id}, \"probs\": [[0.5, 0.5]"))),
            _ => {}
        }
        if req.get("op").and_then(Value::as_str) != Some("predict") {
            return Err(Error::protocol(None, "unknown op"));
        }
        let images = req
            .get("images")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::protocol(None, "images missing"))?
            .iter()
            .map(|img| Image::new(shape, floats(Some(img))?))
            .collect::<Result<Vec<_>>>()?;
        let mut probs = model.predict(&images)?;
        if let ModelDouble::BadProbs = kind {
            for p in &mut probs {
                p[0] += 0.25;
            }
        }
        Ok(Some(json!({"id": id, "probs": probs}).to_string()))
    })
}

fn serve_codec(args: &ServeCodec) -> Result<()> {
    let shape = parse_shape(&args.shape)?;
    let codec: Arc<dyn Codec> = match args.kind {
        CodecDouble::Fourier => Arc::new(FourierCodec::new(shape, args.bins)?),
        _ => {
            let grouping = match args.block.as_deref().map(parse_pair).transpose()? {
                Some((bh, bw)) => FeatureGrouping::pixel_blocks(shape, bh, bw)?,
                None => FeatureGrouping::per_pixel(shape)?,
            };
            Arc::new(latent_shap::codec::identity_codec(shape, grouping)?)
        }
    };
    let g = codec.grouping().clone();
    let hello = json!({
        "type": "hello",
        "role": "codec",
        "num_scalars": g.num_scalars(),
        "num_features": g.num_features(),
        "scalar_assignment": g.scalar_assignment(),
        "feature_names": g.feature_names(),
        "input_shape": shape.to_array(),
    });
    let kind = args.kind;
    serve(hello, |req| {
        let id = req.get("id").cloned().unwrap_or(Value::Null);
        if let CodecDouble::Malformed = kind {
            return Ok(Some("scalars: none".into()));
        }
        match req.get("op").and_then(Value::as_str) {
            Some("encode") => {
                let z = codec.encode(&Image::new(shape, floats(req.get("image"))?)?)?;
                let pairs: Vec<[f64; 2]> = z.scalars().iter().map(|s| [s.re, s.im]).collect();
                Ok(Some(json!({"id": id, "scalars": pairs}).to_string()))
            }
            Some("decode") => {
                let scalars = req
                    .get("scalars")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::protocol(None, "scalars missing"))?
                    .iter()
                    .map(|p| match floats(Some(p))?.as_slice() {
                        [re, im] => Ok(Scalar::new(*re, *im)),
                        _ => Err(Error::protocol(None, "scalar must be [re, im]")),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let image = codec.decode(&LatentVector::new(scalars, g.clone())?)?;
                Ok(Some(json!({"id": id, "image": image.data()}).to_string()))
            }
            _ => Err(Error::protocol(None, "unknown op")),
        }
    })
}
