//! Command-line front end. `src/bin/leanet.rs` only calls [`main`].
//!
//! Settings resolve as flag, then `LEANET_*` environment variable, then the
//! TOML file given by `--config`, then built-in defaults. The file may hold
//! `[train]` and `[network]` tables (field names as in [`TrainConfig`] and
//! [`NetworkConfig`]) plus:
//!
//! ```toml
//! [pipeline]
//! threshold = 0.5
//! min_region_area = 4
//!
//! [serve]
//! addr = "127.0.0.1:8080"
//! cache_size = 64
//! dropbox = "/srv/slides/incoming"
//! ```
//!
//! Exit status is 0 on success, 2 for usage errors and 1 when the command
//! fails, in which case standard error ends with one JSON line
//! `{"error":{"kind":..,"message":..}}`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::dataio::{
    encode_mask, load_dataset, make_toy_slide, read_labels, split_sizes, write_labels, write_sample, LabelSet,
    SlideFixture, SlideSample, Split,
};
use crate::error::{Error, Result};
use crate::extract::{AdapterRegistry, SlideDocument};
use crate::narrate::{script_for, synthesize, to_markup, Mode, Synthesis};
use crate::pipeline::{document_from_mask, segment, PipelineOptions};
use crate::segnet::{checkpoint, NetworkConfig, SegNet};
use crate::service::{self, ServiceConfig, DEFAULT_CACHE_SIZE};
use crate::train::ablation::{run_ablation, AblationGrid};
use crate::train::{evaluate, train, MetricOptions, TrainConfig, TrainHooks};

#[derive(Debug, Parser)]
#[command(name = "leanet", version, about = "Slide segmentation and narration")]
pub struct Cli {
    /// TOML settings file.
    #[arg(long, global = true, env = "LEANET_CONFIG")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// `toy` when every training image fits inside the default 540x720 crop, else `full`.
    Auto,
    /// Full-canvas crops without augmentation.
    Toy,
    /// Default training recipe (540x720 crops, scale/blur/colour augmentation).
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NarrateFormat {
    /// One line per utterance.
    Transcript,
    /// Tagged markup in reading order.
    Markup,
    /// Narration script as JSON.
    Script,
}

#[derive(Clone, Debug, clap::Args)]
pub struct TrainArgs {
    /// Training-schedule preset the other settings start from.
    #[arg(long, value_enum, default_value = "auto", env = "LEANET_PRESET")]
    pub preset: Preset,
    #[arg(long, env = "LEANET_ITERS")]
    pub iters: Option<usize>,
    /// Initial learning rate.
    #[arg(long, env = "LEANET_LR")]
    pub lr: Option<f64>,
    #[arg(long, env = "LEANET_BATCH")]
    pub batch: Option<usize>,
    #[arg(long, env = "LEANET_SEED")]
    pub seed: Option<u64>,
    /// Gradient worker threads (0 = all cores).
    #[arg(long, env = "LEANET_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic slide dataset with fixtures.
    Toyset {
        #[arg(long, env = "LEANET_OUT")]
        out: PathBuf,
        /// Training slides.
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Validation slides.
        #[arg(long, default_value_t = 2)]
        val: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 48)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
    },
    /// Train a network; writes model.ckpt, labels.txt, history.jsonl and summary.json.
    Train {
        #[arg(long, env = "LEANET_DATA")]
        data: PathBuf,
        #[arg(long, env = "LEANET_OUT")]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Score a checkpoint on a dataset split.
    Eval {
        #[arg(long, env = "LEANET_DATA")]
        data: PathBuf,
        #[arg(long, env = "LEANET_CKPT")]
        ckpt: PathBuf,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
        #[arg(long, env = "LEANET_THRESHOLD")]
        threshold: Option<f64>,
        /// Metrics JSON destination (also printed).
        #[arg(long, env = "LEANET_OUT")]
        out: Option<PathBuf>,
    },
    /// Train every cell of the attention ablation grid; writes ablation.json and ablation.csv.
    Ablate {
        #[arg(long, env = "LEANET_DATA")]
        data: PathBuf,
        #[arg(long, env = "LEANET_OUT")]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Predict a multi-label mask; writes mask.lmask, one PNG per class and segment.json.
    Segment {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, env = "LEANET_CKPT")]
        ckpt: PathBuf,
        /// Label manifest (default: labels.txt next to the checkpoint).
        #[arg(long, env = "LEANET_LABELS")]
        labels: Option<PathBuf>,
        #[arg(long, env = "LEANET_THRESHOLD")]
        threshold: Option<f64>,
        #[arg(long, env = "LEANET_OUT")]
        out: PathBuf,
    },
    /// Segment, extract regions and recognise their content into a SlideDocument.
    Extract {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, env = "LEANET_CKPT")]
        ckpt: PathBuf,
        #[arg(long, env = "LEANET_LABELS")]
        labels: Option<PathBuf>,
        /// Slide fixture whose content the stub recognisers report.
        #[arg(long)]
        fixture: Option<PathBuf>,
        #[arg(long, env = "LEANET_THRESHOLD")]
        threshold: Option<f64>,
        #[arg(long, env = "LEANET_MIN_AREA")]
        min_area: Option<usize>,
        /// Value of `image_ref` (default: the image file name).
        #[arg(long)]
        image_ref: Option<String>,
        /// Document destination (default: standard output).
        #[arg(long, env = "LEANET_OUT")]
        out: Option<PathBuf>,
    },
    /// Narrate a SlideDocument.
    Narrate {
        #[arg(long)]
        doc: PathBuf,
        /// interactive | non_interactive (aliases: region, read_all).
        #[arg(long, default_value = "read_all")]
        mode: String,
        /// Region id for interactive mode.
        #[arg(long)]
        region: Option<u32>,
        #[arg(long, value_enum, default_value = "transcript")]
        format: NarrateFormat,
        /// Destination (default: standard output).
        #[arg(long, env = "LEANET_OUT")]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "LEANET_CKPT")]
        ckpt: PathBuf,
        #[arg(long, env = "LEANET_LABELS")]
        labels: Option<PathBuf>,
        /// Listen address; port 0 picks a free port.
        #[arg(long, env = "LEANET_ADDR")]
        addr: Option<String>,
        /// Directory polled for a frame when a capture request has no body.
        #[arg(long, env = "LEANET_DROPBOX")]
        dropbox: Option<PathBuf>,
        #[arg(long, env = "LEANET_CACHE_SIZE")]
        cache_size: Option<usize>,
        #[arg(long, env = "LEANET_THRESHOLD")]
        threshold: Option<f64>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    train: Option<toml::Table>,
    network: Option<toml::Table>,
    pipeline: PipelineSection,
    serve: ServeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PipelineSection {
    threshold: Option<f64>,
    min_region_area: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ServeSection {
    addr: Option<String>,
    cache_size: Option<usize>,
    dropbox: Option<PathBuf>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

/// Overlay the keys of `table` on the serialized `base`.
fn overlay<T: serde::Serialize + serde::de::DeserializeOwned>(base: T, table: Option<&toml::Table>, what: &str) -> Result<T> {
    let Some(table) = table else {
        return Ok(base);
    };
    let mut value = serde_json::to_value(base)?;
    let patch = serde_json::to_value(table)?;
    if let (Value::Object(dst), Value::Object(src)) = (&mut value, patch) {
        for (k, v) in src {
            if !dst.contains_key(&k) {
                return Err(Error::config(format!("unknown key `{k}` in [{what}]")));
            }
            dst.insert(k, v);
        }
    }
    serde_json::from_value(value).map_err(|e| Error::config(format!("[{what}]: {e}")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn println_json(value: &Value) {
    println!("{value}");
}

fn load_checkpoint(path: &Path) -> Result<SegNet> {
    if !path.is_file() {
        return Err(Error::NotFound(format!("checkpoint `{}` does not exist", path.display())));
    }
    checkpoint::load(path, None)
}

fn resolve_labels(explicit: Option<&Path>, ckpt: &Path) -> Result<LabelSet> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => ckpt.with_file_name("labels.txt"),
    };
    if !path.is_file() {
        return Err(Error::NotFound(format!(
            "label manifest `{}` does not exist (pass --labels)",
            path.display()
        )));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    LabelSet::from_manifest(&text)
}

fn read_image(path: &Path) -> Result<image::RgbImage> {
    if !path.is_file() {
        return Err(Error::NotFound(format!("image `{}` does not exist", path.display())));
    }
    Ok(image::open(path)?.to_rgb8())
}

fn load_split(root: &Path, split: Split, labels: &LabelSet) -> Result<Vec<SlideSample>> {
    load_dataset(root, split, labels.clone())?.iter().collect()
}

struct TrainingData {
    labels: LabelSet,
    train: Vec<SlideSample>,
    val: Vec<SlideSample>,
}

fn load_training_data(root: &Path) -> Result<TrainingData> {
    if !root.is_dir() {
        return Err(Error::NotFound(format!("dataset directory `{}` does not exist", root.display())));
    }
    let labels = read_labels(root)?;
    let train = load_split(root, Split::Train, &labels)?;
    let val = if split_sizes(root)?[1] > 0 {
        load_split(root, Split::Val, &labels)?
    } else {
        Vec::new()
    };
    Ok(TrainingData { labels, train, val })
}

fn train_config(args: &TrainArgs, file: &FileConfig, samples: &[SlideSample]) -> Result<TrainConfig> {
    let full = TrainConfig::default();
    let fits = samples.iter().all(|s| {
        (s.image.height() as usize) <= full.crop.0 && (s.image.width() as usize) <= full.crop.1
    });
    let preset = match args.preset {
        Preset::Auto if fits => Preset::Toy,
        Preset::Auto => Preset::Full,
        p => p,
    };
    let mut cfg = match preset {
        Preset::Toy => {
            let first = samples
                .first()
                .ok_or_else(|| Error::Dataset("training set is empty".into()))?;
            let canvas = (first.image.height() as usize, first.image.width() as usize);
            if samples
                .iter()
                .any(|s| (s.image.height() as usize, s.image.width() as usize) != canvas)
            {
                return Err(Error::config(
                    "the toy preset needs equally sized training images; use --preset full",
                ));
            }
            TrainConfig::toy_overfit(canvas, full.max_iteration)
        }
        _ => full,
    };
    cfg = overlay(cfg, file.train.as_ref(), "train")?;
    if let Some(v) = args.iters {
        cfg.max_iteration = v;
    }
    if let Some(v) = args.lr {
        cfg.lr0 = v;
    }
    if let Some(v) = args.batch {
        cfg.batch = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn network_config(labels: &LabelSet, file: &FileConfig) -> Result<NetworkConfig> {
    let cfg = overlay(NetworkConfig::toy(labels.len()), file.network.as_ref(), "network")?;
    if cfg.num_classes != labels.len() {
        return Err(Error::config(format!(
            "[network] num_classes is {} but the dataset has {} labels",
            cfg.num_classes,
            labels.len()
        )));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn threshold(flag: Option<f64>, file: &FileConfig) -> f64 {
    flag.or(file.pipeline.threshold).unwrap_or(0.5)
}

fn cmd_toyset(out: &Path, n: usize, val: usize, classes: usize, seed: u64, h: usize, w: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::config("--n must be at least 1"));
    }
    let labels = LabelSet::toy(classes)?;
    write_labels(out, &labels)?;
    for i in 0..n + val {
        let slide = make_toy_slide(&labels, seed, i, h, w)?;
        let split = if i < n { Split::Train } else { Split::Val };
        write_sample(out, split, &slide.sample, Some(&slide.fixture))?;
    }
    println_json(&json!({ "out": out, "train": n, "val": val, "classes": labels.names() }));
    Ok(())
}

fn cmd_train(data: &Path, out: &Path, args: &TrainArgs, file: &FileConfig) -> Result<()> {
    let set = load_training_data(data)?;
    let cfg = train_config(args, file, &set.train)?;
    let net_cfg = network_config(&set.labels, file)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let history_path = out.join("history.jsonl");
    let mut history = io::BufWriter::new(fs::File::create(&history_path).map_err(|e| Error::io(&history_path, e))?);
    let outcome = train(
        &set.train,
        &set.val,
        net_cfg,
        &cfg,
        TrainHooks {
            history: Some(&mut history),
            snapshot_dir: Some(out),
        },
    )?;
    history.flush().map_err(|e| Error::io(&history_path, e))?;
    checkpoint::save(&outcome.net, &out.join("model.ckpt"))?;
    write_labels(out, &set.labels)?;
    let train_report = evaluate(&outcome.net, &set.train, cfg.threshold, MetricOptions::default())?;
    let summary = json!({
        "iterations": cfg.max_iteration,
        "final_loss": outcome.history.last().map(|r| r.loss),
        "initial_loss": outcome.history.first().map(|r| r.loss),
        "beta": outcome.net.attention().beta(outcome.net.params()),
        "train": train_report,
        "val": outcome.history.iter().rev().find(|r| r.miou.is_some()).map(|r| json!({ "mIoU": r.miou, "PA": r.pa })),
        "config": cfg,
    });
    write_file(&out.join("summary.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    println_json(&json!({
        "checkpoint": out.join("model.ckpt"),
        "history": history_path,
        "final_loss": summary["final_loss"],
        "train_mIoU": train_report.mean_iou,
    }));
    Ok(())
}

fn cmd_eval(data: &Path, ckpt: &Path, split: Split, thr: f64, out: Option<&Path>) -> Result<()> {
    let net = load_checkpoint(ckpt)?;
    if !data.is_dir() {
        return Err(Error::NotFound(format!("dataset directory `{}` does not exist", data.display())));
    }
    let labels = read_labels(data)?;
    net.check_label_count(labels.len())?;
    let samples = load_split(data, split, &labels)?;
    let report = evaluate(&net, &samples, thr, MetricOptions::default())?;
    let body = json!({
        "split": split.as_str(),
        "samples": samples.len(),
        "classes": labels.names(),
        "mIoU": report.mean_iou,
        "PA": report.pixel_accuracy,
        "per_class_iou": report.per_class_iou,
        "confusion_counts": report.confusion_counts,
    });
    if let Some(path) = out {
        write_file(path, serde_json::to_string_pretty(&body)?.as_bytes())?;
    }
    println_json(&body);
    Ok(())
}

fn cmd_ablate(data: &Path, out: &Path, args: &TrainArgs, file: &FileConfig) -> Result<()> {
    let set = load_training_data(data)?;
    let mut args = args.clone();
    args.iters = args.iters.or(Some(200));
    let cfg = train_config(&args, file, &set.train)?;
    let base = network_config(&set.labels, file)?;
    let table = run_ablation(&AblationGrid::standard(), &set.train, &set.val, &base, &cfg)?;
    write_file(&out.join("ablation.json"), table.to_json()?.as_bytes())?;
    write_file(&out.join("ablation.csv"), table.to_csv().as_bytes())?;
    println_json(&json!({
        "rows": table.rows.len(),
        "failed": table.rows.iter().filter(|r| r.status != "ok").count(),
        "direction_check": table.direction_check,
        "table": out.join("ablation.json"),
    }));
    Ok(())
}

fn cmd_segment(image: &Path, ckpt: &Path, labels: Option<&Path>, thr: f64, out: &Path) -> Result<()> {
    let net = load_checkpoint(ckpt)?;
    let labels = resolve_labels(labels, ckpt)?;
    let img = read_image(image)?;
    let seg = segment(&net, &labels, &img, thr)?;
    write_file(&out.join("mask.lmask"), &encode_mask(&seg.mask))?;
    let planes = out.join("masks");
    fs::create_dir_all(&planes).map_err(|e| Error::io(&planes, e))?;
    let (_, h, w) = seg.mask.dims();
    let mut classes = Vec::new();
    for k in 0..labels.len() {
        let pixels: Vec<u8> = seg.mask.plane(k).iter().map(|&v| v * 255).collect();
        let plane = image::GrayImage::from_raw(w as u32, h as u32, pixels)
            .ok_or_else(|| Error::shape("mask plane size mismatch"))?;
        plane.save(planes.join(format!("{}.png", labels.name(k))))?;
        classes.push(json!({ "index": k, "name": labels.name(k), "pixels": seg.mask.count(k) }));
    }
    let summary = json!({ "image": image, "width": w, "height": h, "threshold": thr, "classes": classes });
    write_file(&out.join("segment.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    println_json(&json!({ "mask": out.join("mask.lmask"), "classes": labels.len() }));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_extract(
    image: &Path,
    ckpt: &Path,
    labels: Option<&Path>,
    fixture: Option<&Path>,
    opts: PipelineOptions,
    image_ref: Option<&str>,
    out: Option<&Path>,
) -> Result<()> {
    let net = load_checkpoint(ckpt)?;
    let labels = resolve_labels(labels, ckpt)?;
    let img = read_image(image)?;
    let fixture: Option<SlideFixture> = match fixture {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(serde_json::from_str(&text)?)
        }
        None => None,
    };
    let image_ref = match image_ref {
        Some(r) => r.to_string(),
        None => image
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| image.display().to_string()),
    };
    let seg = segment(&net, &labels, &img, opts.threshold)?;
    let registry = AdapterRegistry::stubs(fixture);
    let doc = document_from_mask(&img, &image_ref, &seg, &labels, &registry, opts.min_region_area)?;
    emit(out, &(doc.to_canonical_json()? + "\n"))
}

fn cmd_narrate(doc: &Path, mode: &str, region: Option<u32>, format: NarrateFormat, out: Option<&Path>) -> Result<()> {
    let mode: Mode = mode.parse()?;
    if !doc.is_file() {
        return Err(Error::NotFound(format!("document `{}` does not exist", doc.display())));
    }
    let text = fs::read_to_string(doc).map_err(|e| Error::io(doc, e))?;
    let doc = SlideDocument::from_json(&text)?;
    let script = script_for(&doc, mode, region)?;
    let rendered = match format {
        NarrateFormat::Markup => to_markup(&doc),
        NarrateFormat::Script => serde_json::to_string_pretty(&script)? + "\n",
        NarrateFormat::Transcript => match synthesize(&script, None) {
            Synthesis::Transcript { text } => text,
            Synthesis::Audio { .. } => unreachable!("no speech adapter was given"),
        },
    };
    emit(out, &rendered)
}

#[allow(clippy::too_many_arguments)]
fn cmd_serve(
    ckpt: &Path,
    labels: Option<&Path>,
    addr: Option<String>,
    dropbox: Option<PathBuf>,
    cache_size: Option<usize>,
    thr: Option<f64>,
    file: &FileConfig,
) -> Result<()> {
    let net = load_checkpoint(ckpt)?;
    let labels = resolve_labels(labels, ckpt)?;
    let addr = addr
        .or_else(|| file.serve.addr.clone())
        .unwrap_or_else(|| "127.0.0.1:8080".into());
    let source = match dropbox.or_else(|| file.serve.dropbox.clone()) {
        Some(dir) => Some(service::drop_box(&dir)?),
        None => None,
    };
    let config = ServiceConfig {
        cache_size: cache_size.or(file.serve.cache_size).unwrap_or(DEFAULT_CACHE_SIZE),
        pipeline: PipelineOptions {
            threshold: threshold(thr, file),
            min_region_area: file.pipeline.min_region_area,
        },
        source,
    };
    let app = service::router(net, labels, AdapterRegistry::stubs(None), config)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("tokio runtime", e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Error::io(addr.as_str(), e))?;
        let local = listener.local_addr().map_err(|e| Error::io(addr.as_str(), e))?;
        println_json(&json!({ "listening": local.to_string() }));
        service::serve(app, listener).await
    })
}

pub fn run(cli: Cli) -> Result<()> {
    let file = read_config(cli.config.as_deref())?;
    match cli.command {
        Command::Toyset {
            out,
            n,
            val,
            classes,
            seed,
            height,
            width,
        } => cmd_toyset(&out, n, val, classes, seed, height, width),
        Command::Train { data, out, train } => cmd_train(&data, &out, &train, &file),
        Command::Eval {
            data,
            ckpt,
            split,
            threshold: thr,
            out,
        } => cmd_eval(&data, &ckpt, split.into(), threshold(thr, &file), out.as_deref()),
        Command::Ablate { data, out, train } => cmd_ablate(&data, &out, &train, &file),
        Command::Segment {
            image,
            ckpt,
            labels,
            threshold: thr,
            out,
        } => cmd_segment(&image, &ckpt, labels.as_deref(), threshold(thr, &file), &out),
        Command::Extract {
            image,
            ckpt,
            labels,
            fixture,
            threshold: thr,
            min_area,
            image_ref,
            out,
        } => cmd_extract(
            &image,
            &ckpt,
            labels.as_deref(),
            fixture.as_deref(),
            PipelineOptions {
                threshold: threshold(thr, &file),
                min_region_area: min_area.or(file.pipeline.min_region_area),
            },
            image_ref.as_deref(),
            out.as_deref(),
        ),
        Command::Narrate {
            doc,
            mode,
            region,
            format,
            out,
        } => cmd_narrate(&doc, &mode, region, format, out.as_deref()),
        Command::Serve {
            ckpt,
            labels,
            addr,
            dropbox,
            cache_size,
            threshold: thr,
        } => cmd_serve(&ckpt, labels.as_deref(), addr, dropbox, cache_size, thr, &file),
    }
}

/// One-line JSON error as written to standard error.
pub fn error_line(err: &Error) -> String {
    json!({ "error": { "kind": err.kind(), "message": err.to_string() } }).to_string()
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LEANET_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(1)
        }
    }
}
