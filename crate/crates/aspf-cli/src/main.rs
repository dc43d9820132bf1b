//! End-to-end command line: raw frames -> crops -> splits -> training ->
//! evaluation, attention maps, and int8 archives.
//!
//! Exit codes: 0 on success, 2 on usage errors (flag parsing), 1 on any
//! runtime failure.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use aspf::archive::{
    load_model, read_header, save_model, save_model_quantized, size_report, Dtype,
    ARCHIVE_VERSION,
};
use aspf::data::{
    build_manifest, extract_frames, load_dataset, load_pixels, prep_frames, split_manifest,
    write_rejection_csv, AttackType, CropPolicy, Manifest, PrepReport, Rejection, StubDetector,
};
use aspf::explain::{dump_kernels, grad_cam, overlay, saliency, TargetClass};
use aspf::img::Image;
use aspf::model::{Model, ModelSpec, NormKind};
use aspf::train::{evaluate, render_confusion_text, train, write_history_csv, TrainConfig};
use aspf::{Error, Result, Tensor};

#[derive(Parser)]
#[command(name = "aspf", version, about = "RGB face anti-spoofing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Crop faces out of raw frame directories and build a manifest.
    Prep {
        /// Frame tree: <source>/<subject>/<real|fake>/<attack>/<frame>.ppm
        #[arg(long)]
        source: PathBuf,
        /// Output directory for crops/, manifest.jsonl, rejections.csv.
        #[arg(long)]
        out: PathBuf,
        /// What to do when the detector reports several faces.
        #[arg(long, value_enum, default_value_t = PolicyArg::RejectMulti)]
        policy: PolicyArg,
        /// Square crop edge in pixels.
        #[arg(long, default_value_t = 96)]
        size: usize,
    },
    /// Partition a manifest into person-disjoint train/val/test files.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated subject ids reserved for the test split.
        #[arg(long)]
        holdout: String,
        /// Fraction of the remaining samples that goes to training.
        #[arg(long, default_value_t = 0.8)]
        train_frac: f64,
        /// Shuffle seed for the train/val assignment.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model described by a JSON config on a prepared data dir.
    Train {
        /// JSON file: {"model": {...}, "train": {...}}; unknown keys rejected.
        #[arg(long)]
        config: PathBuf,
        /// Directory holding train.jsonl, val.jsonl, and the crops.
        #[arg(long)]
        data: PathBuf,
        /// Where to write the trained archive.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an archived model against a manifest.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Decision threshold on the probability of "real".
        #[arg(long, default_value_t = 0.5)]
        threshold: f32,
    },
    /// Render an attention map or the learned stem filters.
    Explain {
        #[arg(long)]
        model: PathBuf,
        /// Input image (unused for --method kernels).
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Output image; written as PPM/PGM regardless of extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a float archive to per-tensor symmetric int8.
    Quantize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print an archive's header: spec, tensors, sizes.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Copy, Clone, ValueEnum)]
#[value(rename_all = "snake_case")]
enum PolicyArg {
    RejectMulti,
    LargestOnly,
}

impl From<PolicyArg> for CropPolicy {
    fn from(p: PolicyArg) -> CropPolicy {
        match p {
            PolicyArg::RejectMulti => CropPolicy::RejectMulti,
            PolicyArg::LargestOnly => CropPolicy::LargestOnly,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum MethodArg {
    Gradcam,
    Saliency,
    Kernels,
}

/// Top-level training config file.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CliConfig {
    model: ModelSpec,
    train: TrainConfig,
}

fn main() {
    // die like a unix tool when the reader closes the pipe instead of
    // panicking mid-println
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Prep {
            source,
            out,
            policy,
            size,
        } => prep(&source, &out, policy.into(), size),
        Command::Split {
            manifest,
            holdout,
            train_frac,
            seed,
        } => split(&manifest, &holdout, train_frac, seed),
        Command::Train { config, data, out } => train_cmd(&config, &data, &out),
        Command::Eval {
            model,
            manifest,
            threshold,
        } => eval_cmd(&model, &manifest, threshold),
        Command::Explain {
            model,
            image,
            method,
            out,
        } => explain_cmd(&model, &image, method, &out),
        Command::Quantize { model, out } => quantize_cmd(&model, &out),
        Command::Inspect { model } => inspect_cmd(&model),
    }
}

/// Subdirectories of `dir` in name order, hidden entries skipped. Regular
/// files are layout errors: the frame tree holds nothing else.
fn subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') {
            continue;
        }
        let path = entry.path();
        if !path.is_dir() {
            return Err(Error::Data {
                detail: format!("{}: expected only directories here", path.display()),
            });
        }
        out.push((name, path));
    }
    out.sort();
    Ok(out)
}

fn prep(source: &Path, out: &Path, policy: CropPolicy, size: usize) -> Result<()> {
    let crops_root = out.join("crops");
    let detector = StubDetector;
    let mut totals = PrepReport::default();
    let mut rejections: Vec<Rejection> = Vec::new();

    for (subject_name, subject_dir) in subdirs(source)? {
        let subject: u32 = subject_name.parse().map_err(|_| Error::Data {
            detail: format!("{}: expected a subject id directory", subject_dir.display()),
        })?;
        for (label_name, label_dir) in subdirs(&subject_dir)? {
            if label_name != "real" && label_name != "fake" {
                return Err(Error::Data {
                    detail: format!("{}: expected real/ or fake/", label_dir.display()),
                });
            }
            for (attack_name, attack_dir) in subdirs(&label_dir)? {
                let attack = AttackType::from_dir_name(&attack_name).ok_or_else(|| {
                    Error::Data {
                        detail: format!("{}: unknown attack type", attack_dir.display()),
                    }
                })?;
                if attack.label().dir_name() != label_name {
                    return Err(Error::Data {
                        detail: format!(
                            "{}: attack `{attack_name}` cannot sit under {label_name}/",
                            attack_dir.display()
                        ),
                    });
                }
                let frames = extract_frames(&attack_dir, 1)?;
                let crop_dir = crops_root
                    .join(&subject_name)
                    .join(&label_name)
                    .join(&attack_name);
                let video = format!("{subject}_{attack_name}");
                let report =
                    prep_frames(&frames, &video, &detector, policy, (size, size), &crop_dir)?;
                totals.frames_seen += report.frames_seen;
                totals.crops_written += report.crops_written;
                rejections.extend(report.rejections);
            }
        }
    }

    if totals.crops_written == 0 {
        return Err(Error::EmptyInput {
            what: format!("no crops produced from {}", source.display()),
        });
    }

    let manifest = build_manifest(&crops_root)?;
    let records = manifest
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.crop_path = format!("crops/{}", r.crop_path);
            r
        })
        .collect();
    let manifest = Manifest::from_records(records)?;
    manifest.write_jsonl(out.join("manifest.jsonl"))?;
    write_rejection_csv(out.join("rejections.csv"), &rejections)?;

    println!(
        "{} frames seen, {} crops written, {} rejected",
        totals.frames_seen,
        totals.crops_written,
        rejections.len()
    );
    println!("{}", manifest.summary());
    println!("manifest: {}", out.join("manifest.jsonl").display());
    Ok(())
}

fn parse_holdout(text: &str) -> Result<BTreeSet<u32>> {
    let mut ids = BTreeSet::new();
    for part in text.split(',') {
        let part = part.trim();
        let id: u32 = part.parse().map_err(|_| Error::InvalidArg {
            op: "split",
            detail: format!("holdout id `{part}` is not a subject id"),
        })?;
        ids.insert(id);
    }
    Ok(ids)
}

fn split(manifest_path: &Path, holdout: &str, train_frac: f64, seed: u64) -> Result<()> {
    let manifest = Manifest::read_jsonl(manifest_path)?;
    let holdout = parse_holdout(holdout)?;
    let split = split_manifest(&manifest, &holdout, train_frac, seed)?;

    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    for (name, part) in [
        ("train.jsonl", &split.train),
        ("val.jsonl", &split.val),
        ("test.jsonl", &split.test),
    ] {
        part.write_jsonl(dir.join(name))?;
        let subjects: Vec<String> = part.subjects().iter().map(u32::to_string).collect();
        println!(
            "{name}: {} samples, subjects {{{}}}",
            part.len(),
            subjects.join(", ")
        );
    }
    Ok(())
}

fn train_cmd(config_path: &Path, data: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
    let config: CliConfig = serde_json::from_str(&text).map_err(|e| Error::Config {
        detail: format!("{}: {e}", config_path.display()),
    })?;
    let (h, w, _) = config.model.input_shape;

    let train_set = load_dataset(&Manifest::read_jsonl(data.join("train.jsonl"))?, data, (h, w))?;
    let val_set = load_dataset(&Manifest::read_jsonl(data.join("val.jsonl"))?, data, (h, w))?;
    println!(
        "{} training samples, {} validation samples",
        train_set.len(),
        val_set.len()
    );

    let mut model = Model::build(&config.model, config.train.seed)?;
    println!("model: {} parameters", model.parameter_count());

    let outcome = train(&mut model, &train_set, &val_set, &config.train)?;
    for row in &outcome.history {
        println!(
            "epoch {:>4}: train loss {:.4} f1 {:.4} | val loss {:.4} f1 {:.4}",
            row.epoch, row.train_loss, row.train_f1, row.val_loss, row.val_f1
        );
    }
    match outcome.best_epoch {
        Some(e) => println!("best epoch {e} (val f1 {:.4})", outcome.best_val_f1),
        None => println!("no epochs ran"),
    }

    save_model(&model, out)?;
    let history_path = out.with_extension("history.csv");
    write_history_csv(&history_path, &outcome.history)?;
    println!("model: {}", out.display());
    println!("history: {}", history_path.display());
    Ok(())
}

fn eval_cmd(model_path: &Path, manifest_path: &Path, threshold: f32) -> Result<()> {
    let model = load_model(model_path)?;
    let manifest = Manifest::read_jsonl(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let (h, w, _) = model.spec().input_shape;
    let set = load_dataset(&manifest, root, (h, w))?;
    let report = evaluate(&model, &set, threshold)?;
    println!("{}", render_confusion_text(&report));
    println!(
        "accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}",
        report.accuracy, report.precision, report.recall, report.f1
    );
    Ok(())
}

fn explain_cmd(model_path: &Path, image: &Path, method: MethodArg, out: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let rendered = match method {
        MethodArg::Kernels => dump_kernels(&model, "backbone.0.conv.kernel")?,
        MethodArg::Gradcam => {
            let (h, w, _) = model.spec().input_shape;
            let input = Tensor::new(&[h, w, 3], load_pixels(image, (h, w))?)?;
            let map = grad_cam(&model, &input, None, TargetClass::Fake)?;
            let base = Image::read(image)?.resize_bilinear(w, h)?;
            overlay(&map, &base, 0.5)?
        }
        MethodArg::Saliency => {
            let (h, w, _) = model.spec().input_shape;
            let input = Tensor::new(&[h, w, 3], load_pixels(image, (h, w))?)?;
            saliency(&model, &input, TargetClass::Fake)?.to_image()?
        }
    };
    rendered.write(out)?;
    println!(
        "{}x{} map: {}",
        rendered.width,
        rendered.height,
        out.display()
    );
    Ok(())
}

fn quantize_cmd(model_path: &Path, out: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    save_model_quantized(&model, aspf::quant::QuantScheme::PerTensorSymmetric, out)?;
    let report = size_report(model_path, out)?;
    println!("{report}");
    Ok(())
}

fn inspect_cmd(path: &Path) -> Result<()> {
    let header = read_header(path)?;
    let total = fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
    let spec = &header.spec;
    let (h, w, c) = spec.input_shape;
    let head: Vec<String> = spec.head.iter().map(|l| l.units.to_string()).collect();
    let norm = match spec.norm_kind {
        NormKind::Batch => "batch".to_string(),
        NormKind::Group { groups } => format!("group({groups})"),
    };

    println!("archive:    {} ({total} bytes)", path.display());
    println!("version:    {ARCHIVE_VERSION}");
    println!("input:      {h}x{w}x{c}");
    println!(
        "backbone:   {} blocks (alpha {}, {norm} norm)",
        spec.backbone.len(),
        spec.alpha
    );
    println!("head:       {}", head.join("/"));
    println!("parameters: {}", header.parameter_count());
    println!("quantized:  {}", header.is_quantized());
    println!("tensors:");
    for t in &header.tensors {
        let dtype = match t.dtype {
            Dtype::F32 => "f32",
            Dtype::I8 => "i8",
        };
        let scale = match t.scale {
            Some(s) => format!("  scale {s:.6}"),
            None => String::new(),
        };
        println!(
            "  {:<44} {dtype:<4} {:>10} bytes  {:?}{scale}",
            t.name, t.byte_len, t.shape
        );
    }
    Ok(())
}
