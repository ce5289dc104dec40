use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use mocogan::backend::AdamConfig;
use mocogan::data::{
    generate_shape_motion, load_dataset, load_frame_folder, save_clip_pngs, save_dataset, PackedDataset,
    ShapeMotionSpec, VideoClip,
};
use mocogan::eval::{
    acd_set, inception_score, mcs, train_action_classifier, ActionClassifier, ClassifierArch,
    ClassifierTrainConfig, FrameEmbedder, MetricReport,
};
use mocogan::latent::{sample_action, sample_content, sample_motion_noise, stream_id, ActionCode, SeededRng};
use mocogan::networks::{load_checkpoint, load_checkpoint_checked, save_checkpoint, NetworkBundle};
use mocogan::training::{train_loop, LOSS_CSV_HEADER};
use serde_json::json;

use crate::config::RunConfig;
use crate::{AcdArgs, ClassifierMetricArgs, DatasetGenArgs, EmbedderChoice, GenerateArgs, TrainArgs, TrainClassifierArgs};

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    mocogan::Error::Config(msg.into()).into()
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Appends `suffix` to the full file name (`a.smv` becomes `a.smv.summary.json`).
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// A packed dataset file or a folder of PNG frame folders.
fn load_clips(path: &Path) -> Result<PackedDataset> {
    let dataset = if path.is_dir() {
        load_frame_folder(path)
    } else {
        load_dataset(path)
    };
    dataset.with_context(|| format!("loading videos from {}", path.display()))
}

pub fn dataset_gen(args: &DatasetGenArgs) -> Result<()> {
    let spec = ShapeMotionSpec {
        count: args.count,
        size: args.size,
        length: args.length,
        seed: args.seed,
    };
    spec.validate()?;
    let dataset = generate_shape_motion(&spec)?;
    save_dataset(&args.output, &dataset).with_context(|| format!("writing {}", args.output.display()))?;
    let balance: serde_json::Map<String, serde_json::Value> = dataset
        .label_counts()
        .into_iter()
        .map(|(label, n)| {
            let key = label.map_or_else(|| "unlabeled".to_string(), |l| l.to_string());
            (key, json!(n))
        })
        .collect();
    let summary = json!({
        "count": dataset.len(),
        "size": spec.size,
        "length": spec.length,
        "seed": spec.seed,
        "class_balance": balance,
        "conventions": spec.conventions(),
    });
    write_json(&sibling(&args.output, ".summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn resolve_run_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    for assignment in &args.overrides {
        cfg.apply_override(assignment)?;
    }
    if let Some(p) = &args.dataset {
        cfg.dataset_path = p.clone();
    }
    if let Some(p) = &args.out_dir {
        cfg.out_dir = p.clone();
    }
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn checkpoint_path(out_dir: &Path, iteration: u64) -> PathBuf {
    out_dir.join(format!("ckpt_{iteration}.mcgn"))
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = resolve_run_config(args)?;
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    fs::write(cfg.out_dir.join("config.resolved"), cfg.to_text())?;

    let dataset = load_clips(&cfg.dataset_path)?;
    if let Some(i) = dataset
        .clips
        .iter()
        .position(|c| c.height() != cfg.image_size || c.width() != cfg.image_size)
    {
        let c = &dataset.clips[i];
        bail!(config_error(format!(
            "clip {i} is {}x{}, but image_size is {}",
            c.width(),
            c.height(),
            cfg.image_size
        )));
    }

    let arch = cfg.arch();
    let latent = cfg.latent();
    let train_cfg = cfg.train();
    let csv_path = cfg.out_dir.join("loss.csv");
    let mut bundle = match &args.resume {
        Some(path) => {
            let bundle = load_checkpoint_checked(path, &arch, &latent)
                .with_context(|| format!("resuming from {}", path.display()))?;
            info!("resumed at iteration {}", bundle.iteration);
            bundle
        }
        None => {
            let bundle = NetworkBundle::new(arch, latent, train_cfg.adam, cfg.seed)?;
            save_checkpoint(&bundle, checkpoint_path(&cfg.out_dir, 0))?;
            File::create(&csv_path)?;
            bundle
        }
    };

    let fresh_csv = fs::metadata(&csv_path).map(|m| m.len() == 0).unwrap_or(true);
    let mut csv = BufWriter::new(OpenOptions::new().create(true).append(true).open(&csv_path)?);
    if fresh_csv {
        writeln!(csv, "{LOSS_CSV_HEADER}")?;
    }
    let target = bundle.iteration + cfg.iterations;
    let mut last_saved = if args.resume.is_some() { bundle.iteration } else { 0 };
    let out_dir = cfg.out_dir.clone();
    train_loop(&mut bundle, &dataset.clips, &train_cfg, |b, report| {
        writeln!(csv, "{}", report.csv_row())?;
        if b.iteration % cfg.log_every == 0 {
            info!(
                "iter {} d_image {:.4} d_video {:.4} g {:.4} info {:.4}",
                b.iteration, report.d_image, report.d_video, report.g, report.info
            );
        }
        if b.iteration % cfg.checkpoint_every == 0 || b.iteration == target {
            csv.flush()?;
            save_checkpoint(b, checkpoint_path(&out_dir, b.iteration))?;
            last_saved = b.iteration;
        }
        Ok(())
    })?;
    csv.flush()?;
    if last_saved != bundle.iteration {
        save_checkpoint(&bundle, checkpoint_path(&cfg.out_dir, bundle.iteration))?;
    }
    info!("finished at iteration {}", bundle.iteration);
    Ok(())
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    if args.k == 0 || args.count == 0 {
        bail!(config_error("--k and --count must be at least 1"));
    }
    let mut bundle =
        load_checkpoint(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let latent = bundle.latent;
    let fixed_action = match args.action {
        Some(_) if latent.d_a == 0 => bail!(config_error("--action given but the checkpoint has d_a = 0")),
        Some(a) => Some(ActionCode::new(a, latent.d_a).map_err(anyhow::Error::from)?),
        None => None,
    };
    fs::create_dir_all(&args.output)?;
    let mut entries = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let content_index = if args.fix_content { 0 } else { i as u64 };
        let motion_index = if args.fix_motion { 0 } else { i as u64 };
        let content = sample_content(
            &latent,
            &mut SeededRng::for_purpose(args.seed, "generate.content", content_index),
        );
        let noise = sample_motion_noise(
            &latent,
            args.k,
            &mut SeededRng::for_purpose(args.seed, "generate.motion", motion_index),
        );
        let action = match &fixed_action {
            Some(a) => Some(a.clone()),
            None if latent.d_a > 0 => Some(sample_action(
                &latent,
                &mut SeededRng::for_purpose(args.seed, "generate.action", i as u64),
            )?),
            None => None,
        };
        let clip = bundle.generate_from_codes(&content, &noise, action.as_ref())?;
        let folder = format!("video_{i:04}");
        save_clip_pngs(&clip, args.output.join(&folder))?;
        entries.push(json!({
            "folder": folder,
            "frames": args.k,
            "content_stream": stream_id("generate.content", content_index),
            "motion_stream": stream_id("generate.motion", motion_index),
            "action": action.as_ref().map(ActionCode::class),
        }));
    }
    let index = json!({
        "checkpoint_iteration": bundle.iteration,
        "seed": args.seed,
        "k": args.k,
        "count": args.count,
        "fix_content": args.fix_content,
        "fix_motion": args.fix_motion,
        "videos": entries,
    });
    write_json(&args.output.join("index.json"), &index)?;
    info!("wrote {} videos to {}", args.count, args.output.display());
    Ok(())
}

fn report_path(input: &Path, metric: &str, explicit: &Option<PathBuf>) -> PathBuf {
    match explicit {
        Some(p) => p.clone(),
        None if input.is_dir() => input.join(format!("{metric}.json")),
        None => sibling(input, &format!(".{metric}.json")),
    }
}

fn emit_report(report: &MetricReport, path: &Path) -> Result<()> {
    let value = serde_json::to_value(report)?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    write_json(path, &value)
}

fn load_classifier(path: &Path) -> Result<ActionClassifier> {
    ActionClassifier::load(path).with_context(|| format!("loading classifier {}", path.display()))
}

fn check_classifier_fits(classifier: &ActionClassifier, clips: &[VideoClip]) -> Result<()> {
    let arch = classifier.arch();
    for (i, c) in clips.iter().enumerate() {
        if c.height() != arch.image_size || c.width() != arch.image_size || c.len() < arch.t {
            bail!(config_error(format!(
                "video {i} ({} frames of {}x{}) does not fit the classifier ({} frames of {}x{})",
                c.len(),
                c.width(),
                c.height(),
                arch.t,
                arch.image_size,
                arch.image_size
            )));
        }
    }
    Ok(())
}

pub fn eval_acd(args: &AcdArgs) -> Result<()> {
    let dataset = load_clips(&args.input)?;
    let mut classifier = match (args.embedder, &args.classifier) {
        (EmbedderChoice::AverageColor, None) => None,
        (EmbedderChoice::Classifier, Some(path)) => Some(load_classifier(path)?),
        (EmbedderChoice::AverageColor, Some(_)) => {
            bail!(config_error("--classifier only applies to --embedder classifier"))
        }
        (EmbedderChoice::Classifier, None) => bail!(config_error("--embedder classifier needs --classifier")),
    };
    let classifier_arch = classifier.as_ref().map(ActionClassifier::arch);
    if let Some(c) = &classifier {
        // Frame embeddings repeat each frame, so only the spatial size must match.
        let arch = c.arch();
        if let Some(i) = dataset.clips.iter().position(|v| v.height() != arch.image_size || v.width() != arch.image_size) {
            bail!(config_error(format!("video {i} frame size differs from the classifier's {}", arch.image_size)));
        }
    }
    let mut embedder = match classifier.as_mut() {
        Some(c) => FrameEmbedder::ClassifierFeature(c),
        None => FrameEmbedder::AverageColor,
    };
    let value = acd_set(&dataset.clips, &mut embedder)?;
    let config = json!({
        "metric": "acd",
        "pairs": "unordered",
        "embedder": embedder.name(),
        "classifier": classifier_arch,
        "videos": dataset.len(),
    });
    let report = MetricReport::new("acd", value, dataset.len(), embedder.name(), &config)?;
    emit_report(&report, &report_path(&args.input, "acd", &args.output))
}

pub fn eval_classifier_metric(metric: &str, args: &ClassifierMetricArgs) -> Result<()> {
    let dataset = load_clips(&args.input)?;
    let mut classifier = load_classifier(&args.classifier)?;
    check_classifier_fits(&classifier, &dataset.clips)?;
    let value = match metric {
        "mcs" => mcs(&dataset.clips, &mut classifier)?,
        _ => inception_score(&dataset.clips, &mut classifier)?,
    };
    let config = json!({
        "metric": metric,
        "classifier": classifier.arch(),
        "videos": dataset.len(),
    });
    let report = MetricReport::new(metric, value, dataset.len(), "classifier", &config)?;
    emit_report(&report, &report_path(&args.input, metric, &args.output))
}

pub fn train_classifier(args: &TrainClassifierArgs) -> Result<()> {
    let dataset = load_clips(&args.input)?;
    let first = dataset.clips.first().ok_or_else(|| config_error("no videos to train on"))?;
    let cfg = ClassifierTrainConfig {
        arch: ClassifierArch {
            classes: args.classes,
            t: args.t,
            image_size: first.height(),
            base_channels: args.base_channels,
        },
        iterations: args.iterations,
        batch_size: args.batch_size,
        adam: AdamConfig {
            lr: args.lr,
            ..AdamConfig::default()
        },
        holdout_fraction: args.holdout,
        seed: args.seed,
    };
    let (classifier, report) = train_action_classifier(&dataset.clips, &cfg)?;
    classifier
        .save(&args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    let value = json!({ "config": cfg, "report": report });
    println!("{}", serde_json::to_string_pretty(&value)?);
    write_json(&sibling(&args.output, ".report.json"), &value)
}
