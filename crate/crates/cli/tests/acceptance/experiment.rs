//! The desk-scale shape-motion run shared by the training and categorical
//! criteria: one dataset, one 3000-iteration training run, then metrics.

use std::path::Path;

use anyhow::{Context, Result};
use mocogan::data::{load_frame_folder, VideoClip};
use mocogan::eval::{acd_set, first_frame_spread, mcs, ActionClassifier, FrameEmbedder};

use crate::cli;

pub const ITERATIONS: u64 = 3000;
pub const EVAL_CLIPS: usize = 256;

const RUN_CONFIG: &str = "\
# 32x32 shape-motion, two motion classes; Q learns from labeled real clips
image_size = 32
base_channels = 8
T = 16
d_a = 2
lambda_info = 1
supervised_q = true
q_on_fakes = false
lr = 0.001
batch_size = 32
checkpoint_every = 1000
log_every = 250
seed = 0
dataset_path = shapes32.smv
out_dir = run
";

pub struct Outcome {
    pub acd_generated: f64,
    pub acd_shuffled: f64,
    pub spread_fixed_content: f64,
    pub spread_varying_content: f64,
    pub classifier_heldout_accuracy: f64,
    pub mcs: f64,
}

/// Clip `j` takes frame `k` from generated clip `(j + 17k) mod n`, so the 16
/// frames come from 16 different videos while keeping their time index.
pub fn shuffled_baseline(clips: &[VideoClip]) -> Result<Vec<VideoClip>> {
    let n = clips.len();
    let first = &clips[0];
    let (k, h, w) = (first.len(), first.height(), first.width());
    (0..n)
        .map(|j| {
            let mut bytes = Vec::with_capacity(k * h * w * 3);
            for f in 0..k {
                bytes.extend_from_slice(clips[(j + 17 * f) % n].frame(f));
            }
            Ok(VideoClip::new(k, h, w, bytes, None)?)
        })
        .collect()
}

fn json_field(path: &Path, pointer: &str) -> Result<f64> {
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    value
        .pointer(pointer)
        .and_then(serde_json::Value::as_f64)
        .with_context(|| format!("{} has no number at {pointer}", path.display()))
}

pub fn run(dir: &Path) -> Result<Outcome> {
    std::fs::write(dir.join("run.cfg"), RUN_CONFIG)?;
    cli::ok(&["dataset", "gen", "--count", "500", "--size", "32", "--length", "16", "--seed", "7", "-o", "shapes32.smv"], dir)?;
    let iterations = ITERATIONS.to_string();
    cli::ok(&["train", "--config", "run.cfg", "--iterations", &iterations], dir)?;
    let ckpt = format!("run/ckpt_{ITERATIONS}.mcgn");
    let count = EVAL_CLIPS.to_string();
    cli::ok(&["generate", "--checkpoint", &ckpt, "--k", "16", "--count", &count, "--seed", "1", "-o", "generated"], dir)?;
    cli::ok(&["generate", "--checkpoint", &ckpt, "--k", "16", "--count", "10", "--seed", "2", "--fix-content", "-o", "fixed"], dir)?;
    cli::ok(&["generate", "--checkpoint", &ckpt, "--k", "16", "--count", "10", "--seed", "2", "-o", "varying"], dir)?;
    cli::ok(
        &[
            "eval", "train-classifier", "shapes32.smv", "--classes", "2", "--t", "16", "--base-channels", "8",
            "--iterations", "400", "--batch-size", "32", "--lr", "0.001", "--holdout", "0.2", "--seed", "3",
            "-o", "classifier.mcgn",
        ],
        dir,
    )?;

    let generated = load_frame_folder(dir.join("generated"))?.clips;
    let shuffled = shuffled_baseline(&generated)?;
    let fixed = load_frame_folder(dir.join("fixed"))?.clips;
    let varying = load_frame_folder(dir.join("varying"))?.clips;
    let mut embed = FrameEmbedder::AverageColor;
    let mut classifier = ActionClassifier::load(dir.join("classifier.mcgn"))?;
    Ok(Outcome {
        acd_generated: acd_set(&generated, &mut embed)?,
        acd_shuffled: acd_set(&shuffled, &mut embed)?,
        spread_fixed_content: first_frame_spread(&fixed, &mut embed)?,
        spread_varying_content: first_frame_spread(&varying, &mut embed)?,
        classifier_heldout_accuracy: json_field(&dir.join("classifier.mcgn.report.json"), "/report/heldout_accuracy")?,
        mcs: mcs(&generated, &mut classifier)?,
    })
}
