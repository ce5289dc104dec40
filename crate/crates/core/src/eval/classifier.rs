use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{Adam, AdamConfig, GradFlags, LayerKind, Mode, Param, Sequential, Tensor};
use crate::data::VideoClip;
use crate::latent::SeededRng;
use crate::networks::{init_params, read_container, video_trunk, write_container, DvMode};
use crate::training::{info_cross_entropy_with_grad, minibatch_indices};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierArch {
    pub classes: usize,
    /// Clip length the classifier reads (frames `0..t` at prediction time).
    pub t: usize,
    pub image_size: usize,
    pub base_channels: usize,
}

/// Spatio-temporal CNN: the downsampling video-discriminator trunk followed
/// by a linear layer and a softmax over action classes.
pub struct ActionClassifier {
    arch: ClassifierArch,
    trunk: Sequential,
    head: Sequential,
}

const PREDICT_CHUNK: usize = 32;

impl ActionClassifier {
    /// Zero weights; see [`ActionClassifier::new`].
    pub fn zeros(arch: ClassifierArch) -> Result<Self> {
        if arch.classes < 2 {
            return Err(Error::Config(format!("classifier needs at least 2 classes, got {}", arch.classes)));
        }
        let trunk = video_trunk("cls.trunk", arch.base_channels, DvMode::Downsample)?;
        let [c, t, h, w] = crate::networks::trunk_output_dims(&trunk, arch.t, arch.image_size)?;
        let mut head = Sequential::new("cls.head");
        head.add(LayerKind::Linear {
            in_features: c * t * h * w,
            out_features: arch.classes,
        })?;
        head.add(LayerKind::Softmax)?;
        Ok(ActionClassifier { arch, trunk, head })
    }

    pub fn new(arch: ClassifierArch, seed: u64) -> Result<Self> {
        let mut c = Self::zeros(arch)?;
        init_params(c.params_mut(), &mut SeededRng::for_purpose(seed, "init.classifier", 0));
        Ok(c)
    }

    pub fn arch(&self) -> ClassifierArch {
        self.arch
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.trunk.params();
        p.extend(self.head.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.trunk.params_mut();
        p.extend(self.head.params_mut());
        p
    }

    fn check_clip(&self, clip: &VideoClip) -> Result<()> {
        let s = self.arch.image_size;
        if clip.height() != s || clip.width() != s {
            return Err(Error::Config(format!(
                "classifier expects {s}x{s} frames, got {}x{}",
                clip.height(),
                clip.width()
            )));
        }
        if clip.len() < self.arch.t {
            return Err(Error::Config(format!(
                "classifier reads {} frames, clip has {}",
                self.arch.t,
                clip.len()
            )));
        }
        Ok(())
    }

    /// `[N, 3, T, S, S]` volume from `(clip, start)` windows.
    fn volume(&self, windows: &[(&VideoClip, usize)]) -> Result<Tensor<f32>> {
        let (t, s) = (self.arch.t, self.arch.image_size);
        let per = t * 3 * s * s;
        let mut data = vec![0f32; windows.len() * per];
        for (i, (clip, start)) in windows.iter().enumerate() {
            self.check_clip(clip)?;
            clip.write_normalized(*start, t, &mut data[i * per..(i + 1) * per]);
        }
        let n = windows.len();
        Tensor::from_vec(&[n, 3, t, s, s], crate::networks::swap_axes(&data, n, t, 3, s * s))
    }

    /// Class posteriors from the window starting at frame 0.
    pub fn predict_proba(&mut self, clips: &[VideoClip]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(clips.len());
        for chunk in clips.chunks(PREDICT_CHUNK) {
            let windows: Vec<_> = chunk.iter().map(|c| (c, 0)).collect();
            let x = self.volume(&windows)?;
            let features = self.trunk.forward(&x, Mode::Eval)?;
            let probs = self.head.forward(&features, Mode::Eval)?;
            out.extend(
                probs
                    .data()
                    .chunks(self.arch.classes)
                    .map(|row| row.iter().map(|&v| v as f64).collect::<Vec<_>>()),
            );
        }
        Ok(out)
    }

    pub fn predict(&mut self, clips: &[VideoClip]) -> Result<Vec<usize>> {
        Ok(self.predict_proba(clips)?.iter().map(|p| argmax(p)).collect())
    }

    /// Flattened trunk activations of frame `k` repeated over the clip length.
    pub fn embed_frame(&mut self, clip: &VideoClip, k: usize) -> Result<Vec<f64>> {
        let frame = clip.slice(k, 1)?;
        let repeated = VideoClip::new(
            self.arch.t,
            frame.height(),
            frame.width(),
            frame.bytes().repeat(self.arch.t),
            None,
        )?;
        let x = self.volume(&[(&repeated, 0)])?;
        let features = self.trunk.forward(&x, Mode::Eval)?;
        Ok(features.data().iter().map(|&v| v as f64).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::json!({ "kind": "classifier", "arch": self.arch });
        let mut tensors: Vec<(String, &Tensor<f32>)> = self.params().into_iter().map(|p| (p.name.clone(), &p.value)).collect();
        tensors.extend(self.trunk.buffers().into_iter().map(|b| (b.name.clone(), &b.value)));
        write_container(&mut BufWriter::new(File::create(path)?), &meta, &tensors)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (meta, tensors) = read_container(&mut BufReader::new(File::open(path)?))?;
        if meta.get("kind").and_then(|k| k.as_str()) != Some("classifier") {
            return Err(Error::Format("file does not hold an action classifier".into()));
        }
        let arch: ClassifierArch = serde_json::from_value(meta["arch"].clone())?;
        let mut c = Self::zeros(arch)?;
        let mut table: std::collections::BTreeMap<String, Tensor<f32>> = tensors.into_iter().collect();
        let mut fill = |name: &str, slot: &mut Tensor<f32>| -> Result<()> {
            let t = table
                .remove(name)
                .ok_or_else(|| Error::Format(format!("classifier file lacks `{name}`")))?;
            if t.shape() != slot.shape() {
                return Err(Error::Shape(format!("classifier tensor `{name}` has shape {:?}", t.shape())));
            }
            *slot = t;
            Ok(())
        };
        for p in c.params_mut() {
            fill(&p.name, &mut p.value)?;
        }
        for b in c.trunk.buffers_mut() {
            fill(&b.name, &mut b.value)?;
        }
        Ok(c)
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainConfig {
    pub arch: ClassifierArch,
    pub iterations: u64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Share of the clips held out for the accuracy report.
    pub holdout_fraction: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub train_clips: usize,
    pub heldout_clips: usize,
    pub train_accuracy: f64,
    /// `NaN` when nothing was held out.
    pub heldout_accuracy: f64,
}

fn accuracy(classifier: &mut ActionClassifier, clips: &[VideoClip]) -> Result<f64> {
    if clips.is_empty() {
        return Ok(f64::NAN);
    }
    let predicted = classifier.predict(clips)?;
    let hits = predicted.iter().zip(clips).filter(|(p, c)| c.label == Some(**p)).count();
    Ok(hits as f64 / clips.len() as f64)
}

/// Supervised cross-entropy training on random `T`-frame windows of labeled
/// clips; a seeded split holds out `holdout_fraction` of them.
pub fn train_action_classifier(
    clips: &[VideoClip],
    cfg: &ClassifierTrainConfig,
) -> Result<(ActionClassifier, ClassifierReport)> {
    let classes = cfg.arch.classes;
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(Error::Config("holdout_fraction must be in [0, 1)".into()));
    }
    for (i, c) in clips.iter().enumerate() {
        match c.label {
            Some(l) if l < classes => {}
            other => {
                return Err(Error::Config(format!(
                    "clip {i} has label {other:?}, expected a class below {classes}"
                )))
            }
        }
    }
    let mut order: Vec<usize> = (0..clips.len()).collect();
    let mut rng = SeededRng::for_purpose(cfg.seed, "classifier_split", 0);
    for i in (1..order.len()).rev() {
        order.swap(i, rng.below(i + 1));
    }
    let holdout = (clips.len() as f64 * cfg.holdout_fraction).round() as usize;
    let (held, train): (Vec<usize>, Vec<usize>) = (order[..holdout].to_vec(), order[holdout..].to_vec());
    let train: Vec<VideoClip> = train.iter().map(|&i| clips[i].clone()).collect();
    let held: Vec<VideoClip> = held.iter().map(|&i| clips[i].clone()).collect();
    for class in 0..classes {
        if !train.iter().any(|c| c.label == Some(class)) {
            return Err(Error::Config(format!("class {class} is absent from the training clips")));
        }
    }

    let mut model = ActionClassifier::new(cfg.arch, cfg.seed)?;
    for c in &train {
        model.check_clip(c)?;
    }
    let mut adam = Adam::new(cfg.adam);
    for it in 0..cfg.iterations {
        let mut rng = SeededRng::for_purpose(cfg.seed, "classifier_step", it);
        let batch = minibatch_indices(train.len(), cfg.batch_size, cfg.seed, it);
        let windows: Vec<(&VideoClip, usize)> = batch
            .iter()
            .map(|&i| {
                let c = &train[i];
                (c, rng.below(c.len() - cfg.arch.t + 1))
            })
            .collect();
        let labels: Vec<usize> = windows.iter().map(|(c, _)| c.label.expect("checked")).collect();
        let x = model.volume(&windows)?;
        for p in model.params_mut() {
            p.zero_grad();
        }
        let features = model.trunk.forward(&x, Mode::Train)?;
        let q = model.head.forward(&features, Mode::Train)?;
        let (loss, grad) = info_cross_entropy_with_grad(&q, &labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("classifier loss at iteration {it}")));
        }
        let d_features = model
            .head
            .backward_through(1, &grad, GradFlags::ALL)?
            .ok_or_else(|| Error::Shape("classifier head returned no gradient".into()))?;
        model.trunk.backward(&d_features, GradFlags::PARAMS_ONLY)?;
        adam.step(model.params_mut())?;
    }
    let report = ClassifierReport {
        train_clips: train.len(),
        heldout_clips: held.len(),
        train_accuracy: accuracy(&mut model, &train)?,
        heldout_accuracy: accuracy(&mut model, &held)?,
    };
    Ok((model, report))
}
