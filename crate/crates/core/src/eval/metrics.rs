use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ActionClassifier;
use crate::data::VideoClip;
use crate::{Error, Result};

/// Per-frame mean RGB in `[0, 255]` units, from `H x W x 3` bytes.
pub fn average_color(frame: &[u8]) -> [f64; 3] {
    let mut sum = [0u64; 3];
    for px in frame.chunks_exact(3) {
        for c in 0..3 {
            sum[c] += px[c] as u64;
        }
    }
    let n = (frame.len() / 3).max(1) as f64;
    sum.map(|s| s as f64 / n)
}

/// How frames are mapped to vectors for ACD.
pub enum FrameEmbedder<'a> {
    AverageColor,
    /// Penultimate (pooled trunk) activations of a trained classifier, with
    /// the frame repeated to fill the classifier's clip length.
    ClassifierFeature(&'a mut ActionClassifier),
}

impl FrameEmbedder<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            FrameEmbedder::AverageColor => "average_color",
            FrameEmbedder::ClassifierFeature(_) => "classifier_feature",
        }
    }

    pub fn embed_clip(&mut self, clip: &VideoClip) -> Result<Vec<Vec<f64>>> {
        match self {
            FrameEmbedder::AverageColor => Ok((0..clip.len()).map(|k| average_color(clip.frame(k)).to_vec()).collect()),
            FrameEmbedder::ClassifierFeature(c) => (0..clip.len()).map(|k| c.embed_frame(clip, k)).collect(),
        }
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean L2 distance over unordered pairs `i < j` of per-frame embeddings.
pub fn acd_from_embeddings(embeddings: &[Vec<f64>]) -> Result<f64> {
    let k = embeddings.len();
    if k < 2 {
        return Err(Error::Shape(format!("ACD needs at least 2 frames, got {k}")));
    }
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            total += l2(&embeddings[i], &embeddings[j]);
        }
    }
    Ok(total / (k * (k - 1) / 2) as f64)
}

pub fn acd_single(clip: &VideoClip, embedder: &mut FrameEmbedder) -> Result<f64> {
    acd_from_embeddings(&embedder.embed_clip(clip)?)
}

/// Mean of [`acd_single`] over the set.
pub fn acd_set(clips: &[VideoClip], embedder: &mut FrameEmbedder) -> Result<f64> {
    if clips.is_empty() {
        return Err(Error::Shape("ACD of an empty clip set".into()));
    }
    let mut total = 0.0;
    for c in clips {
        total += acd_single(c, embedder)?;
    }
    Ok(total / clips.len() as f64)
}

/// Mean pairwise distance between the first-frame embeddings of `clips`.
pub fn first_frame_spread(clips: &[VideoClip], embedder: &mut FrameEmbedder) -> Result<f64> {
    let firsts = clips
        .iter()
        .map(|c| Ok(embedder.embed_clip(&c.slice(0, 1)?)?.remove(0)))
        .collect::<Result<Vec<_>>>()?;
    acd_from_embeddings(&firsts)
}

/// Fraction of clips whose predicted class equals their intended label.
pub fn mcs(clips: &[VideoClip], classifier: &mut ActionClassifier) -> Result<f64> {
    if clips.is_empty() {
        return Err(Error::Shape("MCS of an empty clip set".into()));
    }
    let d_a = classifier.classes();
    let labels = clips
        .iter()
        .enumerate()
        .map(|(i, c)| match c.label {
            Some(l) if l < d_a => Ok(l),
            Some(l) => Err(Error::Config(format!(
                "clip {i} has label {l} but the classifier has {d_a} classes"
            ))),
            None => Err(Error::Config(format!("clip {i} has no intended label"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let predicted = classifier.predict(clips)?;
    let hits = predicted.iter().zip(&labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / clips.len() as f64)
}

/// `exp(mean_i KL(p(y|x_i) || p(y)))` with probabilities clamped at 1e-12.
pub fn inception_score_from_probs(probs: &[Vec<f64>]) -> Result<f64> {
    if probs.len() < 2 {
        return Err(Error::Shape("inception score needs at least 2 clips".into()));
    }
    let c = probs[0].len();
    if c == 0 || probs.iter().any(|p| p.len() != c) {
        return Err(Error::Shape("class posteriors have inconsistent widths".into()));
    }
    let mut marginal = vec![0.0; c];
    for p in probs {
        for (m, v) in marginal.iter_mut().zip(p) {
            *m += v / probs.len() as f64;
        }
    }
    let mut kl_total = 0.0;
    for p in probs {
        for (v, m) in p.iter().zip(&marginal) {
            let v = v.max(1e-12);
            kl_total += v * (v.ln() - m.max(1e-12).ln());
        }
    }
    Ok((kl_total / probs.len() as f64).exp())
}

pub fn inception_score(clips: &[VideoClip], classifier: &mut ActionClassifier) -> Result<f64> {
    inception_score_from_probs(&classifier.predict_proba(clips)?)
}

/// One evaluation result, serialized as a flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub embedder: String,
    pub config_hash: String,
}

impl MetricReport {
    pub fn new(metric: &str, value: f64, n: usize, embedder: &str, config: &serde_json::Value) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("{metric} value")));
        }
        Ok(MetricReport {
            metric: metric.into(),
            value,
            n,
            embedder: embedder.into(),
            config_hash: config_hash(config),
        })
    }
}

/// Hex SHA-256 of the compact JSON serialization.
pub fn config_hash(config: &serde_json::Value) -> String {
    let digest = Sha256::digest(config.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
