use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checkpoint::{read_container, write_container};
use super::{init_params, ArchConfig, ImageDiscriminator, ImageGenerator, VideoDiscriminator};
use crate::backend::{Adam, AdamConfig, AdamState, Buffer, Mode, Param, Tensor};
use crate::data::VideoClip;
use crate::latent::{
    assemble_latents, one_hot, sample_action, sample_content, sample_motion_noise, ActionCode, ContentCode,
    LatentConfig, MotionNoise, MotionRnn, SeededRng,
};
use crate::{Error, Result};

/// Everything needed to resume training or generate: the four networks,
/// Adam state keyed by parameter name, and the iteration counter.
pub struct NetworkBundle {
    pub arch: ArchConfig,
    pub latent: LatentConfig,
    pub generator: ImageGenerator,
    pub motion: MotionRnn,
    pub image_disc: ImageDiscriminator,
    pub video_disc: VideoDiscriminator,
    pub optimizer: Adam<f32>,
    pub iteration: u64,
}

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    kind: String,
    arch: ArchConfig,
    latent: LatentConfig,
    iteration: u64,
    adam: AdamConfig,
    adam_steps: BTreeMap<String, u64>,
}

fn check_consistent(arch: &ArchConfig, latent: &LatentConfig) -> Result<()> {
    arch.validate()?;
    latent.validate()?;
    if arch.latent_dim != latent.image_latent_dim() {
        return Err(Error::Config(format!(
            "generator latent dim {} differs from d_C + d_M = {}",
            arch.latent_dim,
            latent.image_latent_dim()
        )));
    }
    if arch.d_a != latent.d_a {
        return Err(Error::Config(format!(
            "Q head has {} classes but d_A is {}",
            arch.d_a, latent.d_a
        )));
    }
    Ok(())
}

impl NetworkBundle {
    /// Untrained bundle with zero weights and unit BN scales.
    pub fn zeros(arch: ArchConfig, latent: LatentConfig, adam: AdamConfig) -> Result<Self> {
        check_consistent(&arch, &latent)?;
        Ok(NetworkBundle {
            generator: ImageGenerator::new(&arch)?,
            motion: MotionRnn::zeros(&latent),
            image_disc: ImageDiscriminator::new(&arch)?,
            video_disc: VideoDiscriminator::new(&arch)?,
            optimizer: Adam::new(adam),
            iteration: 0,
            arch,
            latent,
        })
    }

    /// Randomly initialized bundle; a pure function of the arguments.
    pub fn new(arch: ArchConfig, latent: LatentConfig, adam: AdamConfig, seed: u64) -> Result<Self> {
        let mut b = Self::zeros(arch, latent, adam)?;
        init_params(b.generator.params_mut(), &mut SeededRng::for_purpose(seed, "init.g", 0));
        b.motion = MotionRnn::new(&latent, &mut SeededRng::for_purpose(seed, "init.rnn", 0));
        init_params(b.image_disc.params_mut(), &mut SeededRng::for_purpose(seed, "init.di", 0));
        init_params(b.video_disc.params_mut(), &mut SeededRng::for_purpose(seed, "init.dv", 0));
        Ok(b)
    }

    /// Parameters of G_I and R_M.
    pub fn generator_params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.generator.params_mut();
        p.extend(self.motion.params_mut());
        p
    }

    /// Parameters of D_I, D_V and the Q head.
    pub fn discriminator_params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.image_disc.params_mut();
        p.extend(self.video_disc.params_mut());
        p
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.generator.params();
        p.extend(self.motion.params());
        p.extend(self.image_disc.params());
        p.extend(self.video_disc.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.generator.params_mut();
        p.extend(self.motion.params_mut());
        p.extend(self.image_disc.params_mut());
        p.extend(self.video_disc.params_mut());
        p
    }

    pub fn buffers(&self) -> Vec<&Buffer> {
        let mut b = self.generator.buffers();
        b.extend(self.image_disc.buffers());
        b.extend(self.video_disc.buffers());
        b
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        let mut b = self.generator.buffers_mut();
        b.extend(self.image_disc.buffers_mut());
        b.extend(self.video_disc.buffers_mut());
        b
    }

    /// Generates one clip per video with eval-mode batch norm. `content` is
    /// `[N, d_C]`, `noise` holds `K` tensors `[N, d_E]`, `actions` one class
    /// per video when `d_A > 0`.
    pub fn generate_batch(
        &mut self,
        content: &Tensor<f32>,
        noise: &[Tensor<f32>],
        actions: Option<&[usize]>,
    ) -> Result<Vec<VideoClip>> {
        let n = content.dim(0);
        let k = noise.len();
        let action = actions.map(|a| one_hot::<f32>(a, self.latent.d_a));
        let motion = self.motion.unroll(noise, action.as_ref(), false)?;
        let latents = assemble_latents(content, &motion)?;
        let images = self.generator.forward(&latents, Mode::Eval)?;
        let s = self.arch.image_size;
        let per_video = k * 3 * s * s;
        (0..n)
            .map(|v| {
                let label = actions.map(|a| a[v]);
                VideoClip::from_planar(k, s, s, &images.data()[v * per_video..(v + 1) * per_video], label)
            })
            .collect()
    }

    /// One clip from explicit codes.
    pub fn generate_from_codes(
        &mut self,
        content: &ContentCode,
        noise: &[MotionNoise],
        action: Option<&ActionCode>,
    ) -> Result<VideoClip> {
        if noise.is_empty() {
            return Err(Error::Shape("generation needs K >= 1".into()));
        }
        let content = Tensor::from_vec(&[1, content.values.len()], content.values.clone())?;
        let noise = noise
            .iter()
            .map(|e| Tensor::from_vec(&[1, e.values.len()], e.values.clone()))
            .collect::<Result<Vec<_>>>()?;
        let actions = action.map(|a| [a.class()]);
        let mut clips = self.generate_batch(&content, &noise, actions.as_ref().map(|a| &a[..]))?;
        Ok(clips.remove(0))
    }

    /// Samples `z_C` once, `K` motion noise vectors and (when `d_A > 0` and
    /// none is given) an action code, then renders `K` frames.
    pub fn generate_video(&mut self, k: usize, rng: &mut SeededRng, action: Option<ActionCode>) -> Result<VideoClip> {
        let content = sample_content(&self.latent, rng);
        let noise = sample_motion_noise(&self.latent, k, rng);
        let action = match action {
            Some(a) => Some(a),
            None if self.latent.d_a > 0 => Some(sample_action(&self.latent, rng)?),
            None => None,
        };
        self.generate_from_codes(&content, &noise, action.as_ref())
    }

    /// `count` clips of `k` frames; clip `i` uses the stream `("generate", i)`.
    pub fn generate_videos(&mut self, count: usize, k: usize, seed: u64) -> Result<Vec<VideoClip>> {
        (0..count)
            .map(|i| self.generate_video(k, &mut SeededRng::for_purpose(seed, "generate", i as u64), None))
            .collect()
    }

    fn meta(&self) -> BundleMeta {
        BundleMeta {
            kind: "bundle".into(),
            arch: self.arch,
            latent: self.latent,
            iteration: self.iteration,
            adam: self.optimizer.config,
            adam_steps: self.optimizer.states.iter().map(|(k, s)| (k.clone(), s.step)).collect(),
        }
    }
}

pub fn save_checkpoint(bundle: &NetworkBundle, path: impl AsRef<Path>) -> Result<()> {
    let meta = serde_json::to_value(bundle.meta())?;
    let mut tensors: Vec<(String, &Tensor<f32>)> = Vec::new();
    for p in bundle.params() {
        tensors.push((p.name.clone(), &p.value));
    }
    for b in bundle.buffers() {
        tensors.push((b.name.clone(), &b.value));
    }
    for (name, state) in &bundle.optimizer.states {
        tensors.push((format!("{name}#adam_m"), &state.m));
        tensors.push((format!("{name}#adam_v"), &state.v));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_container(&mut w, &meta, &tensors)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NetworkBundle> {
    let (meta, tensors) = read_container(&mut BufReader::new(File::open(path)?))?;
    bundle_from_parts(meta, tensors)
}

/// Like [`load_checkpoint`] but fails with [`Error::ConfigMismatch`] naming
/// the first field that differs from the expected configuration.
pub fn load_checkpoint_checked(
    path: impl AsRef<Path>,
    arch: &ArchConfig,
    latent: &LatentConfig,
) -> Result<NetworkBundle> {
    let (meta, tensors) = read_container(&mut BufReader::new(File::open(path)?))?;
    for (section, expected) in [
        ("latent", serde_json::to_value(latent)?),
        ("arch", serde_json::to_value(arch)?),
    ] {
        let found = meta.get(section).cloned().unwrap_or_default();
        if let Some(fields) = expected.as_object() {
            for (field, want) in fields {
                let got = found.get(field).cloned().unwrap_or_default();
                if &got != want {
                    return Err(Error::ConfigMismatch {
                        field: field.clone(),
                        found: got.to_string(),
                        expected: want.to_string(),
                    });
                }
            }
        }
    }
    bundle_from_parts(meta, tensors)
}

fn bundle_from_parts(meta: serde_json::Value, tensors: Vec<(String, Tensor<f32>)>) -> Result<NetworkBundle> {
    let meta: BundleMeta = serde_json::from_value(meta)?;
    if meta.kind != "bundle" {
        return Err(Error::Format(format!("checkpoint holds a {:?}, not a bundle", meta.kind)));
    }
    let mut bundle = NetworkBundle::zeros(meta.arch, meta.latent, meta.adam)?;
    bundle.iteration = meta.iteration;
    let mut table: BTreeMap<String, Tensor<f32>> = tensors.into_iter().collect();
    let mut take = |name: &str, shape: &[usize]| -> Result<Tensor<f32>> {
        let t = table
            .remove(name)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor `{name}`")))?;
        if t.shape() != shape {
            return Err(Error::Shape(format!(
                "checkpoint tensor `{name}` has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        Ok(t)
    };
    for p in bundle.params_mut() {
        p.value = take(&p.name, &p.value.shape().to_vec())?;
    }
    for b in bundle.buffers_mut() {
        b.value = take(&b.name, &b.value.shape().to_vec())?;
    }
    let shapes: BTreeMap<String, Vec<usize>> = bundle
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.value.shape().to_vec()))
        .collect();
    for (name, step) in meta.adam_steps {
        let shape = shapes
            .get(&name)
            .ok_or_else(|| Error::Format(format!("Adam state for unknown parameter `{name}`")))?;
        let mut state = AdamState::new(shape, meta.adam);
        state.step = step;
        state.m = take(&format!("{name}#adam_m"), shape)?;
        state.v = take(&format!("{name}#adam_v"), shape)?;
        bundle.optimizer.states.insert(name, state);
    }
    if let Some(extra) = table.keys().next() {
        return Err(Error::Format(format!("checkpoint has unexpected tensor `{extra}`")));
    }
    Ok(bundle)
}
