use super::losses::{bce_with_grad, generator_term_with_grad, info_cross_entropy_with_grad, Target};
use super::{LossReport, TrainConfig};
use crate::backend::{GradFlags, Mode, Tensor};
use crate::data::VideoClip;
use crate::latent::{assemble_latents, split_motion_grads, LatentBatch, SeededRng};
use crate::networks::NetworkBundle;
use crate::{Error, Result};

/// Dataset indices for minibatch `iteration`: consecutive slices of a
/// per-epoch random permutation, so any iteration can be recomputed on resume.
pub fn minibatch_indices(dataset_len: usize, batch: usize, seed: u64, iteration: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(batch);
    let mut perm: Option<(u64, Vec<usize>)> = None;
    for j in 0..batch as u64 {
        let pos = iteration * batch as u64 + j;
        let epoch = pos / dataset_len as u64;
        let offset = (pos % dataset_len as u64) as usize;
        if perm.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut p: Vec<usize> = (0..dataset_len).collect();
            let mut rng = SeededRng::for_purpose(seed, "epoch", epoch);
            for i in (1..dataset_len).rev() {
                p.swap(i, rng.below(i + 1));
            }
            perm = Some((epoch, p));
        }
        out.push(perm.as_ref().expect("permutation").1[offset]);
    }
    out
}

/// `[N, 3, S, S]` built from frame `frames[i]` of clip `i` of a `[N, K, 3, S, S]` stack.
fn pick_frames(stack: &Tensor<f32>, frames: &[usize]) -> Result<Tensor<f32>> {
    let (n, k) = (stack.dim(0), stack.dim(1));
    let frame_len: usize = stack.shape()[2..].iter().product();
    let mut out = Vec::with_capacity(n * frame_len);
    for (i, &f) in frames.iter().enumerate() {
        out.extend_from_slice(&stack.data()[(i * k + f) * frame_len..][..frame_len]);
    }
    let mut shape = vec![n];
    shape.extend_from_slice(&stack.shape()[2..]);
    Tensor::from_vec(&shape, out)
}

/// Adds `grad` (`[N, 3, S, S]`) into frame `frames[i]` of clip `i` of `acc`.
fn scatter_frames(acc: &mut Tensor<f32>, grad: &Tensor<f32>, frames: &[usize]) {
    let k = acc.dim(1);
    let frame_len: usize = acc.shape()[2..].iter().product();
    for (i, &f) in frames.iter().enumerate() {
        let dst = &mut acc.data_mut()[(i * k + f) * frame_len..][..frame_len];
        for (d, g) in dst.iter_mut().zip(&grad.data()[i * frame_len..][..frame_len]) {
            *d += g;
        }
    }
}

/// Runs R_M and G_I for a latent batch; returns `[N, T, 3, S, S]` frames.
fn generate_clips(
    bundle: &mut NetworkBundle,
    latents: &LatentBatch,
    mode: Mode,
    keep_cache: bool,
) -> Result<Tensor<f32>> {
    let action = latents.action_one_hot(bundle.latent.d_a);
    let motion = bundle.motion.unroll(&latents.noise, action.as_ref(), keep_cache)?;
    let z = assemble_latents(&latents.content, &motion)?;
    let frames = bundle.generator.forward(&z, mode)?;
    let n = latents.content.dim(0);
    let k = latents.noise.len();
    let mut shape = vec![n, k];
    shape.extend_from_slice(&frames.shape()[1..]);
    frames.reshape(&shape)
}

fn zero_grads(bundle: &mut NetworkBundle) {
    for p in bundle.params_mut() {
        p.zero_grad();
    }
}

/// One discriminator update followed by one generator update.
///
/// `real` is the minibatch of dataset clips, each at least `cfg.t` frames.
pub fn train_step(
    bundle: &mut NetworkBundle,
    real: &[&VideoClip],
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<LossReport> {
    cfg.validate()?;
    if cfg.t != bundle.arch.t {
        return Err(Error::Config(format!(
            "training T={} differs from the video discriminator's T={}",
            cfg.t, bundle.arch.t
        )));
    }
    let n = real.len();
    if n == 0 {
        return Err(Error::Config("empty minibatch".into()));
    }
    let t = cfg.t;
    let s = bundle.arch.image_size;
    let d_a = bundle.latent.d_a;
    let lambda = cfg.lambda_info;
    let iteration = bundle.iteration;
    bundle.optimizer.config = cfg.adam;

    // Real samples: one T-window and one frame from each minibatch video.
    let frame_len = 3 * s * s;
    let mut real_clips = vec![0f32; n * t * frame_len];
    let mut real_images = vec![0f32; n * frame_len];
    for (i, clip) in real.iter().enumerate() {
        if clip.height() != s || clip.width() != s {
            return Err(Error::Shape(format!(
                "dataset clip is {}x{}, model expects {s}x{s}",
                clip.height(),
                clip.width()
            )));
        }
        let start = super::sample_st_start(clip, t, rng)?;
        clip.write_normalized(start, t, &mut real_clips[i * t * frame_len..(i + 1) * t * frame_len]);
        let f = super::sample_s1_index(clip, rng)?;
        clip.write_normalized(f, 1, &mut real_images[i * frame_len..(i + 1) * frame_len]);
    }
    let real_clips = Tensor::from_vec(&[n, t, 3, s, s], real_clips)?;
    let real_images = Tensor::from_vec(&[n, 3, s, s], real_images)?;
    let real_labels: Option<Vec<usize>> = if cfg.supervised_q && d_a > 0 {
        real.iter()
            .map(|c| c.label.filter(|&l| l < d_a))
            .collect::<Option<Vec<_>>>()
    } else {
        None
    };
    if cfg.supervised_q && d_a > 0 && real_labels.is_none() {
        return Err(Error::Config("supervised Q needs a label in range for every clip".into()));
    }

    // Phase 1: discriminators on real samples and detached fakes.
    zero_grads(bundle);
    let latents = LatentBatch::sample(&bundle.latent, n, t, rng)?;
    let fake_clips = generate_clips(bundle, &latents, Mode::TrainFrozenStats, false)?;
    let fake_frames: Vec<usize> = (0..n).map(|_| rng.below(t)).collect();
    let fake_images = pick_frames(&fake_clips, &fake_frames)?;

    let p = bundle.image_disc.forward(&real_images, Mode::Train)?;
    let (l_real_i, g) = bce_with_grad(&p, Target::Real);
    bundle.image_disc.backward_logits(&g, GradFlags::PARAMS_ONLY)?;
    let p = bundle.image_disc.forward(&fake_images, Mode::Train)?;
    let (l_fake_i, g) = bce_with_grad(&p, Target::Fake);
    bundle.image_disc.backward_logits(&g, GradFlags::PARAMS_ONLY)?;

    let out = bundle.video_disc.forward(&real_clips, Mode::Train)?;
    let (l_real_v, g) = bce_with_grad(&out.probs, Target::Real);
    let gq = match (&out.q, &real_labels) {
        (Some(q), Some(labels)) if lambda > 0.0 => {
            let (_, gq) = info_cross_entropy_with_grad(q, labels)?;
            Some(gq.map(|v| v * lambda as f32))
        }
        _ => None,
    };
    bundle.video_disc.backward_logits(Some(&g), gq.as_ref(), GradFlags::PARAMS_ONLY)?;
    let out = bundle.video_disc.forward(&fake_clips, Mode::Train)?;
    let (l_fake_v, g) = bce_with_grad(&out.probs, Target::Fake);
    let gq = match (&out.q, &latents.actions) {
        (Some(q), Some(actions)) if lambda > 0.0 && cfg.q_on_fakes => {
            let (_, gq) = info_cross_entropy_with_grad(q, actions)?;
            Some(gq.map(|v| v * lambda as f32))
        }
        _ => None,
    };
    bundle.video_disc.backward_logits(Some(&g), gq.as_ref(), GradFlags::PARAMS_ONLY)?;

    let d_image = l_real_i + l_fake_i;
    let d_video = l_real_v + l_fake_v;
    for (name, v) in [("d_image_loss", d_image), ("d_video_loss", d_video)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} at iteration {iteration}")));
        }
    }
    {
        let NetworkBundle {
            optimizer,
            image_disc,
            video_disc,
            ..
        } = bundle;
        optimizer.step(image_disc.params_mut().into_iter().chain(video_disc.params_mut()))?;
    }

    // Phase 2: generator and motion RNN through frozen discriminators.
    zero_grads(bundle);
    let latents = LatentBatch::sample(&bundle.latent, n, t, rng)?;
    let fake_clips = generate_clips(bundle, &latents, Mode::Train, true)?;
    let fake_frames: Vec<usize> = (0..n).map(|_| rng.below(t)).collect();
    let fake_images = pick_frames(&fake_clips, &fake_frames)?;

    let out = bundle.video_disc.forward(&fake_clips, Mode::TrainFrozenStats)?;
    let (g_v, gv) = generator_term_with_grad(&out.probs, cfg.gen_loss);
    let (info, gq) = match (&out.q, &latents.actions) {
        (Some(q), Some(actions)) => {
            let (ce, gq) = info_cross_entropy_with_grad(q, actions)?;
            (ce, (lambda > 0.0).then(|| gq.map(|v| v * lambda as f32)))
        }
        _ => (0.0, None),
    };
    let mut d_clips = bundle
        .video_disc
        .backward_logits(Some(&gv), gq.as_ref(), GradFlags::INPUT_ONLY)?
        .ok_or_else(|| Error::Shape("video discriminator returned no input gradient".into()))?;

    let p = bundle.image_disc.forward(&fake_images, Mode::TrainFrozenStats)?;
    let (g_i, gi) = generator_term_with_grad(&p, cfg.gen_loss);
    let d_images = bundle
        .image_disc
        .backward_logits(&gi, GradFlags::INPUT_ONLY)?
        .ok_or_else(|| Error::Shape("image discriminator returned no input gradient".into()))?;
    scatter_frames(&mut d_clips, &d_images, &fake_frames);

    let g_loss = g_i + g_v;
    for (name, v) in [("g_loss", g_loss), ("info_loss", info)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} at iteration {iteration}")));
        }
    }
    let d_frames = d_clips.reshape(&[n * t, 3, s, s])?;
    let d_z = bundle
        .generator
        .backward(&d_frames, GradFlags::ALL)?
        .ok_or_else(|| Error::Shape("generator returned no latent gradient".into()))?;
    let d_motion = split_motion_grads(&d_z, n, t, bundle.latent.d_c)?;
    bundle.motion.backward(&d_motion)?;
    {
        let NetworkBundle {
            optimizer,
            generator,
            motion,
            ..
        } = bundle;
        optimizer.step(generator.params_mut().into_iter().chain(motion.params_mut()))?;
    }

    bundle.iteration += 1;
    let report = LossReport {
        iteration: bundle.iteration,
        d_image,
        d_video,
        g: g_loss,
        info,
    };
    report.check_finite()?;
    Ok(report)
}

/// Runs `cfg.iterations` steps from the bundle's current iteration.
/// `on_step` sees the bundle after every step (for logging and checkpoints).
pub fn train_loop(
    bundle: &mut NetworkBundle,
    dataset: &[VideoClip],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&NetworkBundle, &LossReport) -> Result<()>,
) -> Result<Vec<LossReport>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    if let Some(short) = dataset.iter().position(|c| c.len() < cfg.t) {
        return Err(Error::Config(format!(
            "clip {short} has {} frames, fewer than T={}",
            dataset[short].len(),
            cfg.t
        )));
    }
    let mut history = Vec::with_capacity(cfg.iterations as usize);
    for _ in 0..cfg.iterations {
        let it = bundle.iteration;
        let batch: Vec<&VideoClip> = minibatch_indices(dataset.len(), cfg.batch_size, cfg.seed, it)
            .into_iter()
            .map(|i| &dataset[i])
            .collect();
        let mut rng = SeededRng::for_purpose(cfg.seed, "train_step", it);
        let report = train_step(bundle, &batch, cfg, &mut rng)?;
        on_step(bundle, &report)?;
        history.push(report);
    }
    Ok(history)
}
