use crate::data::VideoClip;
use crate::latent::SeededRng;
use crate::{Error, Result};

/// Index of a uniformly random frame (`S_1`).
pub fn sample_s1_index(clip: &VideoClip, rng: &mut SeededRng) -> Result<usize> {
    if clip.is_empty() {
        return Err(Error::Shape("cannot sample a frame from an empty clip".into()));
    }
    Ok(rng.below(clip.len()))
}

/// A uniformly random frame as a one-frame clip.
pub fn sample_s1(clip: &VideoClip, rng: &mut SeededRng) -> Result<VideoClip> {
    let k = sample_s1_index(clip, rng)?;
    clip.slice(k, 1)
}

/// Number of `t`-frame windows in a `k`-frame clip.
pub fn window_count(k: usize, t: usize) -> usize {
    if t == 0 || k < t {
        0
    } else {
        k - t + 1
    }
}

/// Start of a uniformly random `t`-frame window (`S_T`).
pub fn sample_st_start(clip: &VideoClip, t: usize, rng: &mut SeededRng) -> Result<usize> {
    match window_count(clip.len(), t) {
        0 => Err(Error::Shape(format!(
            "clip of {} frames has no window of {t} frames",
            clip.len()
        ))),
        w => Ok(rng.below(w)),
    }
}

/// `t` consecutive frames starting at a uniformly random offset.
pub fn sample_st(clip: &VideoClip, t: usize, rng: &mut SeededRng) -> Result<VideoClip> {
    let start = sample_st_start(clip, t, rng)?;
    clip.slice(start, t)
}
