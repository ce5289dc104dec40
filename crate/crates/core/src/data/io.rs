use std::fs::{self, File};
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use super::VideoClip;
use crate::latent::LengthHistogram;
use crate::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"SMV1";
pub const DATASET_VERSION: u32 = 1;

/// Clips plus their length distribution `p_K`.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedDataset {
    pub clips: Vec<VideoClip>,
    pub histogram: LengthHistogram,
}

impl PackedDataset {
    pub fn new(clips: Vec<VideoClip>) -> Result<Self> {
        let histogram = LengthHistogram::from_lengths(clips.iter().map(VideoClip::len))?;
        Ok(PackedDataset { clips, histogram })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// Clip count per label; unlabeled clips are counted under `None`.
    pub fn label_counts(&self) -> std::collections::BTreeMap<Option<usize>, usize> {
        let mut counts = std::collections::BTreeMap::new();
        for c in &self.clips {
            *counts.entry(c.label).or_insert(0) += 1;
        }
        counts
    }
}

fn u16_field(v: usize, what: &str) -> Result<[u8; 2]> {
    u16::try_from(v)
        .map(u16::to_le_bytes)
        .map_err(|_| Error::Format(format!("{what} {v} does not fit the container")))
}

pub fn write_dataset<W: Write>(w: &mut W, dataset: &PackedDataset) -> Result<()> {
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    let count = u32::try_from(dataset.clips.len()).map_err(|_| Error::Format("too many clips".into()))?;
    w.write_all(&count.to_le_bytes())?;
    for clip in &dataset.clips {
        let label = match clip.label {
            Some(l) => i32::try_from(l).map_err(|_| Error::Format(format!("label {l} too large")))?,
            None => -1,
        };
        w.write_all(&label.to_le_bytes())?;
        w.write_all(&u16_field(clip.len(), "clip length")?)?;
        w.write_all(&u16_field(clip.height(), "frame height")?)?;
        w.write_all(&u16_field(clip.width(), "frame width")?)?;
        w.write_all(clip.bytes())?;
    }
    let entries: Vec<_> = dataset.histogram.entries().collect();
    w.write_all(&u16_field(entries.len(), "histogram size")?)?;
    for (k, p) in entries {
        w.write_all(&u16_field(k, "clip length")?)?;
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_n<R: Read, const N: usize>(r: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Truncated(format!("dataset {what}")),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

/// Reads an `SMV1` container and checks the stored `p_K` against the clips.
pub fn read_dataset<R: Read>(r: &mut R) -> Result<PackedDataset> {
    let magic: [u8; 4] = read_n(r, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(&DATASET_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let version = u32::from_le_bytes(read_n(r, "version")?);
    if version != DATASET_VERSION {
        return Err(Error::Version {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let count = u32::from_le_bytes(read_n(r, "clip count")?) as usize;
    let mut clips = Vec::with_capacity(count);
    for i in 0..count {
        let what = format!("clip {i} header");
        let label = i32::from_le_bytes(read_n(r, &what)?);
        let k = u16::from_le_bytes(read_n(r, &what)?) as usize;
        let h = u16::from_le_bytes(read_n(r, &what)?) as usize;
        let w = u16::from_le_bytes(read_n(r, &what)?) as usize;
        let mut frames = vec![0u8; k * h * w * 3];
        r.read_exact(&mut frames).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => Error::Truncated(format!("dataset clip {i} frames")),
            _ => Error::Io(e),
        })?;
        let label = usize::try_from(label).ok();
        clips.push(VideoClip::new(k, h, w, frames, label)?);
    }
    let entries = u16::from_le_bytes(read_n(r, "histogram size")?) as usize;
    let mut stored = std::collections::BTreeMap::new();
    for _ in 0..entries {
        let k = u16::from_le_bytes(read_n(r, "histogram entry")?) as usize;
        let p = f64::from_le_bytes(read_n(r, "histogram entry")?);
        stored.insert(k, p);
    }
    let stored = LengthHistogram::new(stored)?;
    let dataset = PackedDataset::new(clips)?;
    if stored != dataset.histogram {
        return Err(Error::Format(
            "stored clip-length histogram does not match the clips".into(),
        ));
    }
    Ok(dataset)
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &PackedDataset) -> Result<()> {
    write_dataset(&mut BufWriter::new(File::create(path)?), dataset)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<PackedDataset> {
    read_dataset(&mut BufReader::new(File::open(path)?))
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if (want_dirs && path.is_dir()) || (!want_dirs && path.is_file() && is_png) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Loads one video from a directory of PNG frames (lexicographic order) and
/// an optional `label` file holding a class index.
pub fn load_clip_folder(dir: impl AsRef<Path>) -> Result<VideoClip> {
    let dir = dir.as_ref();
    let frames = sorted_entries(dir, false)?;
    if frames.is_empty() {
        return Err(Error::Format(format!("video {} has no PNG frames", dir.display())));
    }
    let mut bytes = Vec::new();
    let mut dims = None;
    for f in &frames {
        let img = image::open(f)?.to_rgb8();
        let d = img.dimensions();
        match dims {
            None => dims = Some(d),
            Some(first) if first != d => {
                return Err(Error::Format(format!(
                    "video {} mixes frame sizes {}x{} and {}x{}",
                    dir.display(),
                    first.0,
                    first.1,
                    d.0,
                    d.1
                )))
            }
            _ => {}
        }
        bytes.extend_from_slice(img.as_raw());
    }
    let label_path = dir.join("label");
    let label = if label_path.is_file() {
        let text = fs::read_to_string(&label_path)?;
        Some(text.trim().parse::<usize>().map_err(|_| {
            Error::Format(format!("{} does not hold a class index", label_path.display()))
        })?)
    } else {
        None
    };
    let (w, h) = dims.expect("at least one frame");
    VideoClip::new(frames.len(), h as usize, w as usize, bytes, label)
}

/// Loads every video subdirectory of `root`, in lexicographic order.
pub fn load_frame_folder(root: impl AsRef<Path>) -> Result<PackedDataset> {
    let root = root.as_ref();
    let dirs = sorted_entries(root, true)?;
    if dirs.is_empty() {
        return Err(Error::Format(format!("{} has no video directories", root.display())));
    }
    let clips = dirs.iter().map(load_clip_folder).collect::<Result<Vec<_>>>()?;
    PackedDataset::new(clips)
}

/// Writes `frame_0000.png`, `frame_0001.png`, ... and a `label` file when
/// the clip has one.
pub fn save_clip_pngs(clip: &VideoClip, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for k in 0..clip.len() {
        image::save_buffer(
            dir.join(format!("frame_{k:04}.png")),
            clip.frame(k),
            clip.width() as u32,
            clip.height() as u32,
            image::ColorType::Rgb8,
        )?;
    }
    if let Some(l) = clip.label {
        fs::write(dir.join("label"), format!("{l}\n"))?;
    }
    Ok(())
}
