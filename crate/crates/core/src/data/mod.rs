//! Video clips, the procedural shape-motion dataset and on-disk formats.
//!
//! Clips are kept as `u8` RGB and mapped to `[-1, 1]` when a training or
//! evaluation batch is assembled.

mod clip;
mod io;
mod shapes;

pub use clip::{denormalize, normalize, VideoClip};
pub use io::{
    load_clip_folder, load_dataset, load_frame_folder, read_dataset, save_clip_pngs, save_dataset,
    write_dataset, PackedDataset, DATASET_MAGIC, DATASET_VERSION,
};
pub use shapes::{
    bezier_point, generate_shape_motion, render_sample, render_shape_frame, shape_motion_sample, Motion,
    Shape, ShapeMotionSample, ShapeMotionSpec, MIN_COLOR_SUM,
};
