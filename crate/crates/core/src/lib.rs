//! Motion/content decomposed video generation.
//!
//! A video is produced by sampling one content code per clip, unrolling a
//! GRU over i.i.d. Gaussian noise to obtain a trajectory of motion codes, and
//! mapping every `[content; motion]` pair through a convolutional image
//! generator. An image discriminator judges single frames and a
//! spatio-temporal discriminator judges fixed-length windows.
//!
//! The crate is layered bottom-up:
//!
//! - [`backend`]: tensors, layers with hand-written backward passes, GRU cell,
//!   Adam and finite-difference gradient checking.
//! - [`latent`]: seeded RNG streams, content/motion/action codes, the motion RNN.
//! - [`networks`]: image generator, image and video discriminators, the
//!   checkpointable [`networks::NetworkBundle`].
//! - [`training`]: adversarial objective terms, frame/window samplers and the
//!   alternating update loop.
//! - [`data`]: the procedural shape-motion dataset, packed dataset files and
//!   frame-folder IO.
//! - [`eval`]: average content distance, motion control score and inception
//!   score.

pub mod backend;
pub mod data;
mod error;
pub mod eval;
pub mod latent;
pub mod networks;
pub mod training;

pub use error::{Error, Result};
