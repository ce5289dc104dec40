//! Content consistency (ACD), motion control (MCS) and inception score.

mod classifier;
mod metrics;

pub use classifier::{
    train_action_classifier, ActionClassifier, ClassifierArch, ClassifierReport, ClassifierTrainConfig,
};
pub use metrics::{
    acd_from_embeddings, acd_set, acd_single, average_color, config_hash, first_frame_spread, inception_score,
    inception_score_from_probs, mcs, FrameEmbedder, MetricReport,
};
