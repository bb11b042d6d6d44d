//! Ego pose token encoder: kinematic features, a small transformer stack on a
//! reverse-mode autodiff tape, seeded weights and a finite-difference checker.

pub mod config;
pub mod features;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod scalar;
pub mod tape;
pub mod weights;

pub use config::EncoderConfig;
pub use gradcheck::{gradcheck, gradcheck_graph, GradcheckReport};
pub use layers::{attention_pool, gated_fuse, multi_head_attention, AttentionWeights};
pub use model::{EgoPoseEncoder, Mode};
pub use weights::EncoderWeights;
