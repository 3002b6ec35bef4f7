//! Adversarial training loop, data sampling, and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod diffusion;
pub mod trainer;


pub use checkpoint::{Checkpoint, Entry, Payload, TensorTable};
pub use config::TrainRunConfig;
pub use data::{batch_from, crop_pair, procedural_textures, sample_patches, Batch, Dataset, Pair};
pub use diffusion::{diffuse_at, diffuse_residual, DiffusionConfig, DiffusionState};
pub use trainer::{load_generator, noise_multiplier, StepMetrics, Trainer};
