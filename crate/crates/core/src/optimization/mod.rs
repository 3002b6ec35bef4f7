//! AdamW, cosine annealing with warm restarts, and the discriminator restart policy.

mod adamw;
mod policy;
mod schedule;

pub use adamw::{AdamW, AdamWConfig};
pub use policy::{PolicyAction, PolicyMode, RestartPolicy, RestartPolicyConfig};
pub use schedule::CosineRestartSchedule;
