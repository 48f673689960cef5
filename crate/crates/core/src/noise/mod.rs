//! Seeded random streams and the corruption processes applied to images.

mod corrupt;
mod rng;

pub use corrupt::{corrupt, CorruptorSpec};
pub use rng::RngStream;
