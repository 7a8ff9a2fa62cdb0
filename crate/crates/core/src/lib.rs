//! Joint constituency parsing and disfluency detection.
//!
//! A self-attentive encoder scores every labeled span of a sentence; a chart
//! decoder picks the best tree, and disfluencies are read off the `EDITED`,
//! `INTJ` and `PRN` nodes of that tree. Training minimizes a structured
//! hinge loss whose label weights can emphasize `EDITED` spans.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); training
//! and checkpoints use `f64`.

pub mod cli;
pub mod corpus_gen;
pub mod decoder;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod trainer;
pub mod transforms;
pub mod treebank;

pub use scalar::Scalar;

/// Parameters at training precision.
pub type Params = model::ModelParams<f64>;
/// Span score table at training precision.
pub type ScoreTable = model::SpanScoreTable<f64>;
/// Single-precision variants, usable for inference.
pub type Params32 = model::ModelParams<f32>;
pub type ScoreTable32 = model::SpanScoreTable<f32>;

/// Derives an independent 64-bit seed from `(seed, a, b)` by chained
/// splitmix64 finalization.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ a) ^ b)
}
