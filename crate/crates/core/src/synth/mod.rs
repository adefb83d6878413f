//! Deterministic synthetic scenes and reference implementations for testing.

mod oracle;
mod rng;
mod scene;

pub use self::oracle::brute_force_pq;
pub use self::rng::{mix64, SplitMix64, GOLDEN_GAMMA};
pub use self::scene::{generate_scene, Perturbation, Scene, SceneSpec, PROB_SMOOTHING};
