//! Simulation and certification toolkit for heterodyne-detection quantum
//! random number generators.
//!
//! The pipeline mirrors a physical generator: a source state sampled in phase
//! space ([`phase_space`]), a balanced-detector and ADC front end
//! ([`acquisition`]), digital band selection and decorrelating downsampling
//! ([`dsp`]), min-entropy certification ([`entropy`]), Toeplitz hashing
//! ([`extractor`]) and a statistical screening battery ([`randomness`]).
//! [`pipeline`] chains the stages and [`config`] describes a run.
//!
//! # Randomness used by the simulator
//!
//! Simulated physics is driven by ChaCha12 ([`SimRng`]), seeded from a 64-bit
//! seed and split into independent streams per block so that block-parallel
//! generation is deterministic. Toeplitz seeds are expanded with ChaCha20
//! from a 256-bit master seed. Neither is a security claim: a deployed
//! extractor must take its seed from an independent uniform source.

pub mod acquisition;
pub mod config;
pub mod dsp;
pub mod entropy;
pub mod error;
pub mod extractor;
pub mod format;
pub mod phase_space;
pub mod pipeline;
pub mod randomness;

pub use error::{Error, Result};

use rand::SeedableRng;

/// Generator behind every simulated noise source.
pub type SimRng = rand_chacha::ChaCha12Rng;

/// Independent generator for `(seed, stream)`; the stream index is usually a
/// block number.
pub fn sim_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
