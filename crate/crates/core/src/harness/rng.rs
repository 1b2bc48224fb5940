//! Seed handling. Every random draw comes from ChaCha8 seeded by the scenario
//! seed, with a separate stream per purpose so that, for example, adding a
//! perturbation never moves the initial drone placement.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Initial drone generation: groups in file order, per drone x, y, z, then
/// demand for sources.
pub const STREAM_PLACEMENT: u64 = 0;
/// Perturbations in schedule order: random departures, then arrivals.
pub const STREAM_PERTURBATION: u64 = 1;
/// The random-assignment baseline.
pub const STREAM_BASELINE: u64 = 2;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for one cell of a sweep.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ a) ^ b)
}
