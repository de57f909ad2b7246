//! Seeded random streams. Every device gets its own substreams so adding a
//! device never perturbs another device's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags for the per-device substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Noise = 1,
    Mobility = 2,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `(seed, device, stream)`.
pub fn substream_seed(seed: u64, device_id: u32, stream: Stream) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ device_id as u64) ^ stream as u64)
}

pub fn substream(seed: u64, device_id: u32, stream: Stream) -> SimRng {
    SimRng::seed_from_u64(substream_seed(seed, device_id, stream))
}
