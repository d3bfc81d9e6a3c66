//! Derivation of independent sub-seeds from the run seed.

pub const PREFERENCES: u64 = 1;
pub const INIT: u64 = 2;
pub const NOISE: u64 = 3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `stream` at position `(a, b)`, e.g. (round, client).
pub fn derive(seed: u64, stream: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(splitmix(seed) ^ stream) ^ a) ^ b)
}
