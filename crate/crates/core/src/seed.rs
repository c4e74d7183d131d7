//! Deterministic per-stage seed derivation.

/// Stage identifiers mixed into derived seeds.
pub mod stream {
    pub const SUBJECT: u64 = 1;
    pub const BOUNDARY: u64 = 2;
    pub const VISUALIZER: u64 = 3;
    pub const AUDIT: u64 = 4;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `index` of `stream` under the run seed `base`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index)
}
