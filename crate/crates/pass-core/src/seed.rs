//! Deterministic seed derivation for nested experiment workers.
//!
//! Sweep points, user drops, and solver restarts each own an RNG seeded from
//! the master seed plus their indices, so runs are reproducible regardless of
//! scheduling order.

/// SplitMix64 step; good avalanche, cheap, stable across platforms.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and up to two stream indices.
pub fn derive(master: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ a) ^ b)
}
