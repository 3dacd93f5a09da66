//! Stable seed derivation.
//!
//! Trial seeds are a pure function of `(master_seed, step, trial_index)`, so
//! results do not depend on how trials are scheduled across threads.

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines two words into one well-mixed word.
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b.rotate_left(17))
}

/// Seed of trial `index` in campaign step `step`.
pub fn trial_seed(master_seed: u64, step: u64, index: u64) -> u64 {
    mix(mix(master_seed, step), index)
}
