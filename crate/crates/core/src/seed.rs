//! Sub-seed derivation.
//!
//! Every random stream in a benchmark run is keyed by the master seed plus a list of
//! string parts (scene id, light id, policy id, purpose tag, ...). The derivation is:
//!
//! ```text
//! h = splitmix64(master)
//! for part in parts:
//!     h = splitmix64(h ^ fnv1a64(part.as_bytes()))
//! ```
//!
//! `splitmix64` is the standard finalizer (add 0x9E3779B97F4A7C15, then the
//! 30/27/31 xor-shift-multiply rounds) and `fnv1a64` uses offset basis
//! 0xcbf29ce484222325 and prime 0x100000001b3. The resulting u64 seeds a ChaCha8
//! generator. Because streams depend only on their keys, results do not depend on
//! evaluation order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a sub-seed from `master` and an ordered list of key parts.
pub fn derive(master: u64, parts: &[&str]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |h, p| splitmix64(h ^ fnv1a64(p.as_bytes())))
}

pub fn stream(master: u64, parts: &[&str]) -> StreamRng {
    StreamRng::seed_from_u64(derive(master, parts))
}
