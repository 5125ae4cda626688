//! Counter-based random streams.
//!
//! Every consumer derives a ChaCha8 generator from `(seed, domain)` as the
//! key and an index (sample, trial, word) as the stream id, so results never
//! depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keeping unrelated consumers of one seed apart.
pub mod domain {
    pub const WORD: u64 = 1;
    pub const POINT: u64 = 2;
    pub const FIT: u64 = 3;
    pub const VALIDATE: u64 = 4;
    pub const INSTANCE: u64 = 5;
    pub const TRIAL: u64 = 6;
    pub const SERIES: u64 = 7;
    pub const MONTE_CARLO: u64 = 8;
}

pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..24].copy_from_slice(b"toralclt");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
