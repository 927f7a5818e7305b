//! Counter-based seeding: every random draw in a run is a pure function of
//! `(seed, domain, index)`, so no generator state has to be checkpointed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams used by the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Init = 1,
    EpochShuffle = 2,
    Targets = 3,
    Split = 4,
    Glyphs = 5,
    Penalty = 6,
    Oracle = 7,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
