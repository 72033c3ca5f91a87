//! Deterministic stream derivation for parallel replications.
//!
//! Every stochastic task gets its own ChaCha stream keyed by the master
//! seed plus a path of integers (replication index, method index, ...).
//! Streams never share state, so replications can run concurrently in any
//! order and still produce bit-identical output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 step; used only to expand seeds, never as the sampling RNG.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent counter-based generator from `master` and a key
/// path. Different paths give unrelated streams; the same (master, path)
/// always gives the same stream.
pub fn derive_rng(master: u64, path: &[u64]) -> ChaCha12Rng {
    let mut state = splitmix64(master);
    for &p in path {
        state = splitmix64(state ^ splitmix64(p.wrapping_add(0x9E37_79B9)));
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}
