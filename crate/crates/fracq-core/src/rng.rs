//! Deterministic RNG stream derivation.
//!
//! Every stochastic operation takes a `u64` seed and derives one or more
//! ChaCha streams from it. Replicates and independent noise sources get
//! distinct stream ids, so paths are independent while the whole run stays
//! bitwise reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Returns stream `stream_id` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream_id: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream id of the fBm driver for a given replicate.
pub(crate) fn fgn_stream(replicate: u64) -> u64 {
    2 * replicate
}

/// Stream id of the volatility shocks for a given replicate.
pub(crate) fn vol_stream(replicate: u64) -> u64 {
    2 * replicate + 1
}
