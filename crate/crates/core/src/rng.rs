//! Deterministic stream derivation for seeded sampling.
//!
//! Every randomized routine in this crate derives its generators from a
//! single root seed through `substream`. ChaCha is a counter-mode stream
//! cipher, so `(seed, index)` pairs yield statistically independent streams
//! and results are reproducible bit for bit on any platform. By convention
//! index `i + 1` drives work item `i` (trajectory, audit candidate,
//! restart), leaving index 0 for auxiliary draws.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream `index` of the generator family keyed by `seed`.
#[must_use]
pub fn substream(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
