//! Per-path random streams. Path `i` of a run with seed `s` always draws from stream `i` of
//! the ChaCha8 generator keyed by `s`, so results do not depend on how paths are scheduled.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type PathRng = ChaCha8Rng;

pub fn path_rng(seed: u64, path: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Uniform on `[0, 1)` with 53 random bits.
#[inline]
pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard exponential by inversion.
#[inline]
pub fn exponential(rng: &mut impl RngCore) -> f64 {
    -libm::log1p(-uniform(rng))
}
