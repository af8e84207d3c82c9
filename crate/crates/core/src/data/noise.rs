use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Segment;
use crate::error::{HadlError, Result};

/// Adds `η · N(0, 1)` to every own value of `segment`, channel by channel in
/// time order. Returns a new segment backed by its own copy of the data, so
/// other segments sharing the original series are untouched. Any borrowed
/// context before `segment.start()` is copied clean.
pub fn inject_noise(segment: &Segment, eta: f64, seed: u64) -> Result<Segment> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(HadlError::Config(format!("noise intensity must be >= 0, got {eta}")));
    }
    if eta == 0.0 {
        return Ok(segment.clone());
    }
    let ctx = segment.context_start();
    let mut copy = segment.series().slice(ctx, segment.end());
    let own = segment.start() - ctx;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in 0..copy.channels() {
        for v in &mut copy.values.row_mut(c)[own..] {
            let z: f64 = rng.sample(StandardNormal);
            *v += eta * z;
        }
    }
    let end = copy.timesteps();
    Segment::new(segment.name.clone(), Arc::new(copy), own, end, 0)
}
