//! Seeded random volumes. Everything stochastic in the crate draws from
//! ChaCha8 so results are reproducible bit-for-bit across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::volume::{Shape, VideoVolume};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn uniform_volume(shape: Shape, rng: &mut impl Rng, lo: f64, hi: f64) -> VideoVolume {
    VideoVolume::from_fn(shape, |_, _, _| rng.random_range(lo..hi)).expect("valid shape")
}

pub fn normal_volume(shape: Shape, rng: &mut impl Rng) -> VideoVolume {
    VideoVolume::from_fn(shape, |_, _, _| rng.sample::<f64, _>(StandardNormal))
        .expect("valid shape")
}
