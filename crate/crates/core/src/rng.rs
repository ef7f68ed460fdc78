//! Deterministic, splittable Gaussian random streams.
//!
//! Every stream is keyed by a `(seed, stream_id)` pair. The generator is
//! counter-based (ChaCha8), so identical keys replay bit-identical sequences
//! on any platform with IEEE-754 doubles, and distinct stream ids give
//! statistically independent lanes that concurrent workers can own without
//! coordination.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// A seeded, replayable random stream producing standard-normal draws.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
    seed: u64,
    stream_id: u64,
}

impl RngStream {
    /// Creates the stream identified by `(seed, stream_id)`.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { rng, seed, stream_id }
    }

    /// The seed this stream was created with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The stream id this stream was created with.
    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// One standard-normal draw.
    pub fn next_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Fills `out` with i.i.d. standard-normal draws.
    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.next_normal();
        }
    }

    /// One draw uniform on [0, 1).
    pub fn next_uniform(&mut self) -> f64 {
        use rand::Rng;
        self.rng.gen::<f64>()
    }
}
