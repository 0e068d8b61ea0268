//! Seeded, splittable random streams.
//!
//! A stream is identified by `(seed, stream_id)` and backed by ChaCha8 with
//! the stream id mapped onto ChaCha's native 64-bit stream counter, so
//! distinct ids never overlap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    negate_signs: bool,
    rng: ChaCha8Rng,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            negate_signs: false,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// An independent child stream labelled `tag`. Depends only on this
    /// stream's identity, not on how many draws have been taken from it.
    pub fn child(&self, tag: u64) -> RngStream {
        let seed = mix64(self.seed ^ mix64(self.stream_id.wrapping_add(0x5851_F42D_4C95_7F2D)));
        let mut child = RngStream::new(seed, tag);
        child.negate_signs = self.negate_signs;
        child
    }

    /// Same draws, but every [`RngStream::sign`] result is negated.
    pub fn with_negated_signs(mut self) -> RngStream {
        self.negate_signs = !self.negate_signs;
        self
    }

    /// Uniform index in `0..bound`.
    pub fn index(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        self.rng.random_range(0..bound)
    }

    /// Uniform sign, `+1.0` or `-1.0`.
    pub fn sign(&mut self) -> f64 {
        let s = if self.rng.random::<bool>() { 1.0 } else { -1.0 };
        if self.negate_signs {
            -s
        } else {
            s
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random()
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random()
    }

    /// Mutable access to the underlying generator.
    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
