//! Noise sources.
//!
//! Every mechanism takes a generic `rand::Rng`, but the toolkit itself hands
//! out [`NoiseRng`], a ChaCha20 stream that is either seeded (reproducible
//! test runs) or keyed from OS entropy (deployment). Seeded streams are
//! addressable by `(seed, stream)` and can be positioned at an arbitrary
//! draw index, so concurrent tasks never share state.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// How a [`NoiseRng`] was keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngMode {
    /// Seeded and reproducible. Never use for a real release.
    Test,
    /// Keyed from the operating system's entropy source.
    Deploy,
}

#[derive(Debug, Clone)]
pub struct NoiseRng {
    inner: ChaCha20Rng,
    mode: RngMode,
}

/// ChaCha words consumed by one 64-bit draw.
const WORDS_PER_DRAW: u128 = 2;

impl NoiseRng {
    pub fn seeded(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    /// Independent stream `stream` under `seed`.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            inner,
            mode: RngMode::Test,
        }
    }

    /// Seeded stream positioned so that the next 64-bit draw is draw number `index`.
    pub fn at_draw(seed: u64, stream: u64, index: u64) -> Self {
        let mut rng = Self::stream(seed, stream);
        rng.inner.set_word_pos(index as u128 * WORDS_PER_DRAW);
        rng
    }

    pub fn from_entropy() -> Self {
        Self {
            inner: ChaCha20Rng::from_entropy(),
            mode: RngMode::Deploy,
        }
    }

    pub fn mode(&self) -> RngMode {
        self.mode
    }

    /// Number of 64-bit draws consumed so far.
    pub fn draw_index(&self) -> u64 {
        (self.inner.get_word_pos() / WORDS_PER_DRAW) as u64
    }

    /// Derive a child stream for a sub-task. Test-mode children are a pure
    /// function of the parent's current state; deploy-mode children are
    /// keyed from fresh entropy.
    pub fn fork(&mut self) -> Self {
        match self.mode {
            RngMode::Test => {
                let mut seed = <ChaCha20Rng as SeedableRng>::Seed::default();
                self.inner.fill_bytes(&mut seed);
                Self {
                    inner: ChaCha20Rng::from_seed(seed),
                    mode: RngMode::Test,
                }
            }
            RngMode::Deploy => Self::from_entropy(),
        }
    }
}

impl RngCore for NoiseRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
