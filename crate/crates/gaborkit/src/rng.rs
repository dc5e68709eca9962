//! SplitMix64 pseudo-random generator.
//!
//! Dataset synthesis, weight initialization, and epoch shuffling all promise
//! byte-identical replay from a seed, across toolkit versions. General-purpose
//! RNG crates do not guarantee value stability of their distributions between
//! releases, so the generator and every derived distribution are fixed here:
//! SplitMix64 (Steele, Lea & Flood 2014), the same mixer `rand` uses for
//! seeding. Manifests record the name `splitmix64`.

/// Name recorded in dataset manifests so files are self-describing.
pub const PRNG_NAME: &str = "splitmix64";

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a bijective 64-bit mix.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The k-th output of the SplitMix64 stream seeded with `seed`, without
/// stepping through the first k-1 outputs. Used to derive independent
/// per-triplet seeds from a master seed.
#[inline]
pub fn stream_nth(seed: u64, k: u64) -> u64 {
    mix(seed.wrapping_add(k.wrapping_add(1).wrapping_mul(GAMMA)))
}

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform on the half-open interval [0, 1), with 53-bit resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1]: shifts the 53-bit lattice up by one step so zero is
    /// excluded and 1.0 is attainable.
    #[inline]
    pub fn next_f64_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [-b, b].
    #[inline]
    pub fn next_symmetric(&mut self, b: f64) -> f64 {
        (2.0 * self.next_f64() - 1.0) * b
    }

    /// Uniform index in [0, n) by the multiply-shift reduction
    /// (x * n) >> 64. The residual bias is below 2^-44 for any n < 2^20.
    #[inline]
    pub fn next_index(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle, iterating from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_index(i + 1);
            items.swap(i, j);
        }
    }
}
