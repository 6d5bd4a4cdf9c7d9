//! Seeded PCG32 streams with labelled substreams.
//!
//! Corpus generation must be bit-reproducible across platforms and languages,
//! so the generator and every derived draw are pinned here:
//!
//! * generator: PCG32 (XSH-RR 64/32), `state' = state * 6364136223846793005 + inc`
//! * `next_uniform01` = `next_u32 as f64 / 2^32`
//! * `next_index(n)` = `floor(next_uniform01() * n)`
//! * substream seed = `fnv1a64(label) XOR seed`, stream selector = `fnv1a64(label)`

const PCG_MULT: u64 = 6364136223846793005;

/// 64-bit FNV-1a hash, used to derive substream seeds from text labels.
pub fn fnv1a64(label: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in label.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// A PCG32 generator owned by a single consumer. Parallel callers must derive
/// independent substreams via [`rng_substream`].
#[derive(Debug, Clone)]
pub struct DeterministicRng {
    state: u64,
    increment: u64,
}

impl DeterministicRng {
    /// Seeds a generator on the given stream, following the PCG reference
    /// seeding sequence (step, add seed, step).
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = DeterministicRng {
            state: 0,
            increment: (stream << 1) | 1,
        };
        rng.next_u32();
        rng.state = rng.state.wrapping_add(seed);
        rng.next_u32();
        rng
    }

    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.state = old.wrapping_mul(PCG_MULT).wrapping_add(self.increment);
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    /// Uniform draw in `[0, 1)` with 32 bits of resolution.
    pub fn next_uniform01(&mut self) -> f64 {
        f64::from(self.next_u32()) / 4294967296.0
    }

    /// Uniform index in `[0, n)`.
    ///
    /// Accepts the ≤2⁻³² modulo bias of `floor(u * n)` to keep the contract
    /// one-line portable. Panics if `n == 0`.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n >= 1, "next_index requires n >= 1");
        let idx = (self.next_uniform01() * n as f64) as usize;
        // floor(u * n) can only reach n through rounding at u -> 1.
        idx.min(n - 1)
    }
}

/// Derives the substream identified by `label` from a master `seed`.
///
/// Identical `(seed, label)` pairs yield identical draw sequences.
pub fn rng_substream(seed: u64, label: &str) -> DeterministicRng {
    let h = fnv1a64(label);
    DeterministicRng::with_stream(seed ^ h, h)
}
