//! Counter-based seed derivation.
//!
//! All randomness in the crate flows from a single root seed expanded by
//! (stream, index) counters, so that results never depend on the order in
//! which independent pieces of work are executed.

/// Named sub-streams of a root seed.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    /// Per-neuron activation trains.
    Train,
    /// Additive noise.
    Noise,
    /// Waveform synthesis.
    Shapes,
    /// Benchmark repetitions.
    Bench,
    /// Sweep draws.
    Sweep,
    /// Internal deterministic starts (power iteration).
    Internal,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Train => 0x5452_4149_4e00_0001,
            Stream::Noise => 0x4e4f_4953_4500_0002,
            Stream::Shapes => 0x5348_4150_4500_0003,
            Stream::Bench => 0x4245_4e43_4800_0004,
            Stream::Sweep => 0x5357_4545_5000_0005,
            Stream::Internal => 0x494e_5445_5200_0006,
        }
    }
}

/// SplitMix64 finalizer; good avalanche for counter-based derivation.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for `(root, stream, index)`.
pub fn derive(root: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(root ^ stream.tag()).wrapping_add(index))
}
