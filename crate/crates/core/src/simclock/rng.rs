/// SplitMix64 increment (the 64-bit golden ratio).
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// A named, seeded SplitMix64 stream.
///
/// The initial state is `mix64(seed ^ fnv1a64(stream_id))`; each draw adds
/// the golden gamma to the state and returns `mix64(state)`. This is fully
/// specified, so the same `(seed, stream_id)` yields the same sequence in
/// any language.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: String,
    state: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: &str) -> Self {
        RngStream {
            seed,
            stream_id: stream_id.to_owned(),
            state: mix64(seed ^ fnv1a64(stream_id.as_bytes())),
        }
    }

    /// A stream with a raw SplitMix64 state, for checking published vectors.
    pub fn from_state(state: u64) -> Self {
        RngStream {
            seed: state,
            stream_id: String::new(),
            state,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform real in `[0, 1)` built from the top 53 bits of a draw.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
