//! Seed derivation for reproducible randomness.
//!
//! Every consumer of randomness in the pipeline gets its own ChaCha stream
//! seeded through [`derive`], so streams never alias: the squiggle frequency
//! walk, the additive noise, the burst/gate placement, per-sample parameter
//! draws, weight initialization, and per-epoch shuffles are all independent
//! functions of one master seed.

/// Stream tag for the squiggle frequency random walk.
pub const STREAM_TRAJECTORY: u64 = 0x7452_414a_0000_0001;
/// Stream tag for additive complex Gaussian noise.
pub const STREAM_NOISE: u64 = 0x4e4f_4953_0000_0002;
/// Stream tag for gate placement (brightpixel burst start).
pub const STREAM_GATE: u64 = 0x4741_5445_0000_0003;
/// Stream tag for per-sample simulation parameter draws.
pub const STREAM_PARAMS: u64 = 0x5041_5241_0000_0004;
/// Stream tag for model weight initialization.
pub const STREAM_INIT: u64 = 0x494e_4954_0000_0005;
/// Stream tag for per-epoch training shuffles.
pub const STREAM_SHUFFLE: u64 = 0x5348_5546_0000_0006;

/// One round of the splitmix64 output mix.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a sub-seed from a master seed and a stream tag (or index).
///
/// The combination is mixed twice so that related tags (e.g. consecutive
/// sample indices) produce unrelated seeds.
pub fn derive(master: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(tag))
}

/// Per-sample seed for dataset generation: `hash(master_seed, sample_index)`.
pub fn sample_seed(master: u64, sample_index: u64) -> u64 {
    derive(master, sample_index)
}
