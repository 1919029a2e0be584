//! Counter-based random streams.
//!
//! Every stochastic unit of work (a weight draw, a Monte-Carlo block, a
//! resampling repetition) gets its own ChaCha stream addressed by
//! `(master seed, purpose, layer, index)`. Streams never share state, so
//! work units can run on any thread in any order and still reproduce
//! bit-identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Role of a stream, kept to one byte inside the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Weights = 1,
    GpSample = 2,
    MonteCarlo = 3,
    Resample = 4,
    Inputs = 5,
    Experiment = 6,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Expand a 64-bit master seed into a ChaCha key.
fn master_key(seed: u64) -> [u8; 32] {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Pack `(purpose, layer, index)` into the 64-bit ChaCha stream id.
///
/// `index` must fit in 48 bits, which leaves room for ~2.8e14 work units.
fn stream_id(purpose: Purpose, layer: usize, index: u64) -> u64 {
    debug_assert!(index < (1 << 48));
    debug_assert!(layer < 256);
    ((purpose as u64) << 56) | ((layer as u64) << 48) | index
}

/// Deterministic stream for one unit of work.
pub fn stream(seed: u64, purpose: Purpose, layer: usize, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::from_seed(master_key(seed));
    rng.set_stream(stream_id(purpose, layer, index));
    rng
}

/// Derive a fresh 64-bit sub-seed, for handing a whole seed space to a
/// nested component (e.g. one experiment repetition).
pub fn sub_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    let mut state = seed ^ stream_id(purpose, 0, index);
    splitmix64(&mut state)
}
