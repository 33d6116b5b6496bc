//! Seeded random streams.
//!
//! Every random draw in the crate comes from a stream identified by
//! `(run seed, stream name, index)`. The name and seed select a ChaCha key and
//! the index selects the ChaCha stream, so draws for step `i` never depend on
//! how many numbers earlier steps consumed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::Tensor;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Generator for `(seed, stream, index)`.
pub fn stream_rng(seed: u64, stream: &str, index: u64) -> StreamRng {
    let mut state = seed ^ fnv1a(stream).rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// A child seed for `purpose`, independent of every stream drawn from `seed`.
pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    stream_rng(seed, purpose, u64::MAX).random()
}

pub fn normal_tensor(rng: &mut StreamRng, shape: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.sample(StandardNormal);
    }
    t
}

/// Uniform draws in `[lo, hi)`.
pub fn uniform_tensor(rng: &mut StreamRng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.random_range(lo..hi);
    }
    t
}

/// Seeded Fisher–Yates permutation of `0..n`.
pub fn permutation(rng: &mut StreamRng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Shuffled minibatches of `0..n` for one epoch; the last batch may be short.
pub fn minibatches(
    seed: u64,
    stream: &str,
    epoch: u64,
    n: usize,
    batch_size: usize,
) -> Vec<Vec<usize>> {
    let mut rng = stream_rng(seed, stream, epoch);
    permutation(&mut rng, n)
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}
