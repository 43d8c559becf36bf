//! Hierarchical, reproducible random streams.
//!
//! A stream is a root seed plus a path of integers such as
//! `[feature, permutation, replicate]`. The path is folded into a 256-bit
//! ChaCha key with SplitMix64, so identical `(root, path)` pairs give the
//! same draws on every platform and distinct paths give unrelated draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    root_seed: u64,
    path: Vec<u64>,
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    mix(*state)
}

impl RngStream {
    pub fn new(root_seed: u64) -> Self {
        Self {
            root_seed,
            path: Vec::new(),
        }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Child stream with `extension` appended to the path.
    pub fn derive(&self, extension: u64) -> RngStream {
        let mut path = self.path.clone();
        path.push(extension);
        RngStream {
            root_seed: self.root_seed,
            path,
        }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut h = mix(self.root_seed ^ 0x5EED_5EED_5EED_5EED);
        for (depth, &step) in self.path.iter().enumerate() {
            // Hashing the depth with the step keeps [a, b] and [b, a] apart.
            let tagged = mix(step ^ mix(depth as u64 + 1));
            h = mix(h.rotate_left(23) ^ tagged);
        }
        let mut key = [0u8; 32];
        let mut s = h;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        ChaCha20Rng::from_seed(key)
    }
}

/// Uniform random permutation of `0..n` (Fisher-Yates on 64-bit draws, so
/// the result does not depend on the platform's pointer width).
pub fn permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut out: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let k = rng.random_range(0..=i as u64) as usize;
        out.swap(i, k);
    }
    out
}
