//! Counter-based random streams.
//!
//! Every draw is a pure function of a key built from
//! `(seed, sample, path, level, index)`, so any path can be replayed in
//! isolation and results do not depend on scheduling.

use rand::RngCore;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// The splitmix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a key with one more word.
#[inline]
pub fn mix(key: u64, word: u64) -> u64 {
    splitmix64(key ^ splitmix64(word.wrapping_add(GOLDEN)))
}

/// Key for a tuple of words.
pub fn stream_key(words: &[u64]) -> u64 {
    words.iter().fold(0x6a09_e667_f3bc_c908, |k, &w| mix(k, w))
}

/// A splitmix64 stream at a fixed key.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        CounterRng { key, counter: 0 }
    }

    pub fn from_words(words: &[u64]) -> Self {
        CounterRng::new(stream_key(words))
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn draws(&self) -> u64 {
        self.counter
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        splitmix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = CounterRng::from_words(&[1, 2, 3]);
        let mut b = CounterRng::from_words(&[1, 2, 3]);
        let mut c = CounterRng::from_words(&[1, 2, 4]);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn uniform_mean() {
        let mut r = CounterRng::new(9);
        let n = 200_000;
        let m: f64 = (0..n).map(|_| r.random::<f64>()).sum::<f64>() / n as f64;
        assert!((m - 0.5).abs() < 4.0 * (1.0 / 12f64).sqrt() / (n as f64).sqrt());
    }
}
