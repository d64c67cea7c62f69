//! Keyed, splittable random streams.
//!
//! A stream is identified by a root seed plus a path of 64-bit labels
//! (replication index, source label, class label, ...). The path is folded
//! through SplitMix64 into the 256-bit state of a xoshiro256++ generator, so
//! the same `(seed, path)` always regenerates the same variates regardless of
//! which thread or in which order streams are created.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn textual labels into stream keys.
pub fn label_key(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Identity of a stream: root seed and the folded key path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    root: u64,
    path: u64,
}

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        let mut s = seed;
        StreamKey {
            root: seed,
            path: splitmix64(&mut s),
        }
    }

    /// Child key; children of distinct labels are distinct streams.
    pub fn child(&self, label: u64) -> Self {
        let mut s = self.path ^ label.wrapping_mul(GOLDEN).rotate_left(17);
        let a = splitmix64(&mut s);
        let b = splitmix64(&mut s);
        StreamKey {
            root: self.root,
            path: a ^ b.rotate_left(32),
        }
    }

    pub fn named(&self, label: &str) -> Self {
        self.child(label_key(label))
    }

    pub fn seed(&self) -> u64 {
        self.root
    }

    pub fn stream(&self) -> RngStream {
        let mut s = self.path ^ self.root.rotate_left(7);
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        RngStream {
            key: *self,
            gen: Xoshiro256PlusPlus::from_seed(bytes),
        }
    }
}

/// A single sequential random stream. Not shared between threads; split the
/// key instead.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: StreamKey,
    gen: Xoshiro256PlusPlus,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        StreamKey::root(seed).stream()
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Independent stream derived from this stream's key (not its position).
    pub fn substream(&self, label: u64) -> RngStream {
        self.key.child(label).stream()
    }

    /// Uniform in the open interval (0, 1).
    #[inline]
    pub fn open01(&mut self) -> f64 {
        let bits = self.gen.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential variate with the given rate.
    #[inline]
    pub fn exp_rate(&mut self, rate: f64) -> f64 {
        -self.open01().ln() / rate
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.gen.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.gen.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.gen.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_sequence() {
        let k = StreamKey::root(42).child(3).named("source-1");
        let mut a = k.stream();
        let mut b = k.stream();
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_keys_differ() {
        let root = StreamKey::root(42);
        let mut a = root.child(0).stream();
        let mut b = root.child(1).stream();
        let same = (0..100).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
        assert_ne!(root.named("a"), root.named("b"));
        assert_ne!(StreamKey::root(1).child(0), StreamKey::root(2).child(0));
    }

    #[test]
    fn open01_in_range() {
        let mut s = RngStream::new(7);
        for _ in 0..10_000 {
            let u = s.open01();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn independent_streams_uncorrelated() {
        // Pearson correlation of paired uniforms from sibling streams.
        let root = StreamKey::root(99);
        let mut a = root.child(10).stream();
        let mut b = root.child(11).stream();
        let n = 200_000;
        let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = a.open01();
            let y = b.open01();
            sa += x;
            sb += y;
            sab += x * y;
            saa += x * x;
            sbb += y * y;
        }
        let nf = n as f64;
        let cov = sab / nf - (sa / nf) * (sb / nf);
        let va = saa / nf - (sa / nf).powi(2);
        let vb = sbb / nf - (sb / nf).powi(2);
        let r = cov / (va * vb).sqrt();
        // 4 standard errors of a null correlation estimate.
        assert!(r.abs() < 4.0 / nf.sqrt(), "r = {r}");
    }
}
