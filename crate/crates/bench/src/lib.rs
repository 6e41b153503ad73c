//! Inputs shared by the benchmarks.

use pennies_core::bitstring::BitString;
use pennies_core::detectors::counting_stream;

/// The first `n` bits of the counting stream.
pub fn counting_prefix(n: usize) -> BitString {
    let mut s = BitString::with_capacity(n);
    for b in counting_stream().take(n) {
        s.push(b);
    }
    s
}

/// A fixed pseudo-random string from a linear congruential walk.
pub fn noise(n: usize, seed: u64) -> BitString {
    let mut s = BitString::with_capacity(n);
    let mut x = seed;
    for _ in 0..n {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        s.push(x >> 63 == 1);
    }
    s
}
