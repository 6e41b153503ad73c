//! The hand-written detectors: periodic repetition, the counting stream, and
//! half-alternating interleaving.
//!
//! Each detector rejects inputs whose output would not be strictly longer,
//! so the expansion law holds structurally. Fuel is charged as
//! `len(x) + len(h(x))`.

use crate::bitstring::BitString;

use super::Detector;

fn within_fuel(x: &BitString, out_len: u64, fuel: u64) -> bool {
    (x.len() as u64)
        .checked_add(out_len)
        .is_some_and(|cost| cost <= fuel)
}

/// Length of the longest proper border of every prefix (KMP failure table).
fn borders(s: &[bool]) -> Vec<usize> {
    let mut fail = vec![0usize; s.len()];
    let mut k = 0;
    for i in 1..s.len() {
        while k > 0 && s[i] != s[k] {
            k = fail[k - 1];
        }
        if s[i] == s[k] {
            k += 1;
        }
        fail[i] = k;
    }
    fail
}

/// Every period of `s` in increasing order (the length itself included).
fn periods(s: &[bool]) -> Vec<usize> {
    if s.is_empty() {
        return Vec::new();
    }
    let fail = borders(s);
    let mut out = Vec::new();
    let mut b = fail[s.len() - 1];
    while b > 0 {
        out.push(s.len() - b);
        b = fail[b - 1];
    }
    out.push(s.len());
    out
}

fn smallest_period(s: &[bool]) -> usize {
    if s.is_empty() {
        0
    } else {
        s.len() - borders(s)[s.len() - 1]
    }
}

/// `per`: `<p, k>` with `p` nonempty and `k >= 1` written in binary without
/// leading zeros, mapped to `p` repeated `k` times.
#[derive(Debug, Clone, Copy, Default)]
pub struct PeriodicDetector;

impl PeriodicDetector {
    fn witness(y: &BitString, period: usize, fuel: u64) -> Option<BitString> {
        let n = y.len();
        let x = BitString::pair(&y.slice(0, period), &BitString::binary((n / period) as u64));
        (x.len() < n && within_fuel(&x, n as u64, fuel)).then_some(x)
    }
}

impl Detector for PeriodicDetector {
    fn name(&self) -> &str {
        "per"
    }

    fn evaluate(&self, x: &BitString, fuel: u64) -> Option<BitString> {
        let (p, k_bits) = x.unpair().ok()?;
        if p.is_empty() || k_bits.is_empty() || !k_bits.get(0) {
            return None;
        }
        let k = k_bits.to_u64()?;
        let out_len = k.checked_mul(p.len() as u64)?;
        if (x.len() as u64) >= out_len || !within_fuel(x, out_len, fuel) {
            return None;
        }
        Some(p.repeat(k as usize))
    }

    fn is_predictive(&self) -> bool {
        true
    }

    fn preimages(&self, y: &BitString, fuel: u64) -> Option<Vec<BitString>> {
        let s = y.to_bools();
        let n = s.len();
        let mut out: Vec<BitString> = periods(&s)
            .into_iter()
            .filter(|&d| d < n && n.is_multiple_of(d))
            .filter_map(|d| Self::witness(y, d, fuel))
            .collect();
        out.sort();
        Some(out)
    }

    fn shortest_preimage(&self, y: &BitString, fuel: u64) -> Option<Option<BitString>> {
        // A period dividing n is a multiple of the smallest period, and the
        // witness length grows with the period.
        let n = y.len();
        let d = smallest_period(&y.to_bools());
        Some(if d > 0 && d < n && n.is_multiple_of(d) {
            Self::witness(y, d, fuel)
        } else {
            None
        })
    }
}

/// Bits of `bin(0) bin(1) bin(2) ...` = `0 1 10 11 100 ...`.
pub fn counting_stream() -> CountingStream {
    CountingStream { n: 0, pos: 0 }
}

#[derive(Debug, Clone)]
pub struct CountingStream {
    n: u64,
    pos: u32,
}

impl Iterator for CountingStream {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        let width = (64 - self.n.leading_zeros()).max(1);
        let bit = (self.n >> (width - 1 - self.pos)) & 1 == 1;
        self.pos += 1;
        if self.pos == width {
            self.pos = 0;
            self.n += 1;
        }
        Some(bit)
    }
}

/// `cnt`: the binary numeral of `n >= 1` mapped to the first `n` bits of the
/// counting stream.
#[derive(Debug, Clone, Copy, Default)]
pub struct CounterDetector;

impl Detector for CounterDetector {
    fn name(&self) -> &str {
        "cnt"
    }

    fn evaluate(&self, x: &BitString, fuel: u64) -> Option<BitString> {
        if x.is_empty() || !x.get(0) {
            return None;
        }
        let n = x.to_u64()?;
        if (x.len() as u64) >= n || !within_fuel(x, n, fuel) {
            return None;
        }
        Some(counting_stream().take(n as usize).collect())
    }

    fn encode(&self, y: &BitString) -> Option<BitString> {
        y.iter()
            .zip(counting_stream())
            .all(|(a, b)| a == b)
            .then(|| BitString::binary(y.len() as u64))
    }

    fn has_encoder(&self) -> bool {
        true
    }

    fn is_predictive(&self) -> bool {
        true
    }

    fn preimages(&self, y: &BitString, fuel: u64) -> Option<Vec<BitString>> {
        let x = BitString::binary(y.len() as u64);
        let ok = x.len() < y.len()
            && within_fuel(&x, y.len() as u64, fuel)
            && y.iter().zip(counting_stream()).all(|(a, b)| a == b);
        Some(if ok { vec![x] } else { Vec::new() })
    }
}

/// `xoralt`: `<mask, payload>` with a nonempty mask, mapped to
/// `m0 p0 m1 p1 ... m(L-1) p(L-1) mL` where the `m`s cycle through the mask
/// and the `p`s are the `L` payload bits. With mask `01` this is a play that
/// alternates on odd positions and carries arbitrary bits on even ones.
#[derive(Debug, Clone, Copy, Default)]
pub struct HalfAlternatingDetector;

impl HalfAlternatingDetector {
    fn split(y: &BitString) -> Option<(Vec<bool>, BitString)> {
        if y.len().is_multiple_of(2) {
            return None;
        }
        let odd: Vec<bool> = (0..y.len()).step_by(2).map(|i| y.get(i)).collect();
        let payload: BitString = (1..y.len()).step_by(2).map(|i| y.get(i)).collect();
        Some((odd, payload))
    }

    fn witness(odd: &[bool], payload: &BitString, d: usize, n: usize, fuel: u64) -> Option<BitString> {
        let mask: BitString = odd[..d].iter().copied().collect();
        let x = BitString::pair(&mask, payload);
        (x.len() < n && within_fuel(&x, n as u64, fuel)).then_some(x)
    }
}

impl Detector for HalfAlternatingDetector {
    fn name(&self) -> &str {
        "xoralt"
    }

    fn evaluate(&self, x: &BitString, fuel: u64) -> Option<BitString> {
        let (mask, payload) = x.unpair().ok()?;
        if mask.is_empty() {
            return None;
        }
        let out_len = 2 * payload.len() + 1;
        if x.len() >= out_len || !within_fuel(x, out_len as u64, fuel) {
            return None;
        }
        let mut out = BitString::with_capacity(out_len);
        for (i, b) in payload.iter().enumerate() {
            out.push(mask.get(i % mask.len()));
            out.push(b);
        }
        out.push(mask.get(payload.len() % mask.len()));
        Some(out)
    }

    fn is_predictive(&self) -> bool {
        true
    }

    fn preimages(&self, y: &BitString, fuel: u64) -> Option<Vec<BitString>> {
        let Some((odd, payload)) = Self::split(y) else {
            return Some(Vec::new());
        };
        let mut out: Vec<BitString> = periods(&odd)
            .into_iter()
            .filter_map(|d| Self::witness(&odd, &payload, d, y.len(), fuel))
            .collect();
        out.sort();
        Some(out)
    }

    fn shortest_preimage(&self, y: &BitString, fuel: u64) -> Option<Option<BitString>> {
        let Some((odd, payload)) = Self::split(y) else {
            return Some(None);
        };
        let d = smallest_period(&odd);
        Some(Self::witness(&odd, &payload, d, y.len(), fuel))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstring::bits;
    use crate::detectors::DEFAULT_FUEL;

    #[test]
    fn counting_stream_prefix() {
        let s: BitString = counting_stream().take(18).collect();
        assert_eq!(s, bits("011011100101110111"));
        let six = CounterDetector.evaluate(&bits("110"), DEFAULT_FUEL).unwrap();
        assert_eq!(six, bits("011011"));
    }

    #[test]
    fn periodic_evaluation() {
        let x = BitString::pair(&bits("01"), &bits("101"));
        assert_eq!(PeriodicDetector.evaluate(&x, DEFAULT_FUEL), Some(bits("01").repeat(5)));
        // leading zero in the count
        let x = BitString::pair(&bits("0"), &bits("0111"));
        assert_eq!(PeriodicDetector.evaluate(&x, DEFAULT_FUEL), None);
        // would not expand
        let x = BitString::pair(&bits("01"), &bits("1"));
        assert_eq!(PeriodicDetector.evaluate(&x, DEFAULT_FUEL), None);
        // fuel too small
        let x = BitString::pair(&bits("01"), &bits("10100"));
        assert_eq!(PeriodicDetector.evaluate(&x, 40), None);
        assert!(PeriodicDetector.evaluate(&x, 51).is_some());
    }

    #[test]
    fn half_alternating_evaluation() {
        let x = BitString::pair(&bits("01"), &bits("1110111"));
        let y = HalfAlternatingDetector.evaluate(&x, DEFAULT_FUEL).unwrap();
        assert_eq!(y, bits("011101100111011"));
        assert_eq!(HalfAlternatingDetector.preimages(&y, DEFAULT_FUEL), Some(vec![x]));
    }

    #[test]
    fn periodic_preimages_are_complete() {
        let y = bits("0").repeat(12);
        let pre = PeriodicDetector.preimages(&y, DEFAULT_FUEL).unwrap();
        let brute: Vec<BitString> = BitString::all_up_to(11)
            .filter(|x| PeriodicDetector.evaluate(x, DEFAULT_FUEL).as_ref() == Some(&y))
            .collect();
        assert_eq!(pre, brute);
        assert_eq!(pre.len(), 3);
    }

    #[test]
    fn preimage_listings_match_enumeration() {
        let dets: [&dyn Detector; 3] = [&PeriodicDetector, &CounterDetector, &HalfAlternatingDetector];
        for d in dets {
            for y in BitString::all_up_to(11) {
                let brute: Vec<BitString> = BitString::all_up_to(y.len().saturating_sub(1))
                    .filter(|x| d.evaluate(x, DEFAULT_FUEL).as_ref() == Some(&y))
                    .collect();
                let listed = d.preimages(&y, DEFAULT_FUEL).unwrap();
                assert_eq!(listed, brute, "{} on {y}", d.name());
                assert_eq!(
                    d.shortest_preimage(&y, DEFAULT_FUEL).unwrap(),
                    brute.first().cloned()
                );
            }
        }
    }

    #[test]
    fn period_helpers() {
        let s = bits("010101").to_bools();
        assert_eq!(periods(&s), vec![2, 4, 6]);
        assert_eq!(smallest_period(&bits("0010010").to_bools()), 3);
    }
}
