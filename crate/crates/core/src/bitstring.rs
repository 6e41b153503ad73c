//! Finite bitstrings: the free monoid over `{0, 1}`.
//!
//! Every play, program and witness in this crate is a [`BitString`]. Bits are
//! packed most-significant-first into 64-bit words, so comparing the word
//! vectors of two equal-length strings compares them lexicographically.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

const WORD: usize = 64;

/// Errors from parsing or decoding bitstrings.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    /// A character other than `0` or `1` in a text rendering.
    #[error("invalid character {0:?} at position {1}")]
    InvalidChar(char, usize),
    /// A `10` digram before the `01` delimiter of a pair.
    #[error("digram 10 at bit {0} is not a pair encoding")]
    BadDigram(usize),
    /// The string ended before the `01` delimiter of a pair.
    #[error("pair encoding ended before the delimiter")]
    MissingDelimiter,
    /// Malformed hex rendering.
    #[error("invalid hex: {0}")]
    Hex(String),
}

/// A finite sequence of bits. `false` is heads (0), `true` is tails (1).
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    /// The empty string `()`.
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        BitString {
            words: Vec::with_capacity(bits.div_ceil(WORD)),
            len: 0,
        }
    }

    /// The low `len` bits of `value`, most significant first.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= WORD, "from_u64 takes at most 64 bits");
        if len == 0 {
            return Self::new();
        }
        let masked = if len == WORD {
            value
        } else {
            value & ((1u64 << len) - 1)
        };
        BitString {
            words: vec![masked << (WORD - len)],
            len,
        }
    }

    /// Shortest binary numeral of `n` (`bin(0)` is `"0"`).
    pub fn binary(n: u64) -> Self {
        let width = (WORD - n.leading_zeros() as usize).max(1);
        Self::from_u64(n, width)
    }

    /// `bit` repeated `n` times.
    pub fn filled(bit: bool, n: usize) -> Self {
        let mut words = vec![if bit { u64::MAX } else { 0 }; n.div_ceil(WORD)];
        let spare = words.len() * WORD - n;
        if let Some(last) = words.last_mut() {
            if spare > 0 {
                *last &= !((1u64 << spare) - 1);
            }
        }
        BitString { words, len: n }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bit at position `i` (0-based). Panics when out of range.
    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / WORD] >> (WORD - 1 - i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn push(&mut self, bit: bool) {
        let off = self.len % WORD;
        if off == 0 {
            self.words.push(0);
        }
        if bit {
            let last = self.words.len() - 1;
            self.words[last] |= 1u64 << (WORD - 1 - off);
        }
        self.len += 1;
    }

    /// Removes bits beyond `len`.
    pub fn truncate(&mut self, len: usize) {
        if len >= self.len {
            return;
        }
        self.words.truncate(len.div_ceil(WORD));
        let off = len % WORD;
        if off != 0 {
            let last = self.words.len() - 1;
            self.words[last] &= !(u64::MAX >> off);
        }
        self.len = len;
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.iter().collect()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Appends all bits of `other`.
    pub fn extend_from(&mut self, other: &BitString) {
        let off = self.len % WORD;
        if off == 0 {
            self.words.extend_from_slice(&other.words);
            self.len += other.len;
            self.words.truncate(self.len.div_ceil(WORD));
            return;
        }
        for &w in &other.words {
            let last = self.words.len() - 1;
            self.words[last] |= w >> off;
            self.words.push(w << (WORD - off));
        }
        self.len += other.len;
        self.words.truncate(self.len.div_ceil(WORD));
    }

    /// `self :: other`.
    pub fn concat(&self, other: &BitString) -> BitString {
        let mut out = BitString::with_capacity(self.len + other.len);
        out.extend_from(self);
        out.extend_from(other);
        out
    }

    /// `self` repeated `k` times.
    pub fn repeat(&self, k: usize) -> BitString {
        let mut out = BitString::with_capacity(self.len * k);
        for _ in 0..k {
            out.extend_from(self);
        }
        out
    }

    /// Prefix order: true iff some `z` has `self :: z == other`.
    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        if self.len > other.len {
            return false;
        }
        let full = self.len / WORD;
        if self.words[..full] != other.words[..full] {
            return false;
        }
        let off = self.len % WORD;
        off == 0 || (other.words[full] & !(u64::MAX >> off)) == self.words[full]
    }

    /// Strict prefix order.
    pub fn is_proper_prefix_of(&self, other: &BitString) -> bool {
        self.len < other.len && self.is_prefix_of(other)
    }

    /// Bits `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> BitString {
        assert!(start <= end && end <= self.len);
        if start.is_multiple_of(WORD) {
            let words = self.words[start / WORD..end.div_ceil(WORD)].to_vec();
            let mut out = BitString {
                len: words.len() * WORD,
                words,
            };
            out.truncate(end - start);
            return out;
        }
        (start..end).map(|i| self.get(i)).collect()
    }

    /// Value of the string read as a binary numeral, `None` above `u64::MAX`.
    pub fn to_u64(&self) -> Option<u64> {
        let mut v: u64 = 0;
        for b in self.iter() {
            v = v.checked_mul(2)?.checked_add(b as u64)?;
        }
        Some(v)
    }

    /// Every string of length exactly `n`, lexicographically.
    pub fn all_of_len(n: usize) -> impl Iterator<Item = BitString> {
        assert!(n < WORD, "exhaustive enumeration is limited to 63 bits");
        (0..1u64 << n).map(move |v| BitString::from_u64(v, n))
    }

    /// Every string of length at most `n`, in length-then-lexicographic order.
    pub fn all_up_to(n: usize) -> impl Iterator<Item = BitString> {
        (0..=n).flat_map(BitString::all_of_len)
    }

    /// The duplication pairing `x1 x1 x2 x2 ... xm xm 0 1 y1 ... yn`.
    pub fn pair(x: &BitString, y: &BitString) -> BitString {
        let mut out = BitString::with_capacity(2 * x.len + y.len + 2);
        for b in x.iter() {
            out.push(b);
            out.push(b);
        }
        out.push(false);
        out.push(true);
        out.extend_from(y);
        out
    }

    /// Inverse of [`BitString::pair`]: decodes digrams left to right,
    /// `00 -> 0`, `11 -> 1`, `01 -> stop`, `10 -> error`.
    pub fn unpair(&self) -> Result<(BitString, BitString), DecodeError> {
        let mut left = BitString::new();
        let mut i = 0;
        while i + 1 < self.len {
            match (self.get(i), self.get(i + 1)) {
                (false, false) => left.push(false),
                (true, true) => left.push(true),
                (false, true) => return Ok((left, self.slice(i + 2, self.len))),
                (true, false) => return Err(DecodeError::BadDigram(i)),
            }
            i += 2;
        }
        Err(DecodeError::MissingDelimiter)
    }

    /// Hex rendering of the packed bits, most significant bit first,
    /// zero-padded to a whole number of nibbles.
    pub fn to_hex(&self) -> String {
        let nibbles = self.len.div_ceil(4);
        let mut s = String::with_capacity(nibbles);
        for k in 0..nibbles {
            let mut v = 0u8;
            for j in 0..4 {
                let i = 4 * k + j;
                v = (v << 1) | (i < self.len && self.get(i)) as u8;
            }
            s.push(char::from_digit(v as u32, 16).unwrap());
        }
        s
    }

    /// Parses a hex rendering, keeping the first `bits` bits
    /// (all of them when `bits` is `None`).
    pub fn from_hex(hex: &str, bits: Option<usize>) -> Result<BitString, DecodeError> {
        let mut out = BitString::with_capacity(hex.len() * 4);
        for c in hex.chars() {
            let v = c
                .to_digit(16)
                .ok_or_else(|| DecodeError::Hex(format!("bad digit {c:?}")))?;
            for j in (0..4).rev() {
                out.push((v >> j) & 1 == 1);
            }
        }
        if let Some(n) = bits {
            if n > out.len || out.len - n >= 4 {
                return Err(DecodeError::Hex(format!(
                    "{} hex digits cannot hold exactly {n} bits",
                    hex.len()
                )));
            }
            out.truncate(n);
        }
        Ok(out)
    }
}

impl Ord for BitString {
    /// Length first, then lexicographic.
    fn cmp(&self, other: &Self) -> Ordering {
        self.len
            .cmp(&other.len)
            .then_with(|| self.words.cmp(&other.words))
    }
}

impl PartialOrd for BitString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut out = BitString::new();
        for b in iter {
            out.push(b);
        }
        out
    }
}

impl FromStr for BitString {
    type Err = DecodeError;

    /// ASCII `0`/`1` with an optional trailing newline.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_suffix('\n').unwrap_or(s);
        let s = s.strip_suffix('\r').unwrap_or(s);
        s.chars()
            .enumerate()
            .map(|(i, c)| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(DecodeError::InvalidChar(c, i)),
            })
            .collect()
    }
}

/// Serialized as a string of `0`/`1` characters.
impl serde::Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            f.write_str("()")
        } else {
            write!(f, "\"{self}\"")
        }
    }
}

/// Shorthand for parsing a literal in tests and examples. Panics on bad input.
pub fn bits(s: &str) -> BitString {
    s.parse().expect("bit literal")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn concat_examples() {
        assert_eq!(bits("01").concat(&bits("10")), bits("0110"));
        assert_eq!(BitString::new().concat(&bits("110")), bits("110"));
        assert_eq!(bits("1").concat(&BitString::new()), bits("1"));
    }

    #[test]
    fn prefix_examples() {
        assert!(bits("01").is_prefix_of(&bits("0110")));
        assert!(bits("0110").is_prefix_of(&bits("0110")));
        assert!(!bits("10").is_prefix_of(&bits("0110")));
        assert!(BitString::new().is_prefix_of(&bits("1")));
    }

    #[test]
    fn pair_examples() {
        assert_eq!(BitString::pair(&BitString::new(), &BitString::new()), bits("01"));
        assert_eq!(BitString::pair(&bits("01"), &bits("1")), bits("0011011"));
        assert_eq!(BitString::pair(&bits("1"), &bits("00")), bits("110100"));
    }

    #[test]
    fn unpair_examples() {
        assert_eq!(bits("0011011").unpair(), Ok((bits("01"), bits("1"))));
        assert_eq!(bits("01").unpair(), Ok((BitString::new(), BitString::new())));
        assert_eq!(bits("10").unpair(), Err(DecodeError::BadDigram(0)));
        assert_eq!(bits("001").unpair(), Err(DecodeError::MissingDelimiter));
        assert_eq!(BitString::new().unpair(), Err(DecodeError::MissingDelimiter));
    }

    #[test]
    fn binary_numerals() {
        assert_eq!(BitString::binary(0), bits("0"));
        assert_eq!(BitString::binary(43), bits("101011"));
        assert_eq!(bits("101011").to_u64(), Some(43));
    }

    #[test]
    fn text_format() {
        assert_eq!("0101\n".parse::<BitString>().unwrap(), bits("0101"));
        assert!(matches!("01a".parse::<BitString>(), Err(DecodeError::InvalidChar('a', 2))));
        assert_eq!(format!("{:?}", BitString::new()), "()");
    }

    #[test]
    fn hex_packing() {
        let code = bits("010011101111");
        assert_eq!(code.to_hex(), "4ef");
        assert_eq!(BitString::from_hex("4ef", None).unwrap(), code);
        let odd = bits("1011011");
        assert_eq!(odd.to_hex(), "b6");
        assert_eq!(BitString::from_hex("b6", Some(7)).unwrap(), odd);
        assert!(BitString::from_hex("b6", Some(3)).is_err());
    }

    #[test]
    fn order_is_length_then_lex() {
        let mut v = vec![bits("10"), bits("0"), bits("01"), BitString::new(), bits("1")];
        v.sort();
        assert_eq!(v, vec![BitString::new(), bits("0"), bits("1"), bits("01"), bits("10")]);
        let listed: Vec<_> = BitString::all_up_to(2).collect();
        assert_eq!(listed.len(), 7);
        assert!(listed.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn long_strings_cross_word_boundaries() {
        let a = bits("01").repeat(50);
        let b = bits("1").repeat(37);
        let c = a.concat(&b);
        assert_eq!(c.len(), 137);
        assert!(a.is_prefix_of(&c));
        assert_eq!(c.slice(100, 137), b);
        assert_eq!(c.slice(64, 100), a.slice(64, 100));
        let mut t = c.clone();
        t.truncate(100);
        assert_eq!(t, a);
        assert_eq!(BitString::filled(true, 70).count_ones(), 70);
    }

    #[test]
    fn pairing_exhaustive_small() {
        for x in BitString::all_up_to(4) {
            for y in BitString::all_up_to(4) {
                let z = BitString::pair(&x, &y);
                assert_eq!(z.len(), 2 * x.len() + y.len() + 2);
                assert_eq!(z.unpair().unwrap(), (x.clone(), y));
            }
        }
    }

    fn arb_bits(max: usize) -> impl Strategy<Value = BitString> {
        proptest::collection::vec(any::<bool>(), 0..max).prop_map(BitString::from_iter)
    }

    proptest! {
        #[test]
        fn pair_round_trips(x in arb_bits(200), y in arb_bits(200)) {
            let z = BitString::pair(&x, &y);
            prop_assert_eq!(z.len(), 2 * x.len() + y.len() + 2);
            prop_assert_eq!(z.unpair().unwrap(), (x, y));
        }

        #[test]
        fn length_is_a_homomorphism(x in arb_bits(300), y in arb_bits(300)) {
            let z = x.concat(&y);
            prop_assert_eq!(z.len(), x.len() + y.len());
            prop_assert!(x.is_prefix_of(&z));
            prop_assert_eq!(z.slice(x.len(), z.len()), y);
        }

        #[test]
        fn concat_is_associative(x in arb_bits(100), y in arb_bits(100), z in arb_bits(100)) {
            prop_assert_eq!(x.concat(&y).concat(&z), x.concat(&y.concat(&z)));
        }

        #[test]
        fn text_and_hex_round_trip(x in arb_bits(300)) {
            prop_assert_eq!(x.to_string().parse::<BitString>().unwrap(), x.clone());
            prop_assert_eq!(BitString::from_hex(&x.to_hex(), Some(x.len())).unwrap(), x);
        }
    }
}
