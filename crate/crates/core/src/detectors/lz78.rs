//! LZ78 over bits, as a detector.
//!
//! A stream is a sequence of tokens. Before token `i` the dictionary holds
//! `i + 1` phrases (phrase 0 is empty); the token is the index of a phrase in
//! `ceil(log2(i + 1))` bits followed by one literal bit, and decodes to that
//! phrase extended by the literal. A stream may end with a bare index (no
//! literal) standing for a phrase already in the dictionary.

use crate::bitstring::BitString;

use super::Detector;

fn index_width(token: usize) -> usize {
    // bits needed for indices 0..=token
    (usize::BITS - token.leading_zeros()) as usize
}

fn read_bits(x: &BitString, pos: usize, width: usize) -> usize {
    (pos..pos + width).fold(0, |v, i| (v << 1) | x.get(i) as usize)
}

/// Decodes a complete token stream, giving up once the output would exceed
/// `max_out` bits.
pub fn lz78_decode(x: &BitString, max_out: usize) -> Option<BitString> {
    let mut out = BitString::new();
    // (offset, len) of each phrase within `out`
    let mut phrases: Vec<(usize, usize)> = vec![(0, 0)];
    let mut pos = 0;
    while pos < x.len() {
        let token = phrases.len() - 1;
        let width = index_width(token);
        if pos + width > x.len() {
            return None;
        }
        let idx = read_bits(x, pos, width);
        if idx > token {
            return None;
        }
        pos += width;
        let (off, len) = phrases[idx];
        let literal = (pos < x.len()).then(|| x.get(pos));
        let grown = len + literal.is_some() as usize;
        if out.len() + grown > max_out {
            return None;
        }
        let start = out.len();
        for i in off..off + len {
            out.push(out.get(i));
        }
        match literal {
            Some(b) => {
                out.push(b);
                phrases.push((start, grown));
                pos += 1;
            }
            None => break,
        }
    }
    Some(out)
}

/// Greedy LZ78 parse of `y`.
pub fn lz78_encode(y: &BitString) -> BitString {
    // children[node] = [child on 0, child on 1]; 0 means absent (root is 0)
    let mut children: Vec<[u32; 2]> = vec![[0, 0]];
    let mut out = BitString::new();
    let mut cur = 0usize;
    let emit = |out: &mut BitString, token: usize, idx: usize| {
        let width = index_width(token);
        for j in (0..width).rev() {
            out.push((idx >> j) & 1 == 1);
        }
    };
    for b in y.iter() {
        let next = children[cur][b as usize];
        if next != 0 {
            cur = next as usize;
            continue;
        }
        let token = children.len() - 1;
        emit(&mut out, token, cur);
        out.push(b);
        children[cur][b as usize] = children.len() as u32;
        children.push([0, 0]);
        cur = 0;
    }
    if cur != 0 {
        emit(&mut out, children.len() - 1, cur);
    }
    out
}

/// `lz78`: the decoder, defined when the stream parses completely and the
/// output is strictly longer than the stream.
#[derive(Debug, Clone, Copy, Default)]
pub struct Lz78Detector;

impl Detector for Lz78Detector {
    fn name(&self) -> &str {
        "lz78"
    }

    fn evaluate(&self, x: &BitString, fuel: u64) -> Option<BitString> {
        let max_out = usize::try_from(fuel.saturating_sub(x.len() as u64)).unwrap_or(usize::MAX);
        let out = lz78_decode(x, max_out)?;
        (out.len() > x.len()).then_some(out)
    }

    fn encode(&self, y: &BitString) -> Option<BitString> {
        Some(lz78_encode(y))
    }

    fn has_encoder(&self) -> bool {
        true
    }

    fn is_predictive(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstring::bits;
    use proptest::prelude::*;

    #[test]
    fn small_streams() {
        // token 0: literal only; token 1: 1-bit index + literal
        assert_eq!(lz78_decode(&bits("0"), 100), Some(bits("0")));
        assert_eq!(lz78_decode(&bits("011"), 100), Some(bits("001")));
        // bare final index
        assert_eq!(lz78_decode(&bits("01"), 100), Some(bits("00")));
        // token 2 has a 2-bit index that may only name phrases 0..=2
        assert_eq!(lz78_decode(&bits("00011"), 100), None);
        // truncated index
        assert_eq!(lz78_decode(&bits("0101"), 100), None);
        assert_eq!(lz78_encode(&bits("0001")), bits("010001"));
        assert_eq!(lz78_decode(&bits("010001"), 100), Some(bits("0001")));
    }

    #[test]
    fn periodic_input_compresses() {
        let y = bits("01").repeat(200);
        assert!(lz78_encode(&y).len() < y.len());
    }

    #[test]
    fn output_cap_is_respected() {
        let y = bits("01").repeat(50);
        let x = lz78_encode(&y);
        assert_eq!(lz78_decode(&x, 99), None);
        assert_eq!(lz78_decode(&x, 100), Some(y));
    }

    proptest! {
        #[test]
        fn encode_then_decode(v in proptest::collection::vec(any::<bool>(), 0..400)) {
            let y: BitString = v.into_iter().collect();
            prop_assert_eq!(lz78_decode(&lz78_encode(&y), usize::MAX), Some(y));
        }
    }
}
