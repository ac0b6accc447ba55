//! Packed binary sketches.
//!
//! Bit `i` of a sketch lives in word `i / 64` at offset `i % 64`
//! (least-significant bit first). Padding bits past the logical length are
//! always zero, so the Hamming distance is a plain XOR + popcount over words.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const WORD_BITS: usize = 64;

const DUMP_MAGIC: &[u8; 4] = b"RHPT";
const DUMP_VERSION: u32 = 1;

#[inline]
pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

/// A bit vector with a fixed logical length and an angular/shifted split.
///
/// Angular bits occupy `[0, angular_len)` and shifted bits occupy
/// `[angular_len, len)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinarySketch {
    words: Vec<u64>,
    len: usize,
    angular_len: usize,
}

impl BinarySketch {
    /// All-zero sketch.
    pub fn zeros(len: usize, angular_len: usize) -> Self {
        assert!(angular_len <= len, "angular part longer than sketch");
        Self {
            words: vec![0; words_for(len)],
            len,
            angular_len,
        }
    }

    /// Builds a sketch from raw words, clearing any padding bits.
    pub fn from_words(mut words: Vec<u64>, len: usize, angular_len: usize) -> Result<Self> {
        if words.len() != words_for(len) {
            return Err(Error::LengthMismatch {
                left: words.len(),
                right: words_for(len),
            });
        }
        if angular_len > len {
            return Err(Error::InvalidParams(format!(
                "angular length {angular_len} exceeds sketch length {len}"
            )));
        }
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(len);
        }
        Ok(Self {
            words,
            len,
            angular_len,
        })
    }

    pub fn from_bits(bits: &[bool], angular_len: usize) -> Self {
        let mut s = Self::zeros(bits.len(), angular_len);
        for (i, &b) in bits.iter().enumerate() {
            if b {
                s.set(i);
            }
        }
        s
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn angular_len(&self) -> usize {
        self.angular_len
    }

    #[inline]
    pub fn shifted_len(&self) -> usize {
        self.len - self.angular_len
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for sketch of {}", self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub(crate) fn words_mut(&mut self) -> &mut [u64] {
        &mut self.words
    }

    pub(crate) fn set(&mut self, i: usize) {
        self.words[i / WORD_BITS] |= 1u64 << (i % WORD_BITS);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Iterator over the bits as booleans.
    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    fn check_layout(&self, other: &Self) -> Result<()> {
        if self.len != other.len || self.angular_len != other.angular_len {
            return Err(Error::LengthMismatch {
                left: self.len,
                right: other.len,
            });
        }
        Ok(())
    }

    /// Number of differing positions over the full sketch.
    pub fn hamming(&self, other: &Self) -> Result<u64> {
        self.check_layout(other)?;
        Ok(hamming_words(&self.words, &other.words))
    }

    /// Hamming distance restricted to the angular bits.
    pub fn hamming_angular(&self, other: &Self) -> Result<u64> {
        self.check_layout(other)?;
        Ok(hamming_range(&self.words, &other.words, 0, self.angular_len))
    }

    /// Hamming distance restricted to the shifted bits.
    pub fn hamming_shifted(&self, other: &Self) -> Result<u64> {
        self.check_layout(other)?;
        Ok(hamming_range(
            &self.words,
            &other.words,
            self.angular_len,
            self.len,
        ))
    }

    /// Writes one dump record: 16-byte header then little-endian words.
    ///
    /// Header layout: magic `RHPT`, version `u32` LE, logical length `u64` LE.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&DUMP_VERSION.to_le_bytes())?;
        out.write_all(&(self.len as u64).to_le_bytes())?;
        for w in &self.words {
            out.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads one dump record. The angular/shifted split is not part of the
    /// wire format and must be supplied by the caller.
    pub fn read_dump<R: Read>(mut input: R, angular_len: usize) -> Result<Self> {
        let mut header = [0u8; 16];
        input.read_exact(&mut header)?;
        if &header[..4] != DUMP_MAGIC {
            return Err(Error::InvalidParams("bad sketch dump magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != DUMP_VERSION {
            return Err(Error::InvalidParams(format!(
                "unsupported sketch dump version {version}"
            )));
        }
        let len = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let mut words = vec![0u64; words_for(len)];
        let mut buf = [0u8; 8];
        for w in &mut words {
            input.read_exact(&mut buf)?;
            *w = u64::from_le_bytes(buf);
        }
        if let Some(&last) = words.last() {
            if last & !tail_mask(len) != 0 {
                return Err(Error::InvalidParams(
                    "sketch dump has non-zero padding bits".into(),
                ));
            }
        }
        Self::from_words(words, len, angular_len)
    }
}

/// Writes a sequence of sketches as back-to-back dump records.
pub fn write_dump_all<W: Write>(sketches: &[BinarySketch], mut out: W) -> Result<()> {
    for s in sketches {
        s.write_dump(&mut out)?;
    }
    Ok(())
}

/// Reads dump records until end of input.
pub fn read_dump_all<R: Read>(mut input: R, angular_len: usize) -> Result<Vec<BinarySketch>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cursor = &bytes[..];
    let mut out = Vec::new();
    while !cursor.is_empty() {
        out.push(BinarySketch::read_dump(&mut cursor, angular_len)?);
    }
    Ok(out)
}

#[inline]
fn tail_mask(len: usize) -> u64 {
    match len % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[inline]
pub(crate) fn hamming_words(a: &[u64], b: &[u64]) -> u64 {
    // Written as a plain reduction so it vectorizes to wide popcounts.
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as u64).sum()
}

/// Hamming distance over bit positions `[start, end)`.
pub(crate) fn hamming_range(a: &[u64], b: &[u64], start: usize, end: usize) -> u64 {
    if start >= end {
        return 0;
    }
    let first = start / WORD_BITS;
    let last = (end - 1) / WORD_BITS;
    let lo_mask = u64::MAX << (start % WORD_BITS);
    let hi_mask = tail_mask(end);
    if first == last {
        return ((a[first] ^ b[first]) & lo_mask & hi_mask).count_ones() as u64;
    }
    let mut d = ((a[first] ^ b[first]) & lo_mask).count_ones() as u64;
    d += hamming_words(&a[first + 1..last], &b[first + 1..last]);
    d += ((a[last] ^ b[last]) & hi_mask).count_ones() as u64;
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sketch(rng: &mut ChaCha8Rng, len: usize, angular: usize) -> BinarySketch {
        let bits: Vec<bool> = (0..len).map(|_| rng.random()).collect();
        BinarySketch::from_bits(&bits, angular)
    }

    fn naive(a: &BinarySketch, b: &BinarySketch, start: usize, end: usize) -> u64 {
        (start..end).filter(|&i| a.get(i) != b.get(i)).count() as u64
    }

    #[test]
    fn self_distance_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_sketch(&mut rng, 300, 100);
        assert_eq!(s.hamming(&s).unwrap(), 0);
    }

    #[test]
    fn zeros_vs_ones() {
        let z = BinarySketch::zeros(64, 32);
        let o = BinarySketch::from_bits(&[true; 64], 32);
        assert_eq!(z.hamming(&o).unwrap(), 64);
        assert_eq!(z.hamming_angular(&o).unwrap(), 32);
        assert_eq!(z.hamming_shifted(&o).unwrap(), 32);
    }

    #[test]
    fn random_512_matches_bit_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let a = random_sketch(&mut rng, 512, 256);
            let b = random_sketch(&mut rng, 512, 256);
            assert_eq!(a.hamming(&b).unwrap(), naive(&a, &b, 0, 512));
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let a = BinarySketch::zeros(10, 5);
        let b = BinarySketch::zeros(11, 5);
        assert!(matches!(a.hamming(&b), Err(Error::LengthMismatch { .. })));
        let c = BinarySketch::zeros(10, 4);
        assert!(a.hamming(&c).is_err());
    }

    #[test]
    fn from_words_clears_padding() {
        let s = BinarySketch::from_words(vec![u64::MAX], 10, 5).unwrap();
        assert_eq!(s.count_ones(), 10);
        assert_eq!(s.words()[0], 0x3FF);
    }

    #[test]
    fn dump_header_layout() {
        let s = BinarySketch::from_bits(&[true, false, true], 1);
        let mut buf = Vec::new();
        s.write_dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8);
        assert_eq!(&buf[..4], b"RHPT");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..16], &3u64.to_le_bytes());
        assert_eq!(&buf[16..24], &5u64.to_le_bytes());
    }

    #[test]
    fn dump_rejects_bad_magic() {
        let mut buf = [0u8; 24];
        buf[..4].copy_from_slice(b"NOPE");
        assert!(BinarySketch::read_dump(&buf[..], 0).is_err());
    }

    proptest! {
        #[test]
        fn dump_roundtrip(seed in any::<u64>(), len in 1usize..400, count in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let angular = len / 2;
            let sketches: Vec<_> = (0..count).map(|_| random_sketch(&mut rng, len, angular)).collect();
            let mut buf = Vec::new();
            write_dump_all(&sketches, &mut buf).unwrap();
            let back = read_dump_all(&buf[..], angular).unwrap();
            prop_assert_eq!(back, sketches);
        }

        #[test]
        fn metric_axioms(seed in any::<u64>(), len in 1usize..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let angular = rng.random_range(0..=len);
            let a = random_sketch(&mut rng, len, angular);
            let b = random_sketch(&mut rng, len, angular);
            let c = random_sketch(&mut rng, len, angular);
            let ab = a.hamming(&b).unwrap();
            prop_assert_eq!(ab, b.hamming(&a).unwrap());
            prop_assert!(ab <= a.hamming(&c).unwrap() + c.hamming(&b).unwrap());
            prop_assert_eq!(ab == 0, a == b);
            prop_assert_eq!(
                a.hamming_angular(&b).unwrap() + a.hamming_shifted(&b).unwrap(),
                ab
            );
            prop_assert_eq!(a.hamming_angular(&b).unwrap(), naive(&a, &b, 0, angular));
        }
    }
}
