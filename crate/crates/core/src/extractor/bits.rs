use crate::error::{Error, Result};

/// Where a bit sequence came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BitOrigin {
    /// Packed ADC codes before hashing.
    Raw,
    /// Output of the Toeplitz extractor.
    Extracted,
    /// Toeplitz seed material.
    Seed,
}

impl BitOrigin {
    pub fn as_str(&self) -> &'static str {
        match self {
            BitOrigin::Raw => "raw",
            BitOrigin::Extracted => "extracted",
            BitOrigin::Seed => "seed",
        }
    }
}

/// Packed bit sequence, most significant bit first within each `u64` word.
///
/// Bit `i` lives in word `i / 64` at bit position `63 - i % 64`. Bits past
/// `len` are always zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitBlock {
    words: Vec<u64>,
    len: usize,
    origin: BitOrigin,
}

fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitBlock {
    pub fn zeros(len: usize, origin: BitOrigin) -> Self {
        BitBlock {
            words: vec![0; words_for(len)],
            len,
            origin,
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I, origin: BitOrigin) -> Self {
        let mut w = BitWriter::new(origin);
        for b in bits {
            w.push_bit(b);
        }
        w.finish()
    }

    /// Parses a string of `0`/`1` characters; whitespace is ignored.
    pub fn from_str_bits(s: &str, origin: BitOrigin) -> Result<Self> {
        let mut w = BitWriter::new(origin);
        for c in s.chars() {
            match c {
                '0' => w.push_bit(false),
                '1' => w.push_bit(true),
                c if c.is_whitespace() => {}
                c => return Err(Error::invalid("bit string", format!("unexpected character {c:?}"))),
            }
        }
        Ok(w.finish())
    }

    /// Takes ownership of packed words; padding bits are cleared.
    pub fn from_words(mut words: Vec<u64>, len: usize, origin: BitOrigin) -> Result<Self> {
        if words.len() != words_for(len) {
            return Err(Error::invalid(
                "bit block",
                format!("{} words cannot hold exactly {len} bits", words.len()),
            ));
        }
        mask_tail(&mut words, len);
        Ok(BitBlock { words, len, origin })
    }

    /// Reads `len` bits from MSB-first bytes.
    pub fn from_bytes(bytes: &[u8], len: usize, origin: BitOrigin) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::invalid(
                "bit block",
                format!("{} bytes cannot hold exactly {len} bits", bytes.len()),
            ));
        }
        let mut words = vec![0u64; words_for(len)];
        for (w, chunk) in words.iter_mut().zip(bytes.chunks(8)) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            *w = u64::from_be_bytes(buf);
        }
        BitBlock::from_words(words, len, origin)
    }

    /// MSB-first bytes; the last byte is zero padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_be_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn origin(&self) -> BitOrigin {
        self.origin
    }

    pub fn with_origin(mut self, origin: BitOrigin) -> Self {
        self.origin = origin;
        self
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for {} bits", self.len);
        (self.words[i / 64] >> (63 - i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit index {i} out of range for {} bits", self.len);
        let m = 1u64 << (63 - i % 64);
        if v {
            self.words[i / 64] |= m;
        } else {
            self.words[i / 64] &= !m;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| (self.words[i / 64] >> (63 - i % 64)) & 1 == 1)
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Ones among bits `[start, end)`.
    pub fn count_ones_range(&self, start: usize, end: usize) -> u64 {
        assert!(start <= end && end <= self.len, "range [{start}, {end}) out of bounds");
        if start == end {
            return 0;
        }
        let (ws, we) = (start / 64, (end - 1) / 64);
        let head = !0u64 >> (start % 64);
        let tail = !0u64 << (63 - (end - 1) % 64);
        if ws == we {
            return (self.words[ws] & head & tail).count_ones() as u64;
        }
        let mut c = (self.words[ws] & head).count_ones() as u64 + (self.words[we] & tail).count_ones() as u64;
        for w in &self.words[ws + 1..we] {
            c += w.count_ones() as u64;
        }
        c
    }

    pub fn xor(&self, other: &BitBlock) -> Result<BitBlock> {
        if self.len != other.len {
            return Err(Error::invalid(
                "bit block",
                format!("length mismatch {} vs {}", self.len, other.len),
            ));
        }
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect();
        Ok(BitBlock {
            words,
            len: self.len,
            origin: self.origin,
        })
    }

    pub fn hamming_distance(&self, other: &BitBlock) -> Result<u64> {
        Ok(self.xor(other)?.count_ones())
    }

    /// Bits `[start, start + len)` as a new block.
    pub fn slice(&self, start: usize, len: usize) -> Result<BitBlock> {
        if start.checked_add(len).is_none_or(|e| e > self.len) {
            return Err(Error::invalid(
                "bit block",
                format!("slice [{start}, {start}+{len}) exceeds {} bits", self.len),
            ));
        }
        let mut words = vec![0u64; words_for(len)];
        let shift = start % 64;
        let base = start / 64;
        for (k, w) in words.iter_mut().enumerate() {
            let hi = self.words.get(base + k).copied().unwrap_or(0);
            let lo = self.words.get(base + k + 1).copied().unwrap_or(0);
            *w = if shift == 0 { hi } else { (hi << shift) | (lo >> (64 - shift)) };
        }
        mask_tail(&mut words, len);
        Ok(BitBlock {
            words,
            len,
            origin: self.origin,
        })
    }

    /// Appends `other` after the last bit.
    pub fn append(&mut self, other: &BitBlock) {
        let shift = self.len % 64;
        if shift == 0 {
            self.words.extend_from_slice(&other.words);
        } else {
            for &w in &other.words {
                *self.words.last_mut().expect("shift > 0 implies a word") |= w >> shift;
                self.words.push(w << (64 - shift));
            }
        }
        self.len += other.len;
        self.words.truncate(words_for(self.len));
    }
}

pub(crate) fn mask_tail(words: &mut [u64], len: usize) {
    let r = len % 64;
    if r != 0 {
        if let Some(last) = words.last_mut() {
            *last &= !0u64 << (64 - r);
        }
    }
}

/// Incremental MSB-first bit packer.
#[derive(Debug, Clone)]
pub struct BitWriter {
    words: Vec<u64>,
    len: usize,
    origin: BitOrigin,
}

impl BitWriter {
    pub fn new(origin: BitOrigin) -> Self {
        BitWriter {
            words: Vec::new(),
            len: 0,
            origin,
        }
    }

    pub fn with_capacity(bits: usize, origin: BitOrigin) -> Self {
        BitWriter {
            words: Vec::with_capacity(words_for(bits)),
            len: 0,
            origin,
        }
    }

    pub fn push_bit(&mut self, b: bool) {
        self.push_bits(b as u64, 1);
    }

    /// Appends the low `n` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 64);
        if n == 0 {
            return;
        }
        let v = if n == 64 { value } else { value & ((1u64 << n) - 1) };
        let used = (self.len % 64) as u32;
        if used == 0 {
            self.words.push(v << (64 - n));
        } else {
            let free = 64 - used;
            let last = self.words.last_mut().expect("used > 0 implies a word");
            if n <= free {
                *last |= v << (free - n);
            } else {
                *last |= v >> (n - free);
                self.words.push(v << (64 - (n - free)));
            }
        }
        self.len += n as usize;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn finish(self) -> BitBlock {
        BitBlock {
            words: self.words,
            len: self.len,
            origin: self.origin,
        }
    }
}
