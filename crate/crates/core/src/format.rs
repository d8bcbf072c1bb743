//! On-disk formats: key-value text reports, the QRB1 sample stream and
//! two-column plot data.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::acquisition::AdcConfig;
use crate::error::{Error, Result};

/// Ordered `key=value` document. Blank lines and lines starting with `#`
/// are ignored; duplicate keys are rejected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<(String, String)>,
}

fn kv_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "key-value",
        reason: reason.into(),
    }
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = KvDoc::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| kv_err(format!("line {}: expected key=value", lineno + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(kv_err(format!("line {}: empty key", lineno + 1)));
            }
            if doc.get(k).is_some() {
                return Err(kv_err(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
            doc.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(doc)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Inserts or replaces `key`.
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl std::fmt::Display) {
        self.set(key, value.to_string());
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        let i = self.entries.iter().position(|(k, _)| k == key)?;
        Some(self.entries.remove(i).1)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| parse_f64(v).map_err(|e| kv_err(format!("`{key}`: {e}"))))
            .transpose()
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.get_f64(key)?
            .ok_or_else(|| kv_err(format!("missing key `{key}`")))
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| parse_count(v).map_err(|e| kv_err(format!("`{key}`: {e}"))))
            .transpose()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

/// Parses a float, also accepting powers of two written as `2^-100`.
pub fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    if let Some(exp) = s.strip_prefix("2^") {
        let e: i32 = exp
            .parse()
            .map_err(|_| format!("bad exponent in `{s}`"))?;
        return Ok(2f64.powi(e));
    }
    s.parse::<f64>().map_err(|_| format!("not a number: `{s}`"))
}

/// Parses a nonnegative integer; exact scientific notation such as `1e8` is
/// accepted.
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("not a count: `{s}`"))?;
    if f >= 0.0 && f.fract() == 0.0 && f < 2f64.powi(63) {
        Ok(f as u64)
    } else {
        Err(format!("not a count: `{s}`"))
    }
}

pub const QRB1_MAGIC: [u8; 4] = *b"QRB1";
pub const QRB1_VERSION: u16 = 1;
pub const QRB1_HEADER_LEN: usize = 32;

/// Fixed 32-byte QRB1 header. All fields little-endian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Qrb1Header {
    pub version: u16,
    pub bits: u16,
    pub sample_rate: f64,
    pub full_scale: f64,
    pub lo_power: f64,
}

fn qrb_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "QRB1",
        reason: reason.into(),
    }
}

impl Qrb1Header {
    pub fn new(adc: &AdcConfig, lo_power: f64) -> Self {
        Qrb1Header {
            version: QRB1_VERSION,
            bits: adc.bits as u16,
            sample_rate: adc.sample_rate,
            full_scale: adc.full_scale,
            lo_power,
        }
    }

    pub fn adc(&self) -> Result<AdcConfig> {
        AdcConfig::new(self.sample_rate, self.bits as u32, self.full_scale)
    }

    pub fn encode(&self) -> [u8; QRB1_HEADER_LEN] {
        let mut h = [0u8; QRB1_HEADER_LEN];
        h[0..4].copy_from_slice(&QRB1_MAGIC);
        h[4..6].copy_from_slice(&self.version.to_le_bytes());
        h[6..8].copy_from_slice(&self.bits.to_le_bytes());
        h[8..16].copy_from_slice(&self.sample_rate.to_le_bytes());
        h[16..24].copy_from_slice(&self.full_scale.to_le_bytes());
        h[24..32].copy_from_slice(&self.lo_power.to_le_bytes());
        h
    }

    pub fn decode(h: &[u8; QRB1_HEADER_LEN]) -> Result<Self> {
        if h[0..4] != QRB1_MAGIC {
            return Err(qrb_err("bad magic"));
        }
        let f = |r: std::ops::Range<usize>| f64::from_le_bytes(h[r].try_into().unwrap());
        let hdr = Qrb1Header {
            version: u16::from_le_bytes([h[4], h[5]]),
            bits: u16::from_le_bytes([h[6], h[7]]),
            sample_rate: f(8..16),
            full_scale: f(16..24),
            lo_power: f(24..32),
        };
        if hdr.version != QRB1_VERSION {
            return Err(qrb_err(format!("unsupported version {}", hdr.version)));
        }
        hdr.adc()?;
        if !(hdr.lo_power.is_finite() && hdr.lo_power >= 0.0) {
            return Err(qrb_err(format!("bad lo_power {}", hdr.lo_power)));
        }
        Ok(hdr)
    }
}

pub struct Qrb1Writer<W: Write> {
    inner: W,
    header: Qrb1Header,
    pairs: u64,
    buf: Vec<u8>,
}

impl<W: Write> Qrb1Writer<W> {
    pub fn new(mut inner: W, header: Qrb1Header) -> std::io::Result<Self> {
        inner.write_all(&header.encode())?;
        Ok(Qrb1Writer {
            inner,
            header,
            pairs: 0,
            buf: Vec::new(),
        })
    }

    pub fn header(&self) -> &Qrb1Header {
        &self.header
    }

    /// Appends I/Q code pairs. Slices must have equal length.
    pub fn write_codes(&mut self, codes_i: &[i16], codes_q: &[i16]) -> std::io::Result<()> {
        assert_eq!(codes_i.len(), codes_q.len(), "I/Q length mismatch");
        self.buf.clear();
        self.buf.reserve(codes_i.len() * 4);
        for (&i, &q) in codes_i.iter().zip(codes_q) {
            self.buf.extend_from_slice(&i.to_le_bytes());
            self.buf.extend_from_slice(&q.to_le_bytes());
        }
        self.inner.write_all(&self.buf)?;
        self.pairs += codes_i.len() as u64;
        Ok(())
    }

    pub fn pairs_written(&self) -> u64 {
        self.pairs
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct Qrb1Reader<R: Read> {
    inner: R,
    header: Qrb1Header,
    min_code: i16,
    max_code: i16,
    buf: Vec<u8>,
}

impl<R: Read> Qrb1Reader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut h = [0u8; QRB1_HEADER_LEN];
        inner
            .read_exact(&mut h)
            .map_err(|e| qrb_err(format!("short header: {e}")))?;
        let header = Qrb1Header::decode(&h)?;
        let adc = header.adc()?;
        Ok(Qrb1Reader {
            inner,
            header,
            min_code: adc.min_code(),
            max_code: adc.max_code(),
            buf: Vec::new(),
        })
    }

    pub fn header(&self) -> &Qrb1Header {
        &self.header
    }

    /// Reads up to `max_pairs` code pairs; returns empty vectors at end of
    /// stream.
    pub fn read_pairs(&mut self, max_pairs: usize) -> Result<(Vec<i16>, Vec<i16>)> {
        self.buf.resize(max_pairs * 4, 0);
        let mut filled = 0;
        while filled < self.buf.len() {
            let n = self
                .inner
                .read(&mut self.buf[filled..])
                .map_err(|e| qrb_err(e.to_string()))?;
            if n == 0 {
                break;
            }
            filled += n;
        }
        if filled % 4 != 0 {
            return Err(qrb_err("truncated sample pair at end of stream"));
        }
        let mut ci = Vec::with_capacity(filled / 4);
        let mut cq = Vec::with_capacity(filled / 4);
        for chunk in self.buf[..filled].chunks_exact(4) {
            let i = i16::from_le_bytes([chunk[0], chunk[1]]);
            let q = i16::from_le_bytes([chunk[2], chunk[3]]);
            for c in [i, q] {
                if c < self.min_code || c > self.max_code {
                    return Err(qrb_err(format!(
                        "code {c} outside the {}-bit range",
                        self.header.bits
                    )));
                }
            }
            ci.push(i);
            cq.push(q);
        }
        Ok((ci, cq))
    }

    pub fn read_all(&mut self) -> Result<(Vec<i16>, Vec<i16>)> {
        let (mut ci, mut cq) = (Vec::new(), Vec::new());
        loop {
            let (i, q) = self.read_pairs(1 << 20)?;
            if i.is_empty() {
                return Ok((ci, cq));
            }
            ci.extend_from_slice(&i);
            cq.extend_from_slice(&q);
        }
    }
}

/// Two-column text for plotting, with optional `#` header lines.
pub fn two_column_text(header: &[String], rows: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    for (x, y) in rows {
        let _ = writeln!(out, "{x:e}\t{y:e}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_parse_and_errors() {
        let doc = KvDoc::parse("# hi\n\na = 1.5\nb=2^-3\n c=x=y\n").unwrap();
        assert_eq!(doc.get_f64("a").unwrap(), Some(1.5));
        assert_eq!(doc.get_f64("b").unwrap(), Some(0.125));
        assert_eq!(doc.get("c"), Some("x=y"));
        assert!(KvDoc::parse("a=1\na=2").is_err());
        assert!(KvDoc::parse("novalue").is_err());
        assert!(KvDoc::parse("=3").is_err());
        assert!(doc.require_f64("zzz").is_err());
        assert_eq!(parse_count("1e8").unwrap(), 100_000_000);
        assert!(parse_count("1.5").is_err());
    }

    #[test]
    fn qrb1_header_layout() {
        let adc = AdcConfig::new(1e10, 10, 0.25).unwrap();
        let h = Qrb1Header::new(&adc, 4.05e-3);
        let bytes = h.encode();
        assert_eq!(&bytes[0..4], b"QRB1");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 10);
        assert_eq!(f64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1e10);
        assert_eq!(Qrb1Header::decode(&bytes).unwrap(), h);
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(Qrb1Header::decode(&bad).is_err());
    }

    #[test]
    fn qrb1_stream_roundtrip_and_range_check() {
        let adc = AdcConfig::new(1e10, 10, 0.25).unwrap();
        let mut w = Qrb1Writer::new(Vec::new(), Qrb1Header::new(&adc, 1e-3)).unwrap();
        w.write_codes(&[0, -1, 511], &[-512, 3, 7]).unwrap();
        let bytes = w.finish().unwrap();
        assert_eq!(bytes.len(), 32 + 12);
        // interleaved I, Q little-endian
        assert_eq!(&bytes[32..36], &[0, 0, 0x00, 0xfe]);
        let mut r = Qrb1Reader::new(&bytes[..]).unwrap();
        assert_eq!(r.read_all().unwrap(), (vec![0, -1, 511], vec![-512, 3, 7]));

        let mut w = Qrb1Writer::new(Vec::new(), Qrb1Header::new(&adc, 1e-3)).unwrap();
        w.write_codes(&[600], &[0]).unwrap();
        let bytes = w.finish().unwrap();
        assert!(Qrb1Reader::new(&bytes[..]).unwrap().read_all().is_err());
        assert!(Qrb1Reader::new(&bytes[..33]).unwrap().read_all().is_err());
    }
}
