//! Little-endian binary containers with an 8-byte magic, a format version and
//! a trailing SHA-256 of everything before it.

use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};

pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(magic: &[u8; 8], version: u32) -> Self {
        let mut e = Self { buf: magic.to_vec() };
        e.u32(version);
        e
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, v: impl IntoIterator<Item = f64>) {
        for x in v {
            self.f64(x);
        }
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v);
    }

    pub fn finish(mut self, w: &mut impl Write) -> Result<()> {
        let digest = Sha256::digest(&self.buf);
        self.buf.extend_from_slice(&digest);
        w.write_all(&self.buf)?;
        Ok(())
    }
}

pub(crate) struct Decoder {
    buf: Vec<u8>,
    at: usize,
    end: usize,
}

impl Decoder {
    /// Reads the whole stream, checks magic, version and digest.
    pub fn new(r: &mut impl Read, magic: &[u8; 8], version: u32) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() < 8 + 4 + 32 {
            return Err(Error::Format("file too short".into()));
        }
        if &buf[..8] != magic {
            return Err(Error::Format(format!("bad magic, expected {}", String::from_utf8_lossy(magic))));
        }
        let end = buf.len() - 32;
        if Sha256::digest(&buf[..end]).as_slice() != &buf[end..] {
            return Err(Error::Format("checksum mismatch".into()));
        }
        let mut d = Self { buf, at: 8, end };
        let v = d.u32()?;
        if v != version {
            return Err(Error::Format(format!("unsupported version {v}, expected {version}")));
        }
        Ok(d)
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.at + n > self.end {
            return Err(Error::Format("unexpected end of data".into()));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n)
            .ok()
            .filter(|&n| n <= self.end)
            .ok_or_else(|| Error::Format(format!("implausible length {n}")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n > (self.end - self.at) / 8 {
            return Err(Error::Format("unexpected end of data".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.len()?;
        Ok(self.take(n)?.to_vec())
    }

    pub fn finish(self) -> Result<()> {
        if self.at != self.end {
            return Err(Error::Format(format!("{} trailing bytes", self.end - self.at)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let mut e = Encoder::new(b"TESTTEST", 3);
        e.u8(7);
        e.f64s([1.5, -2.0]);
        e.bytes(b"abc");
        let mut out = Vec::new();
        e.finish(&mut out).unwrap();
        let mut d = Decoder::new(&mut out.as_slice(), b"TESTTEST", 3).unwrap();
        assert_eq!(d.u8().unwrap(), 7);
        assert_eq!(d.f64s(2).unwrap(), vec![1.5, -2.0]);
        assert_eq!(d.bytes().unwrap(), b"abc");
        d.finish().unwrap();

        assert!(Decoder::new(&mut out.as_slice(), b"TESTTEST", 4).is_err());
        assert!(Decoder::new(&mut out.as_slice(), b"OTHEROTH", 3).is_err());
        let mut bad = out.clone();
        bad[13] ^= 1;
        assert!(Decoder::new(&mut bad.as_slice(), b"TESTTEST", 3).is_err());
        assert!(Decoder::new(&mut &out[..20], b"TESTTEST", 3).is_err());
    }
}
