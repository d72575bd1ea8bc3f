//! Little-endian byte cursor and MSB-first bit packing shared by the file formats.

use crate::error::{Error, Result};

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                self.pos,
                format!("truncated while reading {what}: need {n} bytes, {} left", self.remaining()),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// Reads a u64 that must fit a `usize` and lie in `1..=max`.
    pub fn length(&mut self, what: &str, max: u64) -> Result<usize> {
        let at = self.pos;
        let v = self.u64(what)?;
        if v == 0 || v > max {
            return Err(Error::format(at, format!("{what} = {v} out of range 1..={max}")));
        }
        Ok(v as usize)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != magic {
            return Err(Error::format(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::format(self.pos, format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

/// Bits needed to store one integer in `0..n`, i.e. `ceil(log2 n)`.
pub fn index_bits(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Packs `values` at `bits` bits each, MSB-first, zero-padded to a whole byte.
pub(crate) fn pack_bits(values: &[usize], bits: u32, out: &mut Vec<u8>) {
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    for &v in values {
        for b in (0..bits).rev() {
            acc = (acc << 1) | ((v as u64 >> b) & 1);
            filled += 1;
            if filled == 8 {
                out.push(acc as u8);
                acc = 0;
                filled = 0;
            }
        }
    }
    if filled > 0 {
        out.push((acc << (8 - filled)) as u8);
    }
}

/// Inverse of [`pack_bits`]; `bytes` must hold exactly the packed block.
pub(crate) fn unpack_bits(bytes: &[u8], count: usize, bits: u32) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    let mut bit = 0usize;
    for _ in 0..count {
        let mut v = 0usize;
        for _ in 0..bits {
            let byte = bytes[bit / 8];
            v = (v << 1) | ((byte >> (7 - bit % 8)) & 1) as usize;
            bit += 1;
        }
        out.push(v);
    }
    out
}

pub fn packed_len(count: usize, bits: u32) -> usize {
    (count * bits as usize).div_ceil(8)
}
