//! MSB-first bit packing.

use alloc::vec::Vec;

/// Appends fields most-significant bit first; bytes fill big-endian.
#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Writes the low `width` bits of `value`.
    pub fn write(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        for k in (0..width).rev() {
            let bit = (value >> k) & 1;
            if self.bit_len.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if bit == 1 {
                let last = self.bytes.len() - 1;
                self.bytes[last] |= 0x80 >> (self.bit_len % 8);
            }
            self.bit_len += 1;
        }
    }

    pub fn write_zeros(&mut self, width: usize) {
        for _ in 0..width / 64 {
            self.write(0, 64);
        }
        self.write(0, (width % 64) as u32);
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    /// Bytes written so far, the last one zero-padded.
    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() * 8 - self.pos
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn read(&mut self, width: u32) -> Option<u64> {
        if width as usize > self.remaining() {
            return None;
        }
        let mut value = 0u64;
        for _ in 0..width {
            let bit = (self.bytes[self.pos / 8] >> (7 - self.pos % 8)) & 1;
            value = (value << 1) | u64::from(bit);
            self.pos += 1;
        }
        Some(value)
    }

    pub fn skip(&mut self, width: usize) -> Option<()> {
        if width > self.remaining() {
            return None;
        }
        self.pos += width;
        Some(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msb_first_packing() {
        let mut w = BitWriter::new();
        w.write(1, 1);
        w.write(0b01, 2);
        w.write(0xABCD, 16);
        assert_eq!(w.bit_len(), 19);
        let bytes = w.into_bytes();
        // 1 01 1010101111001101 -> 1011 0101 0111 1001 101(0 0000)
        assert_eq!(bytes, [0b1011_0101, 0b0111_1001, 0b1010_0000]);
        let mut r = BitReader::new(&bytes);
        assert_eq!(r.read(1), Some(1));
        assert_eq!(r.read(2), Some(1));
        assert_eq!(r.read(16), Some(0xABCD));
        assert_eq!(r.read(8), None);
    }
}
