use alloc::vec::Vec;

use super::{effectual_pairs, expand_pairs, offset_bits, BitReader, BitWriter, Pair};
use crate::sparsity::IneffCriterion;
use crate::tensor::Brick;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoePayload {
    /// Flag 0: all B values verbatim, nothing skippable.
    Raw(Vec<i16>),
    /// Flag 1: `(offset, value)` pairs of the effectual values.
    Encoded(Vec<Pair>),
}

/// Raw-or-encoded brick in a fixed `1 + B·16`-bit container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoeBrick {
    pub brick: usize,
    pub payload: RoePayload,
}

impl RoeBrick {
    pub fn flag(&self) -> bool {
        matches!(self.payload, RoePayload::Encoded(_))
    }

    pub fn container_bits(&self) -> usize {
        1 + self.brick * 16
    }

    /// Bits actually occupied inside the container.
    pub fn used_bits(&self) -> usize {
        self.used_bits_with_offset_width(offset_bits(self.brick) as usize)
    }

    /// Occupied bits when each offset is charged `offset_width` bits.
    pub fn used_bits_with_offset_width(&self, offset_width: usize) -> usize {
        match &self.payload {
            RoePayload::Raw(_) => self.container_bits(),
            RoePayload::Encoded(pairs) => 1 + pairs.len() * (16 + offset_width),
        }
    }

    pub fn write_bits(&self, w: &mut BitWriter) {
        let start = w.bit_len();
        match &self.payload {
            RoePayload::Raw(values) => {
                w.write(0, 1);
                for &v in values {
                    w.write(u64::from(v as u16), 16);
                }
            }
            RoePayload::Encoded(pairs) => {
                w.write(1, 1);
                let ob = offset_bits(self.brick);
                for p in pairs {
                    w.write(u64::from(p.offset), ob);
                    w.write(u64::from(p.value as u16), 16);
                }
            }
        }
        let used = w.bit_len() - start;
        w.write_zeros(self.container_bits() - used);
    }

    pub fn read_bits(r: &mut BitReader<'_>, brick: usize) -> Result<Self> {
        let truncated = || Error::format("truncated RoE container");
        let flag = r.read(1).ok_or_else(truncated)?;
        let payload_bits = brick * 16;
        if flag == 0 {
            let mut values = Vec::with_capacity(brick);
            for _ in 0..brick {
                values.push(r.read(16).ok_or_else(truncated)? as u16 as i16);
            }
            return Ok(RoeBrick { brick, payload: RoePayload::Raw(values) });
        }
        let ob = offset_bits(brick) as usize;
        let pair_bits = 16 + ob;
        let mut consumed = 0;
        let mut pairs: Vec<Pair> = Vec::new();
        let mut padding = false;
        while consumed + pair_bits <= payload_bits {
            let offset = r.read(ob as u32).ok_or_else(truncated)?;
            let value = r.read(16).ok_or_else(truncated)? as u16 as i16;
            consumed += pair_bits;
            if value == 0 {
                padding = true;
                continue;
            }
            if padding || offset as usize >= brick || pairs.last().is_some_and(|p| u64::from(p.offset) >= offset) {
                return Err(Error::format("malformed RoE pairs"));
            }
            pairs.push(Pair::new(offset as u8, value));
        }
        r.skip(payload_bits - consumed).ok_or_else(truncated)?;
        Ok(RoeBrick { brick, payload: RoePayload::Encoded(pairs) })
    }

    pub fn decode(&self) -> Brick {
        match &self.payload {
            RoePayload::Raw(values) => Brick::new(values.clone()),
            RoePayload::Encoded(pairs) => Brick::new(expand_pairs(pairs, self.brick)),
        }
    }
}

/// Encodes when `k·(16 + ⌈log2 B⌉) ≤ B·16`, otherwise stores the brick raw
/// with its ineffectual values zeroed.
pub fn encode_roe(brick: &Brick, crit: IneffCriterion) -> RoeBrick {
    let b = brick.len();
    let pairs = effectual_pairs(&brick.values, crit);
    let fits = pairs.len() * (16 + offset_bits(b) as usize) <= b * 16;
    let payload = if fits {
        RoePayload::Encoded(pairs)
    } else {
        RoePayload::Raw(expand_pairs(&pairs, b))
    };
    RoeBrick { brick: b, payload }
}

pub fn decode_roe(encoded: &RoeBrick) -> Brick {
    encoded.decode()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sparse_brick_is_encoded() {
        let r = encode_roe(&Brick::new(vec![1, 2, 0, 0]), IneffCriterion::Zero);
        assert!(r.flag());
        assert_eq!(r.payload, RoePayload::Encoded(vec![Pair::new(0, 1), Pair::new(1, 2)]));
        assert_eq!(r.container_bits(), 65);
        assert_eq!(r.used_bits(), 1 + 2 * 18);
        assert_eq!(r.used_bits_with_offset_width(4), 41);
    }

    #[test]
    fn dense_brick_is_raw() {
        let r = encode_roe(&Brick::new(vec![2, 1, 3, 4]), IneffCriterion::Zero);
        assert!(!r.flag());
        assert_eq!(r.used_bits(), 65);
        let mut w = BitWriter::new();
        r.write_bits(&mut w);
        assert_eq!(w.bit_len(), 65);
        assert_eq!(decode_roe(&r).values, [2, 1, 3, 4]);
    }

    #[test]
    fn fit_boundary() {
        // B=16: 16·16 = 256 payload bits, 20 bits per pair → at most 12 pairs
        let mut values = vec![0i16; 16];
        for v in values.iter_mut().take(12) {
            *v = 5;
        }
        assert!(encode_roe(&Brick::new(values.clone()), IneffCriterion::Zero).flag());
        values[12] = 5;
        assert!(!encode_roe(&Brick::new(values), IneffCriterion::Zero).flag());
        // B=8: 128 payload bits, 19 bits per pair → 6 pairs; B=1: 16 ≤ 16 ties encode
        assert!(encode_roe(&Brick::new(vec![1]), IneffCriterion::Zero).flag());
    }

    #[test]
    fn all_zero_encodes_empty() {
        let r = encode_roe(&Brick::new(vec![0; 4]), IneffCriterion::Zero);
        assert_eq!(r.payload, RoePayload::Encoded(vec![]));
    }

    #[test]
    fn bits_roundtrip_both_modes() {
        for values in [vec![0, 0, -7, 0, 0, 0, 0, 9], vec![1, 2, 3, 4, 5, 6, 7, 8]] {
            let r = encode_roe(&Brick::new(values), IneffCriterion::Zero);
            let mut w = BitWriter::new();
            r.write_bits(&mut w);
            assert_eq!(w.bit_len(), r.container_bits());
            let bytes = w.into_bytes();
            assert_eq!(RoeBrick::read_bits(&mut BitReader::new(&bytes), 8).unwrap(), r);
        }
    }
}
