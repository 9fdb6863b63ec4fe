use alloc::vec::Vec;

use super::{effectual_pairs, expand_pairs, offset_bits, BitReader, BitWriter, Pair};
use crate::sparsity::IneffCriterion;
use crate::tensor::Brick;
use crate::{Error, Result};

/// Zero-free brick: effectual `(value, offset)` pairs packed at the front
/// of a fixed `B·(16 + ⌈log2 B⌉)`-bit container, remainder zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZfnafBrick {
    pub brick: usize,
    pub pairs: Vec<Pair>,
}

impl ZfnafBrick {
    pub fn slot_bits(&self) -> usize {
        16 + offset_bits(self.brick) as usize
    }

    pub fn container_bits(&self) -> usize {
        self.brick * self.slot_bits()
    }

    /// Slot layout: value (16) then offset.
    pub fn write_bits(&self, w: &mut BitWriter) {
        let ob = offset_bits(self.brick);
        for p in &self.pairs {
            w.write(u64::from(p.value as u16), 16);
            w.write(u64::from(p.offset), ob);
        }
        w.write_zeros((self.brick - self.pairs.len()) * self.slot_bits());
    }

    /// Reads one container. A zero value marks padding: no criterion
    /// classifies zero as effectual.
    pub fn read_bits(r: &mut BitReader<'_>, brick: usize) -> Result<Self> {
        let ob = offset_bits(brick);
        let mut pairs = Vec::new();
        let mut padding = false;
        for _ in 0..brick {
            let value = r.read(16).ok_or_else(|| Error::format("truncated ZFNAf container"))? as u16 as i16;
            let offset = r.read(ob).ok_or_else(|| Error::format("truncated ZFNAf container"))?;
            if value == 0 {
                padding = true;
                continue;
            }
            if padding {
                return Err(Error::format("ZFNAf value after padding"));
            }
            if offset as usize >= brick || pairs.last().is_some_and(|p: &Pair| u64::from(p.offset) >= offset) {
                return Err(Error::format("ZFNAf offsets not strictly increasing"));
            }
            pairs.push(Pair::new(offset as u8, value));
        }
        Ok(ZfnafBrick { brick, pairs })
    }
}

pub fn encode_zfnaf(brick: &Brick, crit: IneffCriterion) -> ZfnafBrick {
    ZfnafBrick {
        brick: brick.len(),
        pairs: effectual_pairs(&brick.values, crit),
    }
}

pub fn decode_zfnaf(encoded: &ZfnafBrick) -> Brick {
    Brick::new(expand_pairs(&encoded.pairs, encoded.brick))
}
