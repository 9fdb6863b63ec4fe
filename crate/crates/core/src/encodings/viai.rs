use alloc::vec::Vec;

use super::{BitReader, BitWriter};
use crate::sparsity::{BitMask, EffectualMask, IneffCriterion};
use crate::tensor::Brick;
use crate::{Error, Result};

/// Values left in place plus a B-bit effectual mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViaiBrick {
    pub mask: EffectualMask,
    pub values: Vec<i16>,
}

impl ViaiBrick {
    pub fn container_bits(&self) -> usize {
        self.values.len() * 17
    }

    /// Mask (position 0 first), then the values.
    pub fn write_bits(&self, w: &mut BitWriter) {
        for j in 0..self.mask.len() {
            w.write(u64::from(self.mask.get(j)), 1);
        }
        for &v in &self.values {
            w.write(u64::from(v as u16), 16);
        }
    }

    pub fn read_bits(r: &mut BitReader<'_>, brick: usize) -> Result<Self> {
        let truncated = || Error::format("truncated VIAI container");
        let mut mask = BitMask::zeros(brick);
        for j in 0..brick {
            mask.set(j, r.read(1).ok_or_else(truncated)? == 1);
        }
        let mut values = Vec::with_capacity(brick);
        for _ in 0..brick {
            values.push(r.read(16).ok_or_else(truncated)? as u16 as i16);
        }
        Ok(ViaiBrick { mask: EffectualMask(mask), values })
    }
}

pub fn encode_viai(brick: &Brick, crit: IneffCriterion) -> ViaiBrick {
    ViaiBrick {
        mask: EffectualMask::of_values(&brick.values, crit),
        values: brick.values.clone(),
    }
}

pub fn decode_viai(encoded: &ViaiBrick) -> Brick {
    Brick::new(
        encoded
            .values
            .iter()
            .enumerate()
            .map(|(j, &v)| if encoded.mask.get(j) { v } else { 0 })
            .collect(),
    )
}
