use num_rational::Ratio;

use super::{cviai::pointer_bits, offset_bits, Format};
use crate::sparsity::IneffCriterion;
use crate::tensor::{check_brick, ActTensor};
use crate::{Error, Result};

/// Exact storage cost of a tensor in one format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FootprintReport {
    pub format: Format,
    pub brick: usize,
    pub bricks: u64,
    pub effectual: u64,
    pub total_bits: u64,
    /// `X·Y·I·16` for the (brick padded) tensor.
    pub raw_bits: u64,
}

impl FootprintReport {
    /// `(total - raw) / raw`, exact.
    pub fn overhead(&self) -> Ratio<i128> {
        if self.raw_bits == 0 {
            return Ratio::from_integer(0);
        }
        Ratio::new(
            i128::from(self.total_bits) - i128::from(self.raw_bits),
            i128::from(self.raw_bits),
        )
    }

    pub fn overhead_percent(&self) -> f64 {
        let r = self.overhead();
        *r.numer() as f64 * 100.0 / *r.denom() as f64
    }
}

/// Footprint from brick and effectual-value counts alone; every format's
/// size depends on nothing else.
pub fn footprint_from_counts(format: Format, bricks: u64, effectual: u64, brick: usize) -> FootprintReport {
    let b = brick as u64;
    let raw_bits = bricks * b * 16;
    let total_bits = match format {
        Format::Raw => raw_bits,
        Format::Zfnaf => bricks * b * (16 + u64::from(offset_bits(brick))),
        Format::Roe => bricks * (1 + b * 16),
        Format::Viai => bricks * (b + b * 16),
        Format::Cviai => {
            bricks * b + effectual * 16 + bricks * u64::from(pointer_bits(effectual as usize))
        }
    };
    FootprintReport {
        format,
        brick,
        bricks,
        effectual,
        total_bits,
        raw_bits,
    }
}

pub fn footprint_bits(format: Format, acts: &ActTensor, crit: IneffCriterion, brick: usize) -> Result<FootprintReport> {
    check_brick(brick)?;
    if !acts.dims().depth.is_multiple_of(brick) {
        return Err(Error::config("tensor depth is not a multiple of the brick size"));
    }
    let bricks = (acts.dims().len() / brick) as u64;
    let effectual = acts.values().iter().filter(|&&v| crit.is_effectual(i64::from(v))).count() as u64;
    Ok(footprint_from_counts(format, bricks, effectual, brick))
}
