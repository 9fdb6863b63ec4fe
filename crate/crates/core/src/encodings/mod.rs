//! Storage formats for activation tensors that make ineffectual values
//! skippable, and their exact memory footprints.
//!
//! | format | container per brick (bits)      |
//! |--------|---------------------------------|
//! | raw    | `B·16`                          |
//! | ZFNAf  | `B·(16 + ⌈log2 B⌉)`             |
//! | RoE    | `1 + B·16`                      |
//! | VIAI   | `B + B·16`                      |
//! | CVIAI  | `B + 16·k + ptr` (variable)     |
//!
//! Containers are packed MSB-first with fields in declaration order.

mod bits;
mod cviai;
mod footprint;
mod roe;
mod store;
mod viai;
mod zfnaf;

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use bits::{BitReader, BitWriter};
pub use cviai::{encode_cviai, fetch_brick_cviai, CviaiStore};
pub use footprint::{footprint_bits, footprint_from_counts, FootprintReport};
pub use roe::{decode_roe, encode_roe, RoeBrick, RoePayload};
pub use store::{from_bytes, to_bytes, STORE_MAGIC, STORE_VERSION};
pub use viai::{decode_viai, encode_viai, ViaiBrick};
pub use zfnaf::{decode_zfnaf, encode_zfnaf, ZfnafBrick};

use crate::sparsity::{EffectualMask, IneffCriterion};
use crate::tensor::{check_brick, ActTensor, Brick, BrickCoord, Dims};
use crate::{Error, Result};

/// Bits needed to address a position inside a brick: `⌈log2 B⌉`.
pub const fn offset_bits(brick: usize) -> u32 {
    if brick <= 1 {
        0
    } else {
        usize::BITS - (brick - 1).leading_zeros()
    }
}

/// An effectual value and its position inside the brick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pair {
    pub offset: u8,
    pub value: i16,
}

impl Pair {
    pub const fn new(offset: u8, value: i16) -> Self {
        Pair { offset, value }
    }
}

/// Effectual positions of `values` in ascending order.
pub(crate) fn effectual_pairs(values: &[i16], crit: IneffCriterion) -> Vec<Pair> {
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| crit.is_effectual(i64::from(v)))
        .map(|(j, &v)| Pair::new(j as u8, v))
        .collect()
}

/// Expands pairs into a dense brick of `len` values.
pub(crate) fn expand_pairs(pairs: &[Pair], len: usize) -> Vec<i16> {
    let mut values = alloc::vec![0; len];
    for p in pairs {
        values[usize::from(p.offset)] = p.value;
    }
    values
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    Raw,
    Zfnaf,
    Roe,
    Viai,
    Cviai,
}

impl Format {
    pub const ALL: [Format; 5] = [Format::Raw, Format::Zfnaf, Format::Roe, Format::Viai, Format::Cviai];

    pub fn name(&self) -> &'static str {
        match self {
            Format::Raw => "raw",
            Format::Zfnaf => "zfnaf",
            Format::Roe => "roe",
            Format::Viai => "viai",
            Format::Cviai => "cviai",
        }
    }

    pub(crate) fn tag(&self) -> u8 {
        match self {
            Format::Raw => 0,
            Format::Zfnaf => 1,
            Format::Roe => 2,
            Format::Viai => 3,
            Format::Cviai => 4,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        Format::ALL
            .into_iter()
            .find(|f| f.tag() == tag)
            .ok_or_else(|| Error::format(format!("unknown format tag {tag}")))
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Format::ALL
            .into_iter()
            .find(|f| f.name() == lower)
            .ok_or_else(|| Error::validation(format!("unknown encoding format '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncodedBody {
    Zfnaf(Vec<ZfnafBrick>),
    Roe(Vec<RoeBrick>),
    Viai(Vec<ViaiBrick>),
    Cviai(CviaiStore),
}

/// An activation tensor stored in one of the sparse formats.
///
/// Bricks are kept in storage order (brick index fastest, then x, then y).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedTensor {
    dims: Dims,
    logical_depth: usize,
    brick: usize,
    criterion: IneffCriterion,
    body: EncodedBody,
}

impl EncodedTensor {
    pub fn encode(format: Format, acts: &ActTensor, crit: IneffCriterion, brick: usize) -> Result<Self> {
        check_brick(brick)?;
        let dims = acts.dims();
        if !dims.depth.is_multiple_of(brick) {
            return Err(Error::config(format!(
                "tensor depth {} is not a multiple of brick size {brick}",
                dims.depth
            )));
        }
        let bricks = || acts.brick_coords(brick).map(|c| Brick {
            base: c,
            values: acts.brick_values(c.x, c.y, c.i / brick, brick).expect("coordinate in range").to_vec(),
        });
        let body = match format {
            Format::Raw => return Err(Error::validation("raw is not an encoded format")),
            Format::Zfnaf => EncodedBody::Zfnaf(bricks().map(|b| encode_zfnaf(&b, crit)).collect()),
            Format::Roe => EncodedBody::Roe(bricks().map(|b| encode_roe(&b, crit)).collect()),
            Format::Viai => EncodedBody::Viai(bricks().map(|b| encode_viai(&b, crit)).collect()),
            Format::Cviai => EncodedBody::Cviai(encode_cviai(acts, crit, brick)?),
        };
        Ok(EncodedTensor {
            dims,
            logical_depth: acts.logical_depth(),
            brick,
            criterion: crit,
            body,
        })
    }

    pub(crate) fn from_parts(
        dims: Dims,
        logical_depth: usize,
        brick: usize,
        criterion: IneffCriterion,
        body: EncodedBody,
    ) -> Result<Self> {
        check_brick(brick)?;
        if !dims.depth.is_multiple_of(brick) || logical_depth > dims.depth {
            return Err(Error::format("encoded tensor depth inconsistent with brick size"));
        }
        let expected = dims.x * dims.y * dims.depth / brick;
        let found = match &body {
            EncodedBody::Zfnaf(b) => b.len(),
            EncodedBody::Roe(b) => b.len(),
            EncodedBody::Viai(b) => b.len(),
            EncodedBody::Cviai(s) => s.brick_count(),
        };
        if found != expected {
            return Err(Error::format(format!("expected {expected} bricks, found {found}")));
        }
        Ok(EncodedTensor {
            dims,
            logical_depth,
            brick,
            criterion,
            body,
        })
    }

    pub fn format(&self) -> Format {
        match self.body {
            EncodedBody::Zfnaf(_) => Format::Zfnaf,
            EncodedBody::Roe(_) => Format::Roe,
            EncodedBody::Viai(_) => Format::Viai,
            EncodedBody::Cviai(_) => Format::Cviai,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn logical_depth(&self) -> usize {
        self.logical_depth
    }

    pub fn brick(&self) -> usize {
        self.brick
    }

    pub fn criterion(&self) -> IneffCriterion {
        self.criterion
    }

    pub fn body(&self) -> &EncodedBody {
        &self.body
    }

    fn ordinal(&self, coord: BrickCoord) -> Result<usize> {
        if coord.x >= self.dims.x {
            return Err(Error::OutOfBounds { what: "x", index: coord.x, limit: self.dims.x });
        }
        if coord.y >= self.dims.y {
            return Err(Error::OutOfBounds { what: "y", index: coord.y, limit: self.dims.y });
        }
        if !coord.i.is_multiple_of(self.brick) || coord.i >= self.dims.depth {
            return Err(Error::OutOfBounds { what: "brick", index: coord.i, limit: self.dims.depth });
        }
        let columns = self.dims.depth / self.brick;
        Ok((coord.y * self.dims.x + coord.x) * columns + coord.i / self.brick)
    }

    /// Loads the brick at `coord` as the dispatcher's brick buffer sees it:
    /// dense values plus the vector of positions to broadcast.
    ///
    /// RoE bricks stored raw cannot be skipped, so every position is pending.
    pub fn load_brick(&self, coord: BrickCoord, values: &mut [i16]) -> Result<EffectualMask> {
        let n = self.ordinal(coord)?;
        let b = self.brick;
        let values = &mut values[..b];
        match &self.body {
            EncodedBody::Zfnaf(bricks) => {
                values.fill(0);
                let mut mask = EffectualMask(crate::sparsity::BitMask::zeros(b));
                for p in &bricks[n].pairs {
                    values[usize::from(p.offset)] = p.value;
                    mask.0.set(usize::from(p.offset), true);
                }
                Ok(mask)
            }
            EncodedBody::Roe(bricks) => match &bricks[n].payload {
                RoePayload::Raw(raw) => {
                    values.copy_from_slice(raw);
                    Ok(EffectualMask(crate::sparsity::BitMask::ones(b)))
                }
                RoePayload::Encoded(pairs) => {
                    values.fill(0);
                    let mut mask = EffectualMask(crate::sparsity::BitMask::zeros(b));
                    for p in pairs {
                        values[usize::from(p.offset)] = p.value;
                        mask.0.set(usize::from(p.offset), true);
                    }
                    Ok(mask)
                }
            },
            EncodedBody::Viai(bricks) => {
                values.copy_from_slice(&bricks[n].values);
                Ok(bricks[n].mask)
            }
            EncodedBody::Cviai(store) => {
                let (mask, packed) = store.fetch_ordinal(n)?;
                values.fill(0);
                for (j, &v) in mask.iter_ones().zip(packed) {
                    values[j] = v;
                }
                Ok(mask)
            }
        }
    }

    /// Decodes back to a dense tensor with ineffectual positions zeroed.
    pub fn decode(&self) -> ActTensor {
        let mut out = ActTensor::zeros(self.dims);
        let b = self.brick;
        let coords: Vec<BrickCoord> = out.brick_coords(b).collect();
        let mut buf = alloc::vec![0i16; b];
        for c in coords {
            let mask = self.load_brick(c, &mut buf).expect("coordinate in range");
            for (j, &v) in buf.iter().enumerate() {
                out.set(c.x, c.y, c.i + j, if mask.get(j) { v } else { 0 });
            }
        }
        out
    }

    /// Sum of container sizes, i.e. the body size of the byte store.
    pub fn body_bits(&self) -> u64 {
        match &self.body {
            EncodedBody::Zfnaf(b) => b.iter().map(|z| z.container_bits() as u64).sum(),
            EncodedBody::Roe(b) => b.iter().map(|r| r.container_bits() as u64).sum(),
            EncodedBody::Viai(b) => b.iter().map(|v| v.container_bits() as u64).sum(),
            EncodedBody::Cviai(s) => s.footprint_bits(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_widths() {
        assert_eq!(offset_bits(1), 0);
        assert_eq!(offset_bits(2), 1);
        assert_eq!(offset_bits(4), 2);
        assert_eq!(offset_bits(5), 3);
        assert_eq!(offset_bits(16), 4);
        assert_eq!(offset_bits(64), 6);
    }

    #[test]
    fn format_names_parse() {
        for f in Format::ALL {
            assert_eq!(f.name().parse::<Format>().unwrap(), f);
            assert_eq!(Format::from_tag(f.tag()).unwrap(), f);
        }
        assert!("rle".parse::<Format>().is_err());
    }
}
