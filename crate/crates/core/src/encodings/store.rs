//! Byte-stream form of an [`EncodedTensor`].
//!
//! Header, all integers big-endian:
//!
//! ```text
//! magic "CNVE" | version u8 | format u8 | brick u8 | criterion kind u8 | criterion param u16
//! | x u32 | y u32 | depth u32 | logical depth u32 | [CVIAI only: packed count u32]
//! ```
//!
//! The body is the bricks' containers in storage order, packed MSB-first and
//! zero-padded to a whole byte. CVIAI bodies hold every mask, then every
//! indirection pointer, then the packed values.

use alloc::format;
use alloc::vec::Vec;

use super::{
    cviai::CviaiStore, BitReader, BitWriter, EncodedBody, EncodedTensor, Format, RoeBrick, ViaiBrick, ZfnafBrick,
};
use crate::sparsity::{BitMask, EffectualMask, IneffCriterion};
use crate::tensor::Dims;
use crate::{Error, Result};

pub const STORE_MAGIC: [u8; 4] = *b"CNVE";
pub const STORE_VERSION: u8 = 1;

pub fn to_bytes(tensor: &EncodedTensor) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&STORE_MAGIC);
    out.push(STORE_VERSION);
    out.push(tensor.format().tag());
    out.push(tensor.brick() as u8);
    let (kind, param) = tensor.criterion().tag();
    out.push(kind);
    out.extend_from_slice(&param.to_be_bytes());
    let d = tensor.dims();
    for v in [d.x, d.y, d.depth, tensor.logical_depth()] {
        out.extend_from_slice(&(v as u32).to_be_bytes());
    }
    let mut w = BitWriter::new();
    match tensor.body() {
        EncodedBody::Zfnaf(bricks) => bricks.iter().for_each(|b| b.write_bits(&mut w)),
        EncodedBody::Roe(bricks) => bricks.iter().for_each(|b| b.write_bits(&mut w)),
        EncodedBody::Viai(bricks) => bricks.iter().for_each(|b| b.write_bits(&mut w)),
        EncodedBody::Cviai(store) => {
            out.extend_from_slice(&(store.packed().len() as u32).to_be_bytes());
            for m in store.masks() {
                for j in 0..m.len() {
                    w.write(u64::from(m.get(j)), 1);
                }
            }
            let width = store.pointer_bits();
            for &p in store.pointers() {
                w.write(u64::from(p), width);
            }
            for &v in store.packed() {
                w.write(u64::from(v as u16), 16);
            }
        }
    }
    out.extend_from_slice(&w.into_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::format("truncated store header"))?;
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<EncodedTensor> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4).map_err(|_| Error::format("bad magic"))? != STORE_MAGIC {
        return Err(Error::format("bad magic"));
    }
    let version = c.u8()?;
    if version != STORE_VERSION {
        return Err(Error::format(format!("unsupported store version {version}")));
    }
    let format = Format::from_tag(c.u8()?)?;
    let brick = usize::from(c.u8()?);
    let kind = c.u8()?;
    let criterion = IneffCriterion::from_tag(kind, c.u16()?)?;
    let dims = Dims::new(c.u32()?, c.u32()?, c.u32()?);
    let logical_depth = c.u32()?;
    if brick == 0 || brick > crate::tensor::MAX_BRICK || !dims.depth.is_multiple_of(brick) {
        return Err(Error::format(format!("invalid brick size {brick} for depth {}", dims.depth)));
    }
    let bricks = dims
        .x
        .checked_mul(dims.y)
        .and_then(|v| v.checked_mul(dims.depth / brick))
        .ok_or_else(|| Error::format("dimensions overflow"))?;
    let packed_count = if format == Format::Cviai { Some(c.u32()?) } else { None };
    let mut r = BitReader::new(&bytes[c.pos..]);
    let body = match format {
        Format::Raw => return Err(Error::format("raw tensors are not stored in this format")),
        Format::Zfnaf => EncodedBody::Zfnaf(
            (0..bricks).map(|_| ZfnafBrick::read_bits(&mut r, brick)).collect::<Result<_>>()?,
        ),
        Format::Roe => EncodedBody::Roe((0..bricks).map(|_| RoeBrick::read_bits(&mut r, brick)).collect::<Result<_>>()?),
        Format::Viai => EncodedBody::Viai(
            (0..bricks).map(|_| ViaiBrick::read_bits(&mut r, brick)).collect::<Result<_>>()?,
        ),
        Format::Cviai => {
            let packed_count = packed_count.unwrap_or(0);
            let truncated = || Error::format("truncated CVIAI body");
            let mut masks = Vec::with_capacity(bricks);
            for _ in 0..bricks {
                let mut m = BitMask::zeros(brick);
                for j in 0..brick {
                    m.set(j, r.read(1).ok_or_else(truncated)? == 1);
                }
                masks.push(EffectualMask(m));
            }
            let width = super::cviai::pointer_bits(packed_count);
            let mut pointers = Vec::with_capacity(bricks);
            for _ in 0..bricks {
                pointers.push(r.read(width).ok_or_else(truncated)? as u32);
            }
            let mut packed = Vec::with_capacity(packed_count);
            for _ in 0..packed_count {
                packed.push(r.read(16).ok_or_else(truncated)? as u16 as i16);
            }
            let store = CviaiStore::from_parts(dims, brick, masks, packed)?;
            if store.pointers() != pointers.as_slice() {
                return Err(Error::format("CVIAI indirection array inconsistent with masks"));
            }
            EncodedBody::Cviai(store)
        }
    };
    if r.remaining() >= 8 {
        return Err(Error::format("trailing bytes after store body"));
    }
    EncodedTensor::from_parts(dims, logical_depth, brick, criterion, body)
}
