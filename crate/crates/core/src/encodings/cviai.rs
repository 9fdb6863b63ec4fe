use alloc::vec::Vec;

use crate::sparsity::{EffectualMask, IneffCriterion};
use crate::tensor::{check_brick, ActTensor, Dims};
use crate::{Error, Result};

/// Masks plus only the effectual values, reached through an indirection
/// array with one pointer per `(x, y, ib)` brick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CviaiStore {
    pub(crate) dims: Dims,
    pub(crate) brick: usize,
    pub(crate) masks: Vec<EffectualMask>,
    pub(crate) packed: Vec<i16>,
    pub(crate) pointers: Vec<u32>,
}

impl CviaiStore {
    pub(crate) fn from_parts(dims: Dims, brick: usize, masks: Vec<EffectualMask>, packed: Vec<i16>) -> Result<Self> {
        let mut pointers = Vec::with_capacity(masks.len());
        let mut next = 0usize;
        for m in &masks {
            pointers.push(u32::try_from(next).map_err(|_| Error::format("CVIAI store too large"))?);
            next += m.count_ones();
        }
        if next != packed.len() {
            return Err(Error::format("CVIAI packed value count does not match masks"));
        }
        if packed.contains(&0) {
            return Err(Error::format("CVIAI stores a zero value"));
        }
        Ok(CviaiStore { dims, brick, masks, packed, pointers })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn brick(&self) -> usize {
        self.brick
    }

    pub fn brick_count(&self) -> usize {
        self.masks.len()
    }

    pub fn masks(&self) -> &[EffectualMask] {
        &self.masks
    }

    pub fn packed(&self) -> &[i16] {
        &self.packed
    }

    /// The indirection array, in storage order.
    pub fn pointers(&self) -> &[u32] {
        &self.pointers
    }

    /// `⌈log2(packed + 1)⌉`, wide enough to also address one past the end.
    pub fn pointer_bits(&self) -> u32 {
        pointer_bits(self.packed.len())
    }

    pub fn footprint_bits(&self) -> u64 {
        let bricks = self.masks.len() as u64;
        bricks * self.brick as u64 + self.packed.len() as u64 * 16 + bricks * u64::from(self.pointer_bits())
    }

    pub(crate) fn fetch_ordinal(&self, n: usize) -> Result<(EffectualMask, &[i16])> {
        let mask = *self
            .masks
            .get(n)
            .ok_or(Error::OutOfBounds { what: "brick", index: n, limit: self.masks.len() })?;
        let start = self.pointers[n] as usize;
        let end = start + mask.count_ones();
        let values = self
            .packed
            .get(start..end)
            .ok_or_else(|| Error::format("CVIAI pointer past packed values"))?;
        Ok((mask, values))
    }
}

pub(crate) fn pointer_bits(packed: usize) -> u32 {
    super::offset_bits(packed + 1)
}

pub fn encode_cviai(acts: &ActTensor, crit: IneffCriterion, brick: usize) -> Result<CviaiStore> {
    check_brick(brick)?;
    let dims = acts.dims();
    if !dims.depth.is_multiple_of(brick) {
        return Err(Error::config("tensor depth is not a multiple of the brick size"));
    }
    let mut masks = Vec::with_capacity(dims.len() / brick);
    let mut packed = Vec::new();
    for chunk in acts.values().chunks(brick) {
        let mask = EffectualMask::of_values(chunk, crit);
        packed.extend(mask.iter_ones().map(|j| chunk[j]));
        masks.push(mask);
    }
    CviaiStore::from_parts(dims, brick, masks, packed)
}

/// Mask and packed effectual values of brick `(x, y, ib)`.
pub fn fetch_brick_cviai(store: &CviaiStore, x: usize, y: usize, brick_index: usize) -> Result<(EffectualMask, &[i16])> {
    let d = store.dims;
    let columns = d.depth / store.brick;
    if x >= d.x {
        return Err(Error::OutOfBounds { what: "x", index: x, limit: d.x });
    }
    if y >= d.y {
        return Err(Error::OutOfBounds { what: "y", index: y, limit: d.y });
    }
    if brick_index >= columns {
        return Err(Error::OutOfBounds { what: "brick", index: brick_index, limit: columns });
    }
    store.fetch_ordinal((y * d.x + x) * columns + brick_index)
}
