//! Ineffectuality criteria and the per-brick bit vectors built from them.
//!
//! Polarity: [`EffectualMask`] bit `j` set means value `j` is *effectual*.
//! [`IsVector`] and [`IsProduct`] keep the weight-side convention where a set
//! bit means *ineffectual*, because the CanSkip predicate consumes them as is.
//! [`can_skip`] complements the activation mask at that boundary.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use crate::tensor::{check_brick, ActTensor, Brick, FilterSet, LayerConfig, WindowBrick};
use crate::{Error, Result};

/// Decides which values may be dropped.
///
/// A value `v` is ineffectual iff `|v| <= t` for `AbsThreshold(t)` (so
/// `Zero` is `AbsThreshold(0)`), or iff `|v| < 2^k` for
/// `PowerOfTwoThreshold(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum IneffCriterion {
    #[default]
    Zero,
    AbsThreshold(u16),
    PowerOfTwoThreshold(u8),
}

impl IneffCriterion {
    #[inline]
    pub fn is_ineffectual(&self, value: i64) -> bool {
        let magnitude = value.unsigned_abs();
        match *self {
            IneffCriterion::Zero => magnitude == 0,
            IneffCriterion::AbsThreshold(t) => magnitude <= u64::from(t),
            IneffCriterion::PowerOfTwoThreshold(k) => {
                // |v| < 2^k  <=>  no bit at position >= k is set
                k >= 64 || magnitude >> k == 0
            }
        }
    }

    #[inline]
    pub fn is_effectual(&self, value: i64) -> bool {
        !self.is_ineffectual(value)
    }

    /// Compact tag used by the store and report formats.
    pub fn tag(&self) -> (u8, u16) {
        match *self {
            IneffCriterion::Zero => (0, 0),
            IneffCriterion::AbsThreshold(t) => (1, t),
            IneffCriterion::PowerOfTwoThreshold(k) => (2, u16::from(k)),
        }
    }

    pub fn from_tag(kind: u8, param: u16) -> Result<Self> {
        match kind {
            0 => Ok(IneffCriterion::Zero),
            1 => Ok(IneffCriterion::AbsThreshold(param)),
            2 => u8::try_from(param)
                .map(IneffCriterion::PowerOfTwoThreshold)
                .map_err(|_| Error::format(format!("power-of-two exponent {param} too large"))),
            other => Err(Error::format(format!("unknown criterion tag {other}"))),
        }
    }
}

impl fmt::Display for IneffCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IneffCriterion::Zero => f.write_str("zero"),
            IneffCriterion::AbsThreshold(t) => write!(f, "abs:{t}"),
            IneffCriterion::PowerOfTwoThreshold(k) => write!(f, "pow2:{k}"),
        }
    }
}

impl FromStr for IneffCriterion {
    type Err = Error;

    /// Parses `zero`, `abs:<t>` or `pow2:<k>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("zero") {
            return Ok(IneffCriterion::Zero);
        }
        let bad = || Error::validation(format!("unknown criterion '{s}' (expected zero, abs:<t> or pow2:<k>)"));
        let (kind, param) = s.split_once(':').ok_or_else(bad)?;
        match kind.to_ascii_lowercase().as_str() {
            "abs" => param.parse().map(IneffCriterion::AbsThreshold).map_err(|_| bad()),
            "pow2" => match param.parse::<u8>() {
                Ok(k) if k <= 16 => Ok(IneffCriterion::PowerOfTwoThreshold(k)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

/// Fixed-length bit vector with position 0 shown leftmost.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BitMask {
    bits: u64,
    len: u8,
}

impl BitMask {
    fn low_bits(len: usize) -> u64 {
        if len >= 64 {
            u64::MAX
        } else {
            (1u64 << len) - 1
        }
    }

    pub fn zeros(len: usize) -> Self {
        debug_assert!(len <= 64);
        BitMask { bits: 0, len: len as u8 }
    }

    pub fn ones(len: usize) -> Self {
        debug_assert!(len <= 64);
        BitMask {
            bits: Self::low_bits(len),
            len: len as u8,
        }
    }

    /// Bit `j` of `bits` is position `j`.
    pub fn from_bits(bits: u64, len: usize) -> Self {
        debug_assert!(len <= 64);
        BitMask {
            bits: bits & Self::low_bits(len),
            len: len as u8,
        }
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut mask = Self::zeros(len);
        for j in 0..len {
            if f(j) {
                mask.bits |= 1 << j;
            }
        }
        mask
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        usize::from(self.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, j: usize) -> bool {
        j < self.len() && self.bits >> j & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, j: usize, value: bool) {
        debug_assert!(j < self.len());
        if value {
            self.bits |= 1 << j;
        } else {
            self.bits &= !(1 << j);
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn none(&self) -> bool {
        self.bits == 0
    }

    pub fn all(&self) -> bool {
        self.bits == Self::low_bits(self.len())
    }

    /// Lowest set position, i.e. the output of a leading-one detector that
    /// scans from position 0.
    #[inline]
    pub fn leading_one(&self) -> Option<usize> {
        (self.bits != 0).then(|| self.bits.trailing_zeros() as usize)
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> {
        let mut rest = self.bits;
        core::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(j)
        })
    }

    pub fn complement(&self) -> Self {
        BitMask::from_bits(!self.bits, self.len())
    }

    pub fn and(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len, other.len);
        BitMask {
            bits: self.bits & other.bits,
            len: self.len,
        }
    }

    pub fn or(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len, other.len);
        BitMask {
            bits: self.bits | other.bits,
            len: self.len,
        }
    }

    /// Parses a string of `0`/`1` characters, position 0 first.
    pub fn parse(s: &str) -> Result<Self> {
        if s.len() > 64 {
            return Err(Error::validation("bit string longer than 64"));
        }
        let mut mask = BitMask::zeros(s.len());
        for (j, c) in s.chars().enumerate() {
            match c {
                '1' => mask.set(j, true),
                '0' => {}
                _ => return Err(Error::validation(format!("invalid bit '{c}'"))),
            }
        }
        Ok(mask)
    }

    pub fn to_bit_string(&self) -> String {
        (0..self.len()).map(|j| if self.get(j) { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for BitMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.len() {
            f.write_str(if self.get(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitMask({self})")
    }
}

macro_rules! mask_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
        pub struct $name(pub BitMask);

        impl core::ops::Deref for $name {
            type Target = BitMask;

            fn deref(&self) -> &BitMask {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(&self.0, f)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "({})"), self.0)
            }
        }
    };
}

mask_newtype!(
    /// Bit `j` set: activation `j` of the brick is effectual.
    EffectualMask
);
mask_newtype!(
    /// Bit `j` set: weight `j` of the brick is ineffectual.
    IsVector
);
mask_newtype!(
    /// AND of a filter group's [`IsVector`]s at one weight-brick coordinate.
    IsProduct
);
mask_newtype!(
    /// Bit `j` set: the multiply at offset `j` may be skipped.
    CanSkip
);

impl EffectualMask {
    pub fn of_values(values: &[i16], crit: IneffCriterion) -> Self {
        EffectualMask(BitMask::from_fn(values.len(), |j| crit.is_effectual(i64::from(values[j]))))
    }
}

impl IsProduct {
    /// Product over an empty group: nothing known to be effectual.
    pub fn identity(len: usize) -> Self {
        IsProduct(BitMask::ones(len))
    }

    pub fn none(len: usize) -> Self {
        IsProduct(BitMask::zeros(len))
    }
}

/// Per-position effectuality of a brick (the on-the-fly comparators).
pub fn effectual_mask(brick: &Brick, crit: IneffCriterion) -> EffectualMask {
    EffectualMask::of_values(&brick.values, crit)
}

pub fn is_vector(weight_brick: &Brick, crit: IneffCriterion) -> IsVector {
    is_vector_of(&weight_brick.values, crit)
}

pub fn is_vector_of(weights: &[i16], crit: IneffCriterion) -> IsVector {
    IsVector(BitMask::from_fn(weights.len(), |j| crit.is_ineffectual(i64::from(weights[j]))))
}

/// Bitwise AND across the group.
pub fn is_product(group: &[IsVector]) -> Result<IsProduct> {
    let first = group
        .first()
        .ok_or_else(|| Error::validation("IS product over an empty filter group"))?;
    let mut acc = first.0;
    for v in &group[1..] {
        if v.len() != acc.len() {
            return Err(Error::validation("IS vectors of different lengths"));
        }
        acc = acc.and(&v.0);
    }
    Ok(IsProduct(acc))
}

/// `CanSkip_j = IsProduct_j OR NOT effectual_j`.
pub fn can_skip(mask: EffectualMask, prod: IsProduct) -> Result<CanSkip> {
    if mask.len() != prod.len() {
        return Err(Error::validation(format!(
            "mask length {} differs from IS product length {}",
            mask.len(),
            prod.len()
        )));
    }
    Ok(CanSkip(prod.0.or(&mask.0.complement())))
}

/// Copy of `acts` with every ineffectual activation replaced by zero.
pub fn effective_tensor(acts: &ActTensor, crit: IneffCriterion) -> ActTensor {
    let mut out = acts.clone();
    for v in out.values_mut() {
        if crit.is_ineffectual(i64::from(*v)) {
            *v = 0;
        }
    }
    out
}

/// Precomputed IS products for one filter group, indexed by window brick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsProductTable {
    filter_x: usize,
    filter_y: usize,
    columns: usize,
    brick: usize,
    filters: Range<usize>,
    products: Vec<IsProduct>,
}

impl IsProductTable {
    /// Products over filters `group` of `filters`.
    pub fn for_group(
        filters: &FilterSet,
        group: Range<usize>,
        crit: IneffCriterion,
        brick: usize,
    ) -> Result<Self> {
        check_brick(brick)?;
        let shape = filters.shape();
        if !shape.depth.is_multiple_of(brick) {
            return Err(Error::config("filter depth is not a multiple of the brick size"));
        }
        if group.is_empty() || group.end > filters.count() {
            return Err(Error::config(format!(
                "filter group {}..{} invalid for {} filters",
                group.start,
                group.end,
                filters.count()
            )));
        }
        let columns = shape.depth / brick;
        let mut products = Vec::with_capacity(shape.x * shape.y * columns);
        for dy in 0..shape.y {
            for dx in 0..shape.x {
                for ib in 0..columns {
                    let mut acc = IsProduct::identity(brick);
                    for f in group.clone() {
                        let v = is_vector_of(filters.weight_brick(f, dx, dy, ib, brick), crit);
                        acc = IsProduct(acc.0.and(&v.0));
                    }
                    products.push(acc);
                }
            }
        }
        Ok(IsProductTable {
            filter_x: shape.x,
            filter_y: shape.y,
            columns,
            brick,
            filters: group,
            products,
        })
    }

    /// Table with no weight-side skipping (CNV behaviour).
    pub fn none(layer: &LayerConfig, brick: usize) -> Self {
        let columns = layer.input.depth / brick;
        IsProductTable {
            filter_x: layer.filter_x,
            filter_y: layer.filter_y,
            columns,
            brick,
            filters: 0..layer.filters,
            products: alloc::vec![IsProduct::none(brick); layer.filter_x * layer.filter_y * columns],
        }
    }

    pub fn filters(&self) -> Range<usize> {
        self.filters.clone()
    }

    pub fn brick(&self) -> usize {
        self.brick
    }

    /// Same skip decisions at every window brick, whatever the filters.
    pub fn same_products(&self, other: &IsProductTable) -> bool {
        self.brick == other.brick && self.products == other.products
    }

    #[inline]
    pub fn get(&self, at: WindowBrick) -> IsProduct {
        debug_assert!(at.dx < self.filter_x && at.dy < self.filter_y);
        self.products[(at.dy * self.filter_x + at.dx) * self.columns + at.brick_index]
    }
}
