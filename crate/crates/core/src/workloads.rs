//! Deterministic synthetic layers.
//!
//! Generation uses SplitMix64 seeded directly with `SyntheticSpec::seed` (state =
//! seed). Activations are drawn first, in storage order over the logical
//! depth, then every filter's weights in the same order. For each value:
//!
//! 1. `u = (next_u64() >> 11) · 2⁻⁵³`; the value is zero iff `u < p`.
//! 2. Otherwise `r = next_u64() mod n`, where `n` is the number of nonzero
//!    integers in `[min, max]`, and the value is the `r`-th of them in
//!    ascending order.
//!
//! Any reimplementation following these steps reproduces the tensors bit for bit.

use alloc::format;
use alloc::vec::Vec;

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::tensor::{padded_depth, ActTensor, Dims, FilterSet, LayerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    /// Input extents with the logical (unpadded) depth.
    pub input: Dims,
    pub filters: usize,
    pub filter_x: usize,
    pub filter_y: usize,
    pub stride: usize,
    pub brick: usize,
    /// Probability that an activation is zero.
    pub act_sparsity: f64,
    /// Probability that a weight is zero.
    pub weight_sparsity: f64,
    pub min: i16,
    pub max: i16,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            input: Dims::new(8, 8, 32),
            filters: 4,
            filter_x: 3,
            filter_y: 3,
            stride: 1,
            brick: 16,
            act_sparsity: 0.5,
            weight_sparsity: 0.0,
            min: -128,
            max: 127,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Layer geometry after brick padding.
    pub fn layer(&self) -> LayerConfig {
        LayerConfig {
            input: Dims::new(self.input.x, self.input.y, padded_depth(self.input.depth, self.brick)),
            filter_x: self.filter_x,
            filter_y: self.filter_y,
            filters: self.filters,
            stride: self.stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("activation", self.act_sparsity), ("weight", self.weight_sparsity)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name} sparsity {p} outside [0, 1]")));
            }
        }
        if self.min > self.max {
            return Err(Error::validation(format!("value range [{}, {}] is empty", self.min, self.max)));
        }
        if nonzero_count(self.min, self.max) == 0 && (self.act_sparsity < 1.0 || self.weight_sparsity < 1.0) {
            return Err(Error::validation("value range holds no nonzero value"));
        }
        crate::tensor::check_brick(self.brick).map_err(|e| Error::validation(format!("{e}")))?;
        self.layer().validate(self.brick)?;
        Ok(())
    }
}

fn nonzero_count(min: i16, max: i16) -> u64 {
    let span = (i64::from(max) - i64::from(min) + 1) as u64;
    if min <= 0 && max >= 0 {
        span - 1
    } else {
        span
    }
}

struct ValueStream {
    rng: SplitMix64,
    min: i16,
    max: i16,
    nonzero: u64,
}

impl ValueStream {
    fn draw(&mut self, p: f64) -> i16 {
        let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        if u < p {
            return 0;
        }
        let r = (self.rng.next_u64() % self.nonzero) as i64;
        let mut v = i64::from(self.min) + r;
        if self.min <= 0 && v >= 0 {
            // step over zero
            v += 1;
        }
        debug_assert!(v <= i64::from(self.max));
        v as i16
    }
}

/// Generates the activation tensor and filters described by `spec`, both
/// zero-padded to whole bricks.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(ActTensor, FilterSet)> {
    spec.validate()?;
    let mut stream = ValueStream {
        rng: SplitMix64::from_seed(spec.seed.to_le_bytes()),
        min: spec.min,
        max: spec.max,
        nonzero: nonzero_count(spec.min, spec.max).max(1),
    };
    let acts: Vec<i16> = (0..spec.input.len()).map(|_| stream.draw(spec.act_sparsity)).collect();
    let shape = Dims::new(spec.filter_x, spec.filter_y, spec.input.depth);
    let weights: Vec<i16> = (0..spec.filters * shape.len())
        .map(|_| stream.draw(spec.weight_sparsity))
        .collect();
    Ok((
        ActTensor::ingest(spec.input, acts, spec.brick)?,
        FilterSet::ingest(spec.filters, shape, weights, spec.brick)?,
    ))
}
