//! Core model of zero-skipping convolution accelerators.
//!
//! This crate is `no_std` (it only needs `alloc`). It provides:
//!
//! * [`tensor`]: dense activation/weight containers, window geometry and the
//!   reference convolution every architecture is checked against.
//! * [`sparsity`]: ineffectuality criteria, effectual masks, weight IS vectors,
//!   IS products and the CanSkip predicate.
//! * [`encodings`]: bit-exact ZFNAf, RoE, VIAI and CVIAI codecs together with
//!   footprint accounting and a byte-stream store format.
//! * [`dispatch`]: the brick-buffer dispatcher with leading-one streaming.
//! * [`sim`]: cycle and MAC accounting for the dense baseline, CNV and CNV².
//! * [`workloads`]: deterministic synthetic layer generation.
//!
//! File IO, reports and the command line live in the `sparse-accel-sim` crate.

#![no_std]

extern crate alloc;

pub mod dispatch;
pub mod encodings;
mod error;
pub mod sim;
pub mod sparsity;
pub mod tensor;
pub mod workloads;

pub use error::{Error, Result};
