//! `.layer` binary files and `.layer.json` fixtures.
//!
//! Binary layout, all integers little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `CNVL` |
//! | 2     | version (1) |
//! | 4 × 7 | X, Y, I (logical depth), F, Fx, Fy, stride |
//! | 2     | brick size B |
//! | 2·X·Y·I | activations, `(y, x, i)` with `i` fastest |
//! | 2·F·Fx·Fy·I | filters, one after another, same layout |
//!
//! Depths that are not a multiple of B are zero-padded on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sparse_accel_core::tensor::{ActTensor, Dims, FilterSet, LayerConfig};
use thiserror::Error;

use crate::atomic::write_atomic;

pub const MAGIC: &[u8; 4] = b"CNVL";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 * 7 + 2;

#[derive(Debug, Error)]
pub enum LayerFileError {
    #[error("not a layer file (bad magic)")]
    BadMagic,
    #[error("layer file truncated: need {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("unsupported layer file version {found} (expected {VERSION})")]
    VersionMismatch { found: u16 },
    #[error("{0} unexpected bytes after layer payload")]
    TrailingBytes(usize),
    #[error("invalid layer: {0}")]
    Invalid(#[from] sparse_accel_core::Error),
    #[error("malformed layer fixture: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Tile geometry a fixture was written for. Used as run defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TileHint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filters_per_tile: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lanes: Option<usize>,
}

/// A convolutional layer: input activations, filters, stride and the brick
/// size both tensors are padded to.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFile {
    pub acts: ActTensor,
    pub filters: FilterSet,
    pub stride: usize,
    pub brick: usize,
    pub tile: TileHint,
}

impl LayerFile {
    pub fn new(acts: ActTensor, filters: FilterSet, stride: usize, brick: usize) -> Result<Self, LayerFileError> {
        let file = LayerFile {
            acts: acts.pad_depth(brick),
            filters: filters.pad_depth(brick),
            stride,
            brick,
            tile: TileHint::default(),
        };
        file.layer().check_tensors(&file.acts, &file.filters)?;
        file.layer().validate(brick)?;
        Ok(file)
    }

    pub fn layer(&self) -> LayerConfig {
        LayerConfig::for_tensors(&self.acts, &self.filters, self.stride)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.acts.dims();
        let s = self.filters.shape();
        let acts = self.acts.logical_values();
        let weights = self.filters.logical_values();
        let mut out = Vec::with_capacity(HEADER_LEN + 2 * (acts.len() + weights.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [d.x, d.y, self.acts.logical_depth(), self.filters.count(), s.x, s.y, self.stride] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.brick as u16).to_le_bytes());
        for v in acts.iter().chain(&weights) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LayerFileError> {
        if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
            return Err(LayerFileError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(LayerFileError::Truncated {
                needed: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(LayerFileError::VersionMismatch { found: version });
        }
        let field = |k: usize| {
            let at = 6 + 4 * k;
            u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
        };
        let (x, y, depth, count, fx, fy, stride) = (field(0), field(1), field(2), field(3), field(4), field(5), field(6));
        let brick = usize::from(u16::from_le_bytes([bytes[HEADER_LEN - 2], bytes[HEADER_LEN - 1]]));
        let acts_len = x.checked_mul(y).and_then(|n| n.checked_mul(depth));
        let weights_len = count
            .checked_mul(fx)
            .and_then(|n| n.checked_mul(fy))
            .and_then(|n| n.checked_mul(depth));
        let needed = acts_len
            .zip(weights_len)
            .and_then(|(a, w)| a.checked_add(w))
            .and_then(|n| n.checked_mul(2))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| sparse_accel_core::Error::Validation("layer dimensions overflow".into()))?;
        if bytes.len() < needed {
            return Err(LayerFileError::Truncated { needed, found: bytes.len() });
        }
        if bytes.len() > needed {
            return Err(LayerFileError::TrailingBytes(bytes.len() - needed));
        }
        let mut values = bytes[HEADER_LEN..]
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]));
        let acts: Vec<i16> = values.by_ref().take(acts_len.unwrap()).collect();
        let weights: Vec<i16> = values.collect();
        let acts = ActTensor::ingest(Dims::new(x, y, depth), acts, brick)?;
        let filters = FilterSet::ingest(count, Dims::new(fx, fy, depth), weights, brick)?;
        Self::new(acts, filters, stride, brick)
    }

    pub fn to_json(&self) -> String {
        let d = self.acts.dims();
        let s = self.filters.shape();
        let fixture = Fixture {
            version: u32::from(VERSION),
            dims: [d.x, d.y, self.acts.logical_depth()],
            filters: FixtureFilters {
                count: self.filters.count(),
                fx: s.x,
                fy: s.y,
            },
            stride: self.stride,
            brick: self.brick,
            tile: (self.tile != TileHint::default()).then_some(self.tile),
            activations: self.acts.logical_values(),
            weights: self.filters.logical_values(),
        };
        serde_json::to_string_pretty(&fixture).expect("fixture serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LayerFileError> {
        let f: Fixture = serde_json::from_str(text)?;
        if f.version != u32::from(VERSION) {
            return Err(LayerFileError::VersionMismatch {
                found: f.version.try_into().unwrap_or(u16::MAX),
            });
        }
        let [x, y, depth] = f.dims;
        let acts = ActTensor::ingest(Dims::new(x, y, depth), f.activations, f.brick)?;
        let shape = Dims::new(f.filters.fx, f.filters.fy, depth);
        let filters = FilterSet::ingest(f.filters.count, shape, f.weights, f.brick)?;
        let mut file = Self::new(acts, filters, f.stride, f.brick)?;
        file.tile = f.tile.unwrap_or_default();
        Ok(file)
    }

    /// Loads a binary `.layer` file, or a JSON fixture when the name ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, LayerFileError> {
        let io = |source| LayerFileError::Io {
            path: path.display().to_string(),
            source,
        };
        if is_json(path) {
            Self::from_json(&fs::read_to_string(path).map_err(io)?)
        } else {
            Self::from_bytes(&fs::read(path).map_err(io)?)
        }
    }

    /// Saves atomically, as JSON when the name ends in `.json`.
    pub fn save(&self, path: &Path) -> Result<(), LayerFileError> {
        let bytes = if is_json(path) {
            self.to_json().into_bytes()
        } else {
            self.to_bytes()
        };
        write_atomic(path, &bytes).map_err(|source| LayerFileError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Fixture {
    version: u32,
    /// `[X, Y, I]` with I the logical depth.
    dims: [usize; 3],
    filters: FixtureFilters,
    stride: usize,
    brick: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tile: Option<TileHint>,
    activations: Vec<i16>,
    weights: Vec<i16>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFilters {
    count: usize,
    fx: usize,
    fy: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LayerFile {
        let acts = ActTensor::from_values(Dims::new(2, 1, 3), vec![1, -2, 3, 0, 5, -6]).unwrap();
        let filters = FilterSet::from_values(1, Dims::new(1, 1, 3), vec![7, 0, -9]).unwrap();
        LayerFile::new(acts, filters, 1, 4).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"CNVL");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[2, 0, 0, 0]);
        assert_eq!(&bytes[14..18], &[3, 0, 0, 0]);
        assert_eq!(&bytes[34..36], &[4, 0]);
        assert_eq!(bytes.len(), HEADER_LEN + 2 * 9);
        assert_eq!(&bytes[HEADER_LEN..HEADER_LEN + 4], &[1, 0, 0xfe, 0xff]);
    }

    #[test]
    fn pads_depth_and_roundtrips() {
        let file = sample();
        assert_eq!(file.acts.dims().depth, 4);
        assert_eq!(file.acts.logical_depth(), 3);
        assert_eq!(LayerFile::from_bytes(&file.to_bytes()).unwrap(), file);
        assert_eq!(LayerFile::from_json(&file.to_json()).unwrap(), file);
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(LayerFile::from_bytes(&[]), Err(LayerFileError::BadMagic)));
        assert!(matches!(LayerFile::from_bytes(b"XXXXXXXX"), Err(LayerFileError::BadMagic)));
        let bytes = sample().to_bytes();
        assert!(matches!(
            LayerFile::from_bytes(&bytes[..bytes.len() - 1]),
            Err(LayerFileError::Truncated { .. })
        ));
        assert!(matches!(LayerFile::from_bytes(&bytes[..10]), Err(LayerFileError::Truncated { .. })));
        let mut wrong = bytes.clone();
        wrong[4] = 2;
        assert!(matches!(
            LayerFile::from_bytes(&wrong),
            Err(LayerFileError::VersionMismatch { found: 2 })
        ));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(LayerFile::from_bytes(&long), Err(LayerFileError::TrailingBytes(1))));
    }
}
