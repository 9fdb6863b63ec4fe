//! Dense tensors, layer geometry and the reference convolution.
//!
//! All tensors store the feature index `i` fastest, then `x`, then `y`, so
//! a brick (B consecutive features at one `(x, y)`) is a contiguous slice.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Brick size of the reference design.
pub const DEFAULT_BRICK: usize = 16;

/// Largest supported brick; masks are held in a `u64`.
pub const MAX_BRICK: usize = 64;

pub(crate) fn check_brick(brick: usize) -> Result<()> {
    if brick == 0 || brick > MAX_BRICK {
        return Err(Error::config(format!(
            "brick size {brick} outside 1..={MAX_BRICK}"
        )));
    }
    Ok(())
}

/// Rounds `depth` up to the next multiple of `brick`.
pub fn padded_depth(depth: usize, brick: usize) -> usize {
    depth.div_ceil(brick) * brick
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub x: usize,
    pub y: usize,
    pub depth: usize,
}

impl Dims {
    pub const fn new(x: usize, y: usize, depth: usize) -> Self {
        Dims { x, y, depth }
    }

    pub const fn len(&self) -> usize {
        self.x * self.y * self.depth
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, x: usize, y: usize, i: usize) -> usize {
        (y * self.x + x) * self.depth + i
    }

    pub const fn bricks_per_column(&self, brick: usize) -> usize {
        self.depth / brick
    }
}

/// Dense 3-D array of 16-bit fixed-point activations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActTensor {
    dims: Dims,
    logical_depth: usize,
    values: Vec<i16>,
}

impl ActTensor {
    pub fn zeros(dims: Dims) -> Self {
        ActTensor {
            dims,
            logical_depth: dims.depth,
            values: vec![0; dims.len()],
        }
    }

    /// Wraps `values` laid out as `(x, y, depth)` without padding.
    pub fn from_values(dims: Dims, values: Vec<i16>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::config(format!(
                "tensor {}x{}x{} needs {} values, got {}",
                dims.x,
                dims.y,
                dims.depth,
                dims.len(),
                values.len()
            )));
        }
        Ok(ActTensor {
            dims,
            logical_depth: dims.depth,
            values,
        })
    }

    /// Ingests values of logical depth `dims.depth`, zero-padding the depth
    /// up to a multiple of `brick`.
    pub fn ingest(dims: Dims, values: Vec<i16>, brick: usize) -> Result<Self> {
        check_brick(brick)?;
        let logical = Self::from_values(dims, values)?;
        Ok(logical.pad_depth(brick))
    }

    /// Returns a copy whose depth is padded with zeros to a multiple of `brick`.
    pub fn pad_depth(self, brick: usize) -> Self {
        let padded = padded_depth(self.dims.depth, brick);
        if padded == self.dims.depth {
            return self;
        }
        let dims = Dims::new(self.dims.x, self.dims.y, padded);
        let mut values = vec![0; dims.len()];
        for (column, src) in self.values.chunks(self.dims.depth.max(1)).enumerate() {
            let start = column * padded;
            values[start..start + src.len()].copy_from_slice(src);
        }
        ActTensor {
            dims,
            logical_depth: self.logical_depth,
            values,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Depth before any brick padding was applied.
    pub fn logical_depth(&self) -> usize {
        self.logical_depth
    }

    pub fn values(&self) -> &[i16] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [i16] {
        &mut self.values
    }

    /// Values restricted to the logical depth, in layout order.
    pub fn logical_values(&self) -> Vec<i16> {
        if self.logical_depth == self.dims.depth {
            return self.values.clone();
        }
        self.values
            .chunks(self.dims.depth.max(1))
            .flat_map(|column| column[..self.logical_depth].iter().copied())
            .collect()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, i: usize) -> i16 {
        self.values[self.dims.index(x, y, i)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, i: usize, value: i16) {
        let idx = self.dims.index(x, y, i);
        self.values[idx] = value;
    }

    /// Values of brick `brick_index` at `(x, y)`.
    pub fn brick_values(&self, x: usize, y: usize, brick_index: usize, brick: usize) -> Result<&[i16]> {
        check_brick(brick)?;
        if x >= self.dims.x {
            return Err(Error::OutOfBounds { what: "x", index: x, limit: self.dims.x });
        }
        if y >= self.dims.y {
            return Err(Error::OutOfBounds { what: "y", index: y, limit: self.dims.y });
        }
        let columns = self.dims.depth / brick;
        if brick_index >= columns {
            return Err(Error::OutOfBounds {
                what: "brick",
                index: brick_index,
                limit: columns,
            });
        }
        let start = self.dims.index(x, y, brick_index * brick);
        Ok(&self.values[start..start + brick])
    }

    pub fn brick_at(&self, x: usize, y: usize, brick_index: usize, brick: usize) -> Result<Brick> {
        let values = self.brick_values(x, y, brick_index, brick)?;
        Ok(Brick {
            base: BrickCoord::new(x, y, brick_index * brick),
            values: values.to_vec(),
        })
    }

    /// Iterates every brick coordinate in storage order.
    pub fn brick_coords(&self, brick: usize) -> impl Iterator<Item = BrickCoord> + '_ {
        let columns = self.dims.depth / brick.max(1);
        let dims = self.dims;
        (0..dims.y).flat_map(move |y| {
            (0..dims.x).flat_map(move |x| (0..columns).map(move |ib| BrickCoord::new(x, y, ib * brick)))
        })
    }
}

/// Filters of identical shape `(fx, fy, depth)`, stored back to back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterSet {
    count: usize,
    shape: Dims,
    logical_depth: usize,
    values: Vec<i16>,
}

impl FilterSet {
    pub fn from_values(count: usize, shape: Dims, values: Vec<i16>) -> Result<Self> {
        if values.len() != count * shape.len() {
            return Err(Error::config(format!(
                "{count} filters of {}x{}x{} need {} weights, got {}",
                shape.x,
                shape.y,
                shape.depth,
                count * shape.len(),
                values.len()
            )));
        }
        Ok(FilterSet {
            count,
            shape,
            logical_depth: shape.depth,
            values,
        })
    }

    pub fn ingest(count: usize, shape: Dims, values: Vec<i16>, brick: usize) -> Result<Self> {
        check_brick(brick)?;
        let logical = Self::from_values(count, shape, values)?;
        Ok(logical.pad_depth(brick))
    }

    pub fn pad_depth(self, brick: usize) -> Self {
        let padded = padded_depth(self.shape.depth, brick);
        if padded == self.shape.depth {
            return self;
        }
        let shape = Dims::new(self.shape.x, self.shape.y, padded);
        let mut values = vec![0; self.count * shape.len()];
        for (column, src) in self.values.chunks(self.shape.depth.max(1)).enumerate() {
            let start = column * padded;
            values[start..start + src.len()].copy_from_slice(src);
        }
        FilterSet {
            count: self.count,
            shape,
            logical_depth: self.logical_depth,
            values,
        }
    }

    pub fn zeros(count: usize, shape: Dims) -> Self {
        FilterSet {
            count,
            shape,
            logical_depth: shape.depth,
            values: vec![0; count * shape.len()],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn shape(&self) -> Dims {
        self.shape
    }

    pub fn logical_depth(&self) -> usize {
        self.logical_depth
    }

    pub fn values(&self) -> &[i16] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [i16] {
        &mut self.values
    }

    pub fn logical_values(&self) -> Vec<i16> {
        if self.logical_depth == self.shape.depth {
            return self.values.clone();
        }
        self.values
            .chunks(self.shape.depth.max(1))
            .flat_map(|column| column[..self.logical_depth].iter().copied())
            .collect()
    }

    /// All weights of filter `f`.
    pub fn filter(&self, f: usize) -> &[i16] {
        let len = self.shape.len();
        &self.values[f * len..(f + 1) * len]
    }

    #[inline]
    pub fn weight(&self, f: usize, x: usize, y: usize, i: usize) -> i16 {
        self.values[f * self.shape.len() + self.shape.index(x, y, i)]
    }

    #[inline]
    pub fn set(&mut self, f: usize, x: usize, y: usize, i: usize, value: i16) {
        let idx = f * self.shape.len() + self.shape.index(x, y, i);
        self.values[idx] = value;
    }

    /// Weight brick `s^B_f(x, y, ib*B)`.
    pub fn weight_brick(&self, f: usize, x: usize, y: usize, brick_index: usize, brick: usize) -> &[i16] {
        let start = f * self.shape.len() + self.shape.index(x, y, brick_index * brick);
        &self.values[start..start + brick]
    }
}

/// Geometry of one convolutional layer (no padding).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerConfig {
    pub input: Dims,
    pub filter_x: usize,
    pub filter_y: usize,
    pub filters: usize,
    pub stride: usize,
}

impl LayerConfig {
    /// Layer matching the shapes of `acts` and `filters`.
    pub fn for_tensors(acts: &ActTensor, filters: &FilterSet, stride: usize) -> Self {
        LayerConfig {
            input: acts.dims(),
            filter_x: filters.shape().x,
            filter_y: filters.shape().y,
            filters: filters.count(),
            stride,
        }
    }

    /// Output extents `(Ox, Oy)`; rejects layers whose stride does not tile exactly.
    pub fn output_extent(&self) -> Result<(usize, usize)> {
        if self.stride == 0 {
            return Err(Error::config("stride must be positive"));
        }
        if self.filters == 0 {
            return Err(Error::config("layer has no filters"));
        }
        if self.filter_x == 0 || self.filter_y == 0 {
            return Err(Error::config("filter extent must be positive"));
        }
        if self.input.depth == 0 {
            return Err(Error::config("input depth must be positive"));
        }
        let extent = |input: usize, filter: usize, axis: &str| -> Result<usize> {
            if filter > input {
                return Err(Error::config(format!(
                    "filter {axis} extent {filter} exceeds input extent {input}"
                )));
            }
            if !(input - filter).is_multiple_of(self.stride) {
                return Err(Error::config(format!(
                    "stride {} does not tile input {axis} extent {input} with filter {filter}",
                    self.stride
                )));
            }
            Ok((input - filter) / self.stride + 1)
        };
        Ok((
            extent(self.input.x, self.filter_x, "x")?,
            extent(self.input.y, self.filter_y, "y")?,
        ))
    }

    /// Validates the layer against a brick size and returns `(Ox, Oy)`.
    pub fn validate(&self, brick: usize) -> Result<(usize, usize)> {
        check_brick(brick)?;
        if !self.input.depth.is_multiple_of(brick) {
            return Err(Error::config(format!(
                "input depth {} is not a multiple of brick size {brick}",
                self.input.depth
            )));
        }
        self.output_extent()
    }

    /// Checks that `acts` and `filters` match this layer.
    pub fn check_tensors(&self, acts: &ActTensor, filters: &FilterSet) -> Result<(usize, usize)> {
        let extent = self.output_extent()?;
        if acts.dims() != self.input {
            return Err(Error::config(format!(
                "activation dims {:?} do not match layer input {:?}",
                acts.dims(),
                self.input
            )));
        }
        let shape = filters.shape();
        if shape != Dims::new(self.filter_x, self.filter_y, self.input.depth) {
            return Err(Error::config(format!(
                "filter shape {:?} does not match layer ({}x{}x{})",
                shape, self.filter_x, self.filter_y, self.input.depth
            )));
        }
        if filters.count() != self.filters {
            return Err(Error::config(format!(
                "layer expects {} filters, got {}",
                self.filters,
                filters.count()
            )));
        }
        Ok(extent)
    }

    /// Bricks in one window.
    pub fn window_bricks(&self, brick: usize) -> usize {
        self.filter_x * self.filter_y * (self.input.depth / brick)
    }

    /// Multiply-accumulates of a dense evaluation of the layer.
    pub fn dense_macs(&self) -> Result<u64> {
        let (ox, oy) = self.output_extent()?;
        Ok((ox * oy) as u64
            * (self.filter_x * self.filter_y * self.input.depth) as u64
            * self.filters as u64)
    }
}

/// Wide-accumulator convolution output, laid out `(ox, oy, filter)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutTensor {
    dims: Dims,
    values: Vec<i64>,
}

impl OutTensor {
    pub fn zeros(dims: Dims) -> Self {
        OutTensor {
            dims,
            values: vec![0; dims.len()],
        }
    }

    pub fn from_values(dims: Dims, values: Vec<i64>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::config("output value count does not match dims"));
        }
        Ok(OutTensor { dims, values })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, f: usize) -> i64 {
        self.values[self.dims.index(x, y, f)]
    }

    #[inline]
    pub fn accumulate(&mut self, x: usize, y: usize, f: usize, product: i64) {
        let idx = self.dims.index(x, y, f);
        self.values[idx] += product;
    }
}

/// Reference convolution: `o(wx, wy, f) = Σ n(wx·S+x, wy·S+y, i) · s^f(x, y, i)`.
pub fn dense_conv(acts: &ActTensor, filters: &FilterSet, layer: &LayerConfig) -> Result<OutTensor> {
    let (ox, oy) = layer.check_tensors(acts, filters)?;
    let mut out = OutTensor::zeros(Dims::new(ox, oy, layer.filters));
    let depth = layer.input.depth;
    for wy in 0..oy {
        for wx in 0..ox {
            for f in 0..layer.filters {
                let mut acc: i64 = 0;
                for fy in 0..layer.filter_y {
                    for fx in 0..layer.filter_x {
                        let base = acts.dims().index(wx * layer.stride + fx, wy * layer.stride + fy, 0);
                        let column = &acts.values()[base..base + depth];
                        let w = filters.weight_brick(f, fx, fy, 0, depth);
                        acc += column
                            .iter()
                            .zip(w)
                            .map(|(&a, &w)| i64::from(a) * i64::from(w))
                            .sum::<i64>();
                    }
                }
                out.accumulate(wx, wy, f, acc);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BrickCoord {
    pub x: usize,
    pub y: usize,
    /// First feature index; always a multiple of the brick size.
    pub i: usize,
}

impl BrickCoord {
    pub const fn new(x: usize, y: usize, i: usize) -> Self {
        BrickCoord { x, y, i }
    }
}

/// B consecutive activations (or weights) at one `(x, y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Brick {
    pub base: BrickCoord,
    pub values: Vec<i16>,
}

impl Brick {
    pub fn new(values: Vec<i16>) -> Self {
        Brick {
            base: BrickCoord::new(0, 0, 0),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A brick position relative to the window origin; also the coordinate of
/// the matching weight brick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowBrick {
    pub dx: usize,
    pub dy: usize,
    pub brick_index: usize,
}

impl WindowBrick {
    /// Absolute coordinate of this brick inside window `(wx, wy)`.
    pub fn resolve(&self, wx: usize, wy: usize, stride: usize, brick: usize) -> BrickCoord {
        BrickCoord::new(wx * stride + self.dx, wy * stride + self.dy, self.brick_index * brick)
    }
}

/// Brick-interleaved assignment of window bricks to neuron lanes.
///
/// Window bricks are enumerated with the brick index fastest, then `dx`,
/// then `dy`; brick `k` goes to lane `k % lanes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceAssignment {
    lanes: Vec<Vec<WindowBrick>>,
    window_bricks: usize,
}

impl SliceAssignment {
    pub fn lanes(&self) -> usize {
        self.lanes.len()
    }

    pub fn lane(&self, lane: usize) -> &[WindowBrick] {
        &self.lanes[lane]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[WindowBrick]> {
        self.lanes.iter().map(Vec::as_slice)
    }

    /// Number of brick-sets (the longest lane's brick count).
    pub fn brick_sets(&self) -> usize {
        self.lanes.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn window_bricks(&self) -> usize {
        self.window_bricks
    }

    /// True when every brick-set occupies all lanes.
    pub fn is_balanced(&self) -> bool {
        self.window_bricks.is_multiple_of(self.lanes.len())
    }
}

pub fn window_slices(layer: &LayerConfig, lanes: usize, brick: usize) -> Result<SliceAssignment> {
    if lanes == 0 {
        return Err(Error::config("at least one neuron lane is required"));
    }
    layer.validate(brick)?;
    let columns = layer.input.depth / brick;
    let mut assignment = vec![Vec::new(); lanes];
    let mut k = 0;
    for dy in 0..layer.filter_y {
        for dx in 0..layer.filter_x {
            for brick_index in 0..columns {
                assignment[k % lanes].push(WindowBrick { dx, dy, brick_index });
                k += 1;
            }
        }
    }
    Ok(SliceAssignment {
        lanes: assignment,
        window_bricks: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[i16]) -> ActTensor {
        ActTensor::from_values(Dims::new(1, 1, values.len()), values.to_vec()).unwrap()
    }

    #[test]
    fn dot_product_layer() {
        let acts = column(&[1, 2, 0, 4]);
        let filters = FilterSet::from_values(1, Dims::new(1, 1, 4), vec![1, 1, 1, 1]).unwrap();
        let layer = LayerConfig::for_tensors(&acts, &filters, 1);
        let out = dense_conv(&acts, &filters, &layer).unwrap();
        assert_eq!(out.values(), &[7]);
    }

    #[test]
    fn zero_filter_annihilates() {
        let acts = ActTensor::from_values(Dims::new(3, 3, 4), (0..36).map(|v| v as i16 - 17).collect()).unwrap();
        let filters = FilterSet::zeros(2, Dims::new(2, 2, 4));
        let layer = LayerConfig::for_tensors(&acts, &filters, 1);
        let out = dense_conv(&acts, &filters, &layer).unwrap();
        assert_eq!(out.dims(), Dims::new(2, 2, 2));
        assert!(out.values().iter().all(|&v| v == 0));
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let acts = column(&[1, 2, 3, 4]);
        let filters = FilterSet::zeros(1, Dims::new(1, 1, 8));
        let mut layer = LayerConfig::for_tensors(&acts, &filters, 1);
        assert!(matches!(dense_conv(&acts, &filters, &layer), Err(Error::Config(_))));
        layer.input.depth = 8;
        assert!(matches!(dense_conv(&acts, &filters, &layer), Err(Error::Config(_))));
    }

    #[test]
    fn stride_must_tile() {
        let layer = LayerConfig {
            input: Dims::new(6, 6, 16),
            filter_x: 3,
            filter_y: 3,
            filters: 1,
            stride: 2,
        };
        assert!(layer.output_extent().is_err());
        let layer = LayerConfig { stride: 3, ..layer };
        assert_eq!(layer.output_extent().unwrap(), (2, 2));
    }

    #[test]
    fn brick_at_copies_and_checks_bounds() {
        let acts = column(&[1, 2, 0, 4]);
        let brick = acts.brick_at(0, 0, 0, 4).unwrap();
        assert_eq!(brick.base, BrickCoord::new(0, 0, 0));
        assert_eq!(brick.values, [1, 2, 0, 4]);
        assert!(matches!(
            acts.brick_at(0, 0, 1, 4),
            Err(Error::OutOfBounds { what: "brick", .. })
        ));
        assert!(acts.brick_at(1, 0, 0, 4).is_err());

        let deep = column(&(0..32).collect::<Vec<i16>>());
        let second = deep.brick_at(0, 0, 1, 16).unwrap();
        assert_eq!(second.base.i, 16);
        assert_eq!(second.values, (16..32).collect::<Vec<i16>>());
    }

    #[test]
    fn ingest_pads_depth() {
        let acts = ActTensor::ingest(Dims::new(2, 1, 3), vec![1, 2, 3, 4, 5, 6], 4).unwrap();
        assert_eq!(acts.dims(), Dims::new(2, 1, 4));
        assert_eq!(acts.logical_depth(), 3);
        assert_eq!(acts.values(), &[1, 2, 3, 0, 4, 5, 6, 0]);
        assert_eq!(acts.logical_values(), vec![1, 2, 3, 4, 5, 6]);
    }

    fn layer(fx: usize, fy: usize, depth: usize) -> LayerConfig {
        LayerConfig {
            input: Dims::new(fx, fy, depth),
            filter_x: fx,
            filter_y: fy,
            filters: 1,
            stride: 1,
        }
    }

    #[test]
    fn even_split_one_brick_per_lane() {
        let slices = window_slices(&layer(1, 1, 256), 16, 16).unwrap();
        assert!(slices.iter().all(|lane| lane.len() == 1));
        // lane 1 takes the brick B features deeper at the same (x, y)
        assert_eq!(slices.lane(0)[0], WindowBrick { dx: 0, dy: 0, brick_index: 0 });
        assert_eq!(slices.lane(1)[0], WindowBrick { dx: 0, dy: 0, brick_index: 1 });
    }

    #[test]
    fn eighteen_bricks_round_robin() {
        // 3x3 window, depth 32 → 18 bricks of 16
        let slices = window_slices(&layer(3, 3, 32), 16, 16).unwrap();
        let counts: Vec<usize> = slices.iter().map(<[WindowBrick]>::len).collect();
        assert_eq!(counts[0], 2);
        assert_eq!(counts[1], 2);
        assert!(counts[2..].iter().all(|&c| c == 1));
        assert!(!slices.is_balanced());
    }

    #[test]
    fn zero_lanes_rejected() {
        assert!(window_slices(&layer(1, 1, 16), 0, 16).is_err());
    }
}
