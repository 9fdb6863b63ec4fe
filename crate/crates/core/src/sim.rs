//! Cycle and MAC accounting for the dense baseline, CNV and CNV².
//!
//! Timing is idealized: only front-end multiply steps are counted (no
//! pipeline fill, NBout contention or memory stalls). Every architecture also
//! produces its functional output so it can be checked against
//! [`dense_conv`](crate::tensor::dense_conv).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use crate::dispatch::{BankLayout, DispatchConfig, Dispatcher, EmptyBrickCost, EventKind, RawSource, SyncPolicy};
use crate::encodings::{footprint_from_counts, Format, FootprintReport};
use crate::sparsity::{IneffCriterion, IsProductTable};
use crate::tensor::{check_brick, window_slices, ActTensor, Dims, FilterSet, LayerConfig, OutTensor, WindowBrick};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arch {
    Baseline,
    Cnv,
    Cnv2,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Baseline, Arch::Cnv, Arch::Cnv2];

    pub fn name(&self) -> &'static str {
        match self {
            Arch::Baseline => "baseline",
            Arch::Cnv => "cnv",
            Arch::Cnv2 => "cnv2",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == lower)
            .ok_or_else(|| Error::validation(format!("unknown architecture '{s}'")))
    }
}

/// Which filters an IS product is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ProductScope {
    /// All `tiles · filters_per_tile` filters resident in the pass share
    /// one dispatcher stream.
    #[default]
    AllResident,
    /// Each tile's filter group gets its own stream; the pass ends when the
    /// slowest tile finishes.
    PerTile,
}

/// Accelerator geometry and policy knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileConfig {
    pub tiles: usize,
    pub filters_per_tile: usize,
    pub lanes: usize,
    pub brick: usize,
    /// Metadata only; buffer depth never stalls the model.
    pub nbin_depth: usize,
    pub sync: SyncPolicy,
    pub empty_brick: EmptyBrickCost,
    pub product_scope: ProductScope,
    pub fetch_latency: u32,
    /// Format used to report the footprint of the produced outputs.
    pub output_format: Format,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig {
            tiles: 16,
            filters_per_tile: 16,
            lanes: 16,
            brick: 16,
            nbin_depth: 64,
            sync: SyncPolicy::default(),
            empty_brick: EmptyBrickCost::default(),
            product_scope: ProductScope::default(),
            fetch_latency: 0,
            output_format: Format::Zfnaf,
        }
    }
}

impl TileConfig {
    pub fn validate(&self) -> Result<()> {
        check_brick(self.brick)?;
        if self.tiles == 0 || self.filters_per_tile == 0 || self.lanes == 0 {
            return Err(Error::config("tiles, filters per tile and lanes must be positive"));
        }
        Ok(())
    }

    /// Filters processed concurrently.
    pub fn resident_filters(&self) -> usize {
        self.tiles * self.filters_per_tile
    }

    pub fn passes(&self, filters: usize) -> usize {
        filters.div_ceil(self.resident_filters())
    }

    pub fn pass_filters(&self, pass: usize, filters: usize) -> Range<usize> {
        let start = pass * self.resident_filters();
        start..(start + self.resident_filters()).min(filters)
    }

    /// Filter groups sharing one IS product within a pass.
    pub fn product_groups(&self, pass: usize, filters: usize) -> Vec<Range<usize>> {
        let range = self.pass_filters(pass, filters);
        match self.product_scope {
            ProductScope::AllResident => vec![range],
            ProductScope::PerTile => range
                .clone()
                .step_by(self.filters_per_tile)
                .map(|s| s..(s + self.filters_per_tile).min(range.end))
                .collect(),
        }
    }

    pub fn dispatch_config(&self) -> DispatchConfig {
        DispatchConfig {
            lanes: self.lanes,
            brick: self.brick,
            policy: self.sync,
            empty_brick: self.empty_brick,
            fetch_latency: self.fetch_latency,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    pub arch: Arch,
    pub cycles: u64,
    pub macs_performed: u64,
    pub macs_skipped: u64,
    pub broadcasts: u64,
    pub footprint_bits: u64,
    /// Busy cycles per neuron lane.
    pub lane_busy: Vec<u64>,
    /// Lane-cycles available (cycles times concurrent dispatcher streams).
    pub lane_slots: u64,
    /// Layer did not split into whole brick-sets and ran at dense timing.
    pub dense_fallback: bool,
}

impl CycleReport {
    pub fn utilization(&self) -> f64 {
        let total = self.lane_slots * self.lane_busy.len() as u64;
        if total == 0 {
            return 0.0;
        }
        self.lane_busy.iter().sum::<u64>() as f64 / total as f64
    }

    pub fn lane_utilization(&self) -> Vec<f64> {
        self.lane_busy
            .iter()
            .map(|&b| if self.lane_slots == 0 { 0.0 } else { b as f64 / self.lane_slots as f64 })
            .collect()
    }

    /// `baseline.cycles / self.cycles`; `None` when this run took no cycles.
    pub fn speedup_over(&self, baseline: &CycleReport) -> Option<f64> {
        (self.cycles != 0).then(|| baseline.cycles as f64 / self.cycles as f64)
    }

    /// Equal in every measured quantity, ignoring the architecture label.
    pub fn same_measurements(&self, other: &CycleReport) -> bool {
        CycleReport { arch: other.arch, ..self.clone() } == *other
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub output: OutTensor,
    pub report: CycleReport,
}

fn prepare(acts: &ActTensor, filters: &FilterSet, layer: &LayerConfig, tile: &TileConfig) -> Result<(usize, usize)> {
    tile.validate()?;
    layer.check_tensors(acts, filters)?;
    layer.validate(tile.brick)
}

/// Per-filter gate deciding whether a product is computed.
struct Gate {
    act_crit: IneffCriterion,
    /// `(filters, IS products)` for CNV²; empty for CNV.
    groups: Vec<(Range<usize>, IsProductTable)>,
}

impl Gate {
    fn skips(&self, value: i16, f: usize, at: WindowBrick, offset: usize) -> bool {
        if self.act_crit.is_ineffectual(i64::from(value)) {
            return true;
        }
        self.groups
            .iter()
            .find(|(r, _)| r.contains(&f))
            .is_some_and(|(_, t)| t.get(at).get(offset))
    }
}

/// Activation-interleaved walk: each cycle the lanes take the next `L`
/// activations of the window (brick index fastest, then x, then y).
fn dense_walk(
    acts: &ActTensor,
    filters: &FilterSet,
    layer: &LayerConfig,
    tile: &TileConfig,
    gate: Option<&Gate>,
) -> Result<(OutTensor, CycleReport)> {
    let (ox, oy) = prepare(acts, filters, layer, tile)?;
    let depth = layer.input.depth;
    let window_len = layer.filter_x * layer.filter_y * depth;
    let per_window = window_len.div_ceil(tile.lanes) as u64;
    let passes = tile.passes(layer.filters);
    let mut out = OutTensor::zeros(Dims::new(ox, oy, layer.filters));
    let mut lane_busy = vec![0u64; tile.lanes];
    let mut broadcasts = 0u64;
    for pass in 0..passes {
        let resident = tile.pass_filters(pass, layer.filters);
        for wy in 0..oy {
            for wx in 0..ox {
                for k in 0..window_len {
                    let i = k % depth;
                    let spatial = k / depth;
                    let (dx, dy) = (spatial % layer.filter_x, spatial / layer.filter_x);
                    let value = acts.get(wx * layer.stride + dx, wy * layer.stride + dy, i);
                    lane_busy[k % tile.lanes] += 1;
                    broadcasts += 1;
                    let at = WindowBrick { dx, dy, brick_index: i / tile.brick };
                    for f in resident.clone() {
                        if gate.is_some_and(|g| g.skips(value, f, at, i % tile.brick)) {
                            continue;
                        }
                        let w = filters.weight(f, dx, dy, i);
                        out.accumulate(wx, wy, f, i64::from(value) * i64::from(w));
                    }
                }
            }
        }
    }
    let cycles = passes as u64 * (ox * oy) as u64 * per_window;
    let report = CycleReport {
        arch: Arch::Baseline,
        cycles,
        macs_performed: layer.dense_macs()?,
        macs_skipped: 0,
        broadcasts,
        footprint_bits: 0,
        lane_busy,
        lane_slots: cycles,
        dense_fallback: false,
    };
    Ok((out, report))
}

/// Dense baseline: `passes · Ox · Oy · ⌈Fx·Fy·I / L⌉` cycles, nothing skipped.
pub fn run_baseline(acts: &ActTensor, filters: &FilterSet, layer: &LayerConfig, tile: &TileConfig) -> Result<SimResult> {
    let (output, mut report) = dense_walk(acts, filters, layer, tile, None)?;
    report.footprint_bits = encode_outputs(&output, tile.output_format, IneffCriterion::Zero, tile.brick)?.total_bits;
    Ok(SimResult { output, report })
}

/// CNV: ineffectual activations are never broadcast.
pub fn run_cnv(
    acts: &ActTensor,
    filters: &FilterSet,
    layer: &LayerConfig,
    tile: &TileConfig,
    act_crit: IneffCriterion,
) -> Result<SimResult> {
    run_sparse(Arch::Cnv, acts, filters, layer, tile, act_crit, None)
}

/// CNV²: additionally skips activations whose weights are ineffectual in
/// every filter of the IS product group.
pub fn run_cnv2(
    acts: &ActTensor,
    filters: &FilterSet,
    layer: &LayerConfig,
    tile: &TileConfig,
    act_crit: IneffCriterion,
    weight_crit: IneffCriterion,
) -> Result<SimResult> {
    run_sparse(Arch::Cnv2, acts, filters, layer, tile, act_crit, Some(weight_crit))
}

/// Runs `arch` with the given criteria (the weight criterion only matters for CNV²).
pub fn run_arch(
    arch: Arch,
    acts: &ActTensor,
    filters: &FilterSet,
    layer: &LayerConfig,
    tile: &TileConfig,
    act_crit: IneffCriterion,
    weight_crit: IneffCriterion,
) -> Result<SimResult> {
    match arch {
        Arch::Baseline => run_baseline(acts, filters, layer, tile),
        Arch::Cnv => run_cnv(acts, filters, layer, tile, act_crit),
        Arch::Cnv2 => run_cnv2(acts, filters, layer, tile, act_crit, weight_crit),
    }
}

fn run_sparse(
    arch: Arch,
    acts: &ActTensor,
    filters: &FilterSet,
    layer: &LayerConfig,
    tile: &TileConfig,
    act_crit: IneffCriterion,
    weight_crit: Option<IneffCriterion>,
) -> Result<SimResult> {
    let (ox, oy) = prepare(acts, filters, layer, tile)?;
    let b = tile.brick;
    let passes = tile.passes(layer.filters);
    let groups_of = |pass: usize| -> Result<Vec<(Range<usize>, Option<IsProductTable>)>> {
        match weight_crit {
            None => Ok(vec![(tile.pass_filters(pass, layer.filters), None)]),
            Some(wc) => tile
                .product_groups(pass, layer.filters)
                .into_iter()
                .map(|g| Ok((g.clone(), Some(IsProductTable::for_group(filters, g, wc, b)?))))
                .collect(),
        }
    };

    let slices = window_slices(layer, tile.lanes, b)?;
    if !slices.is_balanced() {
        let mut gate = Gate {
            act_crit,
            groups: Vec::new(),
        };
        for pass in 0..passes {
            for (range, table) in groups_of(pass)? {
                if let Some(t) = table {
                    gate.groups.push((range, t));
                }
            }
        }
        let (output, mut report) = dense_walk(acts, filters, layer, tile, Some(&gate))?;
        report.arch = arch;
        report.dense_fallback = true;
        report.footprint_bits = encode_outputs(&output, tile.output_format, act_crit, b)?.total_bits;
        return Ok(SimResult { output, report });
    }

    let source = RawSource::new(acts, act_crit, b);
    let layout = BankLayout::new(tile.lanes);
    let mut out = OutTensor::zeros(Dims::new(ox, oy, layer.filters));
    let mut report = CycleReport {
        arch,
        cycles: 0,
        macs_performed: 0,
        macs_skipped: 0,
        broadcasts: 0,
        footprint_bits: 0,
        lane_busy: vec![0; tile.lanes],
        lane_slots: 0,
        dense_fallback: false,
    };

    // Without weight skipping every pass replays the same activation
    // stream, so one dispatcher run serves all filters. Product groups with
    // identical skip tables see identical event streams and share one.
    let schedule: Vec<(u64, Vec<Stream>)> = if weight_crit.is_none() {
        vec![(passes as u64, vec![Stream { filters: core::iter::once(0..layer.filters).collect(), table: None }])]
    } else {
        (0..passes).map(|p| Ok((1, merge_streams(groups_of(p)?)))).collect::<Result<_>>()?
    };

    for (repeat, streams) in schedule {
        let count = streams.len() as u64;
        let mut pass_cycles = 0u64;
        for stream in &streams {
            let dispatcher = Dispatcher::new(&source, layer, &layout, tile.dispatch_config(), stream.table.as_ref())?;
            let stats = dispatcher.run(|event| {
                if let EventKind::Broadcast { window, slice, pair, .. } = event.kind {
                    let i = slice.brick_index * b + usize::from(pair.offset);
                    for f in stream.filters.iter().flat_map(Range::clone) {
                        let w = filters.weight(f, slice.dx, slice.dy, i);
                        out.accumulate(window.0, window.1, f, i64::from(pair.value) * i64::from(w));
                    }
                }
            })?;
            pass_cycles = pass_cycles.max(stats.cycles);
            report.broadcasts += stats.broadcasts * repeat;
            // each broadcast multiplies with every filter the stream feeds; the
            // shared CNV run covers all passes' filters at once
            let fed: usize = stream.filters.iter().map(|r| r.len()).sum();
            report.macs_performed += stats.broadcasts * fed as u64;
            for (acc, busy) in report.lane_busy.iter_mut().zip(&stats.lane_busy) {
                *acc += busy * repeat;
            }
        }
        report.cycles += pass_cycles * repeat;
        report.lane_slots += pass_cycles * count * repeat;
    }
    report.macs_skipped = layer.dense_macs()? - report.macs_performed;
    report.footprint_bits = encode_outputs(&out, tile.output_format, act_crit, b)?.total_bits;
    Ok(SimResult { output: out, report })
}

/// One dispatcher event stream and the filter groups it feeds.
struct Stream {
    filters: Vec<Range<usize>>,
    table: Option<IsProductTable>,
}

fn merge_streams(groups: Vec<(Range<usize>, Option<IsProductTable>)>) -> Vec<Stream> {
    let mut streams: Vec<Stream> = Vec::new();
    for (range, table) in groups {
        let same = |s: &&mut Stream| match (&s.table, &table) {
            (Some(a), Some(b)) => a.same_products(b),
            (None, None) => true,
            _ => false,
        };
        match streams.iter_mut().find(|s| same(s)) {
            Some(s) => s.filters.push(range),
            None => streams.push(Stream { filters: vec![range], table }),
        }
    }
    streams
}

/// Footprint of a produced output tensor stored as 16-bit activations in
/// `format`. The filter dimension is padded to whole bricks.
pub fn encode_outputs(output: &OutTensor, format: Format, crit: IneffCriterion, brick: usize) -> Result<FootprintReport> {
    check_brick(brick)?;
    let d = output.dims();
    let bricks = (d.x * d.y * d.depth.div_ceil(brick)) as u64;
    let effectual = output.values().iter().filter(|&&v| crit.is_effectual(v)).count() as u64;
    Ok(footprint_from_counts(format, bricks, effectual, brick))
}

/// Expected functional output of `arch`, computed straight from the
/// definitions: CNV drops ineffectual activations, CNV² also drops products
/// whose weights are ineffectual across the whole product group.
pub fn functional_reference(
    arch: Arch,
    acts: &ActTensor,
    filters: &FilterSet,
    layer: &LayerConfig,
    tile: &TileConfig,
    act_crit: IneffCriterion,
    weight_crit: IneffCriterion,
) -> Result<OutTensor> {
    let (ox, oy) = prepare(acts, filters, layer, tile)?;
    let window_len = layer.filter_x * layer.filter_y * layer.input.depth;
    let mut group_of = vec![0usize; layer.filters];
    let mut groups: Vec<Range<usize>> = Vec::new();
    for pass in 0..tile.passes(layer.filters) {
        for g in tile.product_groups(pass, layer.filters) {
            for f in g.clone() {
                group_of[f] = groups.len();
            }
            groups.push(g);
        }
    }
    // dead[g][k]: every weight of group g at window position k is ineffectual
    let dead: Vec<Vec<bool>> = groups
        .iter()
        .map(|g| {
            (0..window_len)
                .map(|k| {
                    g.clone()
                        .all(|f| weight_crit.is_ineffectual(i64::from(filters.filter(f)[k])))
                })
                .collect()
        })
        .collect();
    let mut out = OutTensor::zeros(Dims::new(ox, oy, layer.filters));
    for wy in 0..oy {
        for wx in 0..ox {
            for f in 0..layer.filters {
                let mut acc = 0i64;
                for dy in 0..layer.filter_y {
                    for dx in 0..layer.filter_x {
                        for i in 0..layer.input.depth {
                            let a = acts.get(wx * layer.stride + dx, wy * layer.stride + dy, i);
                            if arch != Arch::Baseline && act_crit.is_ineffectual(i64::from(a)) {
                                continue;
                            }
                            let k = (dy * layer.filter_x + dx) * layer.input.depth + i;
                            if arch == Arch::Cnv2 && dead[group_of[f]][k] {
                                continue;
                            }
                            acc += i64::from(a) * i64::from(filters.filter(f)[k]);
                        }
                    }
                }
                out.accumulate(wx, wy, f, acc);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::dense_conv;

    fn tile(tiles: usize, fpt: usize, lanes: usize, brick: usize) -> TileConfig {
        TileConfig {
            tiles,
            filters_per_tile: fpt,
            lanes,
            brick,
            ..TileConfig::default()
        }
    }

    #[test]
    fn baseline_closed_form() {
        let acts = ActTensor::from_values(Dims::new(4, 4, 16), (0..256).map(|v| (v % 7) as i16).collect()).unwrap();
        let filters = FilterSet::from_values(1, Dims::new(1, 1, 16), (1..=16).collect()).unwrap();
        let layer = LayerConfig::for_tensors(&acts, &filters, 1);
        let r = run_baseline(&acts, &filters, &layer, &tile(1, 16, 16, 16)).unwrap();
        assert_eq!(r.report.cycles, 16);
        assert_eq!(r.report.macs_skipped, 0);
        assert_eq!(r.output, dense_conv(&acts, &filters, &layer).unwrap());
    }

    #[test]
    fn baseline_rejects_empty_filter_set() {
        let acts = ActTensor::zeros(Dims::new(2, 2, 16));
        let filters = FilterSet::zeros(0, Dims::new(1, 1, 16));
        let layer = LayerConfig::for_tensors(&acts, &filters, 1);
        assert!(matches!(
            run_baseline(&acts, &filters, &layer, &TileConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn filter_passes_double_cycles() {
        let acts = ActTensor::from_values(Dims::new(2, 2, 16), (0..64).map(|v| v as i16).collect()).unwrap();
        let t = tile(1, 2, 16, 16);
        let one = FilterSet::from_values(2, Dims::new(1, 1, 16), vec![1; 32]).unwrap();
        let two = FilterSet::from_values(4, Dims::new(1, 1, 16), vec![1; 64]).unwrap();
        let r1 = run_baseline(&acts, &one, &LayerConfig::for_tensors(&acts, &one, 1), &t).unwrap();
        let r2 = run_baseline(&acts, &two, &LayerConfig::for_tensors(&acts, &two, 1), &t).unwrap();
        assert_eq!(r2.report.cycles, 2 * r1.report.cycles);
    }

    #[test]
    fn product_groups_split_per_tile() {
        let mut t = tile(2, 3, 4, 4);
        assert_eq!(t.product_groups(0, 10), vec![0..6]);
        assert_eq!(t.product_groups(1, 10), vec![6..10]);
        t.product_scope = ProductScope::PerTile;
        assert_eq!(t.product_groups(0, 10), vec![0..3, 3..6]);
        assert_eq!(t.product_groups(1, 10), vec![6..9, 9..10]);
    }

    #[test]
    fn unbalanced_layer_falls_back_to_dense_timing() {
        // 3x3 window of one brick each: 9 bricks on 16 lanes
        let acts = ActTensor::from_values(Dims::new(3, 3, 16), (0..144).map(|v| (v % 3) as i16).collect()).unwrap();
        let filters = FilterSet::from_values(1, Dims::new(3, 3, 16), vec![1; 144]).unwrap();
        let layer = LayerConfig::for_tensors(&acts, &filters, 1);
        let t = TileConfig::default();
        let base = run_baseline(&acts, &filters, &layer, &t).unwrap();
        let cnv = run_cnv(&acts, &filters, &layer, &t, IneffCriterion::Zero).unwrap();
        assert!(cnv.report.dense_fallback);
        assert_eq!(cnv.report.cycles, base.report.cycles);
        assert_eq!(cnv.output, base.output);
    }

    #[test]
    fn output_footprint_delegates() {
        let out = OutTensor::from_values(Dims::new(1, 1, 16), vec![0; 16]).unwrap();
        let z = encode_outputs(&out, Format::Zfnaf, IneffCriterion::Zero, 16).unwrap();
        assert_eq!(z.effectual, 0);
        assert_eq!(z.total_bits, 16 * 20);
        let dense = OutTensor::from_values(Dims::new(1, 1, 16), (1..=16).collect()).unwrap();
        let v = encode_outputs(&dense, Format::Viai, IneffCriterion::Zero, 16).unwrap();
        assert_eq!(v.total_bits, 256 + 16);
    }
}
