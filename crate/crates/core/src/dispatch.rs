//! Dispatcher model: per-lane brick buffers fed from one NM bank each, an
//! effectual vector `E` per buffer entry, and a leading-one detector that
//! broadcasts one `(offset, value)` pair per lane per cycle.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::encodings::{EncodedTensor, Pair};
use crate::sparsity::{BitMask, EffectualMask, IneffCriterion, IsProduct, IsProductTable};
use crate::tensor::{check_brick, window_slices, ActTensor, Brick, BrickCoord, Dims, LayerConfig, SliceAssignment, WindowBrick};
use crate::{Error, Result};

/// How neuron lanes advance through their slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SyncPolicy {
    /// Every lane waits for the slowest before the next set of bricks.
    #[default]
    BricksetLockstep,
    /// Lanes run ahead independently (per-bank fetch pointers) and only
    /// meet at window boundaries.
    WindowSync,
}

/// Cycles spent on a brick with nothing to broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EmptyBrickCost {
    #[default]
    ZeroCycles,
    OneCycle,
}

/// Static mapping of slices onto NM banks: lane `l`'s bricks all live in bank `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankLayout {
    banks: usize,
}

impl BankLayout {
    pub fn new(banks: usize) -> Self {
        BankLayout { banks }
    }

    pub fn banks(&self) -> usize {
        self.banks
    }

    pub fn bank_of_lane(&self, lane: usize) -> usize {
        lane % self.banks
    }
}

impl Default for BankLayout {
    fn default() -> Self {
        BankLayout::new(16)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchConfig {
    pub lanes: usize,
    pub brick: usize,
    pub policy: SyncPolicy,
    pub empty_brick: EmptyBrickCost,
    /// Cycles before the first bricks arrive; later fetches are prefetched.
    pub fetch_latency: u32,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        DispatchConfig {
            lanes: 16,
            brick: 16,
            policy: SyncPolicy::default(),
            empty_brick: EmptyBrickCost::default(),
            fetch_latency: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Broadcast {
        window: (usize, usize),
        slice: WindowBrick,
        brick: BrickCoord,
        pair: Pair,
    },
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchEvent {
    pub cycle: u64,
    pub lane: usize,
    pub kind: EventKind,
}

impl DispatchEvent {
    pub fn pair(&self) -> Option<Pair> {
        match self.kind {
            EventKind::Broadcast { pair, .. } => Some(pair),
            EventKind::Idle => None,
        }
    }
}

/// Trace line: `cycle,lane,offset,value` or `cycle,lane,IDLE`.
impl fmt::Display for DispatchEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            EventKind::Broadcast { pair, .. } => write!(f, "{},{},{},{}", self.cycle, self.lane, pair.offset, pair.value),
            EventKind::Idle => write!(f, "{},{},IDLE", self.cycle, self.lane),
        }
    }
}

/// Where the dispatcher's bricks come from.
pub trait BrickSource {
    fn dims(&self) -> Dims;

    fn brick(&self) -> usize;

    /// Fills `values` with the brick at `coord` and returns the positions
    /// that must be broadcast.
    fn load(&self, coord: BrickCoord, values: &mut [i16]) -> Result<EffectualMask>;
}

/// Raw tensor in NM; the brick buffer's comparators find ineffectual values
/// as bricks arrive.
#[derive(Debug, Clone, Copy)]
pub struct RawSource<'a> {
    pub acts: &'a ActTensor,
    pub criterion: IneffCriterion,
    pub brick: usize,
}

impl<'a> RawSource<'a> {
    pub fn new(acts: &'a ActTensor, criterion: IneffCriterion, brick: usize) -> Self {
        RawSource { acts, criterion, brick }
    }
}

impl BrickSource for RawSource<'_> {
    fn dims(&self) -> Dims {
        self.acts.dims()
    }

    fn brick(&self) -> usize {
        self.brick
    }

    fn load(&self, coord: BrickCoord, values: &mut [i16]) -> Result<EffectualMask> {
        let src = self.acts.brick_values(coord.x, coord.y, coord.i / self.brick, self.brick)?;
        values[..self.brick].copy_from_slice(src);
        Ok(EffectualMask::of_values(src, self.criterion))
    }
}

impl BrickSource for EncodedTensor {
    fn dims(&self) -> Dims {
        EncodedTensor::dims(self)
    }

    fn brick(&self) -> usize {
        EncodedTensor::brick(self)
    }

    fn load(&self, coord: BrickCoord, values: &mut [i16]) -> Result<EffectualMask> {
        self.load_brick(coord, values)
    }
}

/// One brick buffer entry: the brick values and the vector `E` of
/// positions still to broadcast.
#[derive(Debug, Clone)]
struct BufferEntry {
    values: Vec<i16>,
    pending: BitMask,
}

impl BufferEntry {
    fn new(brick: usize) -> Self {
        BufferEntry {
            values: vec![0; brick],
            pending: BitMask::zeros(brick),
        }
    }

    fn fill(&mut self, mask: EffectualMask, skip: IsProduct) {
        self.pending = mask.0.and(&skip.0.complement());
    }

    /// Leading-one detector step: emit the lowest pending position and clear it.
    fn next_pair(&mut self) -> Option<Pair> {
        let j = self.pending.leading_one()?;
        self.pending.set(j, false);
        Some(Pair::new(j as u8, self.values[j]))
    }
}

fn stream_entry(mut entry: BufferEntry) -> Vec<Pair> {
    let mut out = Vec::with_capacity(entry.pending.count_ones());
    while let Some(p) = entry.next_pair() {
        out.push(p);
    }
    out
}

/// Effectual positions of one brick in broadcast order.
pub fn stream_brick(brick: &Brick, crit: IneffCriterion) -> Vec<Pair> {
    let mut entry = BufferEntry::new(brick.len());
    entry.values.copy_from_slice(&brick.values);
    entry.fill(EffectualMask::of_values(&brick.values, crit), IsProduct::none(brick.len()));
    stream_entry(entry)
}

/// Positions whose CanSkip bit is clear, in broadcast order.
pub fn stream_brick_weightaware(brick: &Brick, act_crit: IneffCriterion, prod: IsProduct) -> Result<Vec<Pair>> {
    if prod.len() != brick.len() {
        return Err(Error::validation("IS product length differs from brick length"));
    }
    let mut entry = BufferEntry::new(brick.len());
    entry.values.copy_from_slice(&brick.values);
    entry.fill(EffectualMask::of_values(&brick.values, act_crit), prod);
    Ok(stream_entry(entry))
}

/// Per-lane dispatcher state: buffer entry, fetch pointer into the lane's
/// slice and a pending drain cycle for empty bricks.
struct LaneState {
    entry: BufferEntry,
    fetch_ptr: usize,
    fetch_limit: usize,
    current: Option<WindowBrick>,
    drain: bool,
}

enum Step {
    Emit(WindowBrick, Pair),
    Drain,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DispatchStats {
    pub cycles: u64,
    pub broadcasts: u64,
    /// Broadcast cycles per lane.
    pub lane_busy: Vec<u64>,
}

impl DispatchStats {
    pub fn utilization(&self) -> f64 {
        let slots = self.cycles * self.lane_busy.len() as u64;
        if slots == 0 {
            return 0.0;
        }
        self.lane_busy.iter().sum::<u64>() as f64 / slots as f64
    }
}

/// Drives every window of a layer through the brick buffers.
pub struct Dispatcher<'a, S: BrickSource + ?Sized> {
    source: &'a S,
    layer: LayerConfig,
    config: DispatchConfig,
    slices: SliceAssignment,
    products: Option<&'a IsProductTable>,
    extent: (usize, usize),
}

impl<'a, S: BrickSource + ?Sized> Dispatcher<'a, S> {
    pub fn new(
        source: &'a S,
        layer: &LayerConfig,
        layout: &BankLayout,
        config: DispatchConfig,
        products: Option<&'a IsProductTable>,
    ) -> Result<Self> {
        check_brick(config.brick)?;
        if layout.banks() != config.lanes {
            return Err(Error::config(alloc::format!(
                "{} NM banks cannot serve {} neuron lanes",
                layout.banks(),
                config.lanes
            )));
        }
        if source.brick() != config.brick {
            return Err(Error::format(alloc::format!(
                "source brick size {} differs from dispatcher brick size {}",
                source.brick(),
                config.brick
            )));
        }
        if source.dims() != layer.input {
            return Err(Error::format(alloc::format!(
                "source dims {:?} inconsistent with layer input {:?}",
                source.dims(),
                layer.input
            )));
        }
        if let Some(p) = products {
            if p.brick() != config.brick {
                return Err(Error::config("IS product table brick size mismatch"));
            }
        }
        let extent = layer.validate(config.brick)?;
        let slices = window_slices(layer, config.lanes, config.brick)?;
        Ok(Dispatcher {
            source,
            layer: *layer,
            config,
            slices,
            products,
            extent,
        })
    }

    pub fn slices(&self) -> &SliceAssignment {
        &self.slices
    }

    fn step(&self, lane: &mut LaneState, bricks: &[WindowBrick], window: (usize, usize)) -> Result<Step> {
        loop {
            if let Some(pair) = lane.entry.next_pair() {
                return Ok(Step::Emit(lane.current.expect("entry loaded"), pair));
            }
            if lane.drain {
                lane.drain = false;
                return Ok(Step::Drain);
            }
            if lane.fetch_ptr >= lane.fetch_limit.min(bricks.len()) {
                return Ok(Step::Exhausted);
            }
            let wb = bricks[lane.fetch_ptr];
            lane.fetch_ptr += 1;
            let coord = wb.resolve(window.0, window.1, self.layer.stride, self.config.brick);
            let mask = self.source.load(coord, &mut lane.entry.values)?;
            let skip = self
                .products
                .map_or_else(|| IsProduct::none(self.config.brick), |t| t.get(wb));
            lane.entry.fill(mask, skip);
            lane.current = Some(wb);
            lane.drain = lane.entry.pending.none() && self.config.empty_brick == EmptyBrickCost::OneCycle;
        }
    }

    /// Runs the dispatcher, handing every event to `sink` in cycle then lane order.
    pub fn run(&self, mut sink: impl FnMut(&DispatchEvent)) -> Result<DispatchStats> {
        let lanes = self.config.lanes;
        let mut stats = DispatchStats {
            lane_busy: vec![0; lanes],
            ..DispatchStats::default()
        };
        let mut cycle: u64 = 0;
        for _ in 0..self.config.fetch_latency {
            for lane in 0..lanes {
                sink(&DispatchEvent { cycle, lane, kind: EventKind::Idle });
            }
            cycle += 1;
        }
        let mut states: Vec<LaneState> = (0..lanes)
            .map(|_| LaneState {
                entry: BufferEntry::new(self.config.brick),
                fetch_ptr: 0,
                fetch_limit: 0,
                current: None,
                drain: false,
            })
            .collect();
        let (ox, oy) = self.extent;
        let phases = match self.config.policy {
            SyncPolicy::BricksetLockstep => self.slices.brick_sets(),
            SyncPolicy::WindowSync => 1,
        };
        let mut steps: Vec<Step> = Vec::with_capacity(lanes);
        for wy in 0..oy {
            for wx in 0..ox {
                let window = (wx, wy);
                for s in &mut states {
                    s.fetch_ptr = 0;
                }
                for phase in 0..phases {
                    for s in &mut states {
                        s.fetch_limit = match self.config.policy {
                            SyncPolicy::BricksetLockstep => phase + 1,
                            SyncPolicy::WindowSync => usize::MAX,
                        };
                    }
                    loop {
                        steps.clear();
                        for (l, s) in states.iter_mut().enumerate() {
                            steps.push(self.step(s, self.slices.lane(l), window)?);
                        }
                        if steps.iter().all(|s| matches!(s, Step::Exhausted)) {
                            break;
                        }
                        for (lane, step) in steps.iter().enumerate() {
                            let kind = match *step {
                                Step::Emit(slice, pair) => {
                                    stats.broadcasts += 1;
                                    stats.lane_busy[lane] += 1;
                                    EventKind::Broadcast {
                                        window,
                                        slice,
                                        brick: slice.resolve(wx, wy, self.layer.stride, self.config.brick),
                                        pair,
                                    }
                                }
                                Step::Drain | Step::Exhausted => EventKind::Idle,
                            };
                            sink(&DispatchEvent { cycle, lane, kind });
                        }
                        cycle += 1;
                    }
                }
            }
        }
        stats.cycles = cycle;
        Ok(stats)
    }
}

/// Collected output of a dispatcher run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchTrace {
    pub events: Vec<DispatchEvent>,
    pub stats: DispatchStats,
}

impl DispatchTrace {
    /// The `(offset, value)` sequence each lane broadcast, idles dropped.
    pub fn lane_streams(&self) -> Vec<Vec<Pair>> {
        let mut streams = vec![Vec::new(); self.stats.lane_busy.len()];
        for e in &self.events {
            if let Some(p) = e.pair() {
                streams[e.lane].push(p);
            }
        }
        streams
    }
}

/// Runs the dispatcher over a whole layer and collects the event stream.
/// `products` enables weight-aware skipping.
pub fn run_dispatch<S: BrickSource + ?Sized>(
    source: &S,
    layer: &LayerConfig,
    layout: &BankLayout,
    config: DispatchConfig,
    products: Option<&IsProductTable>,
) -> Result<DispatchTrace> {
    let dispatcher = Dispatcher::new(source, layer, layout, config, products)?;
    let mut events = Vec::new();
    let stats = dispatcher.run(|e| events.push(*e))?;
    Ok(DispatchTrace { events, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encodings::Format;

    fn brick(values: &[i16]) -> Brick {
        Brick::new(values.to_vec())
    }

    #[test]
    fn streams_effectual_pairs() {
        assert_eq!(
            stream_brick(&brick(&[1, 0, 0, 4]), IneffCriterion::Zero),
            [Pair::new(0b00, 1), Pair::new(0b11, 4)]
        );
        assert!(stream_brick(&brick(&[0; 16]), IneffCriterion::Zero).is_empty());
    }

    #[test]
    fn weight_aware_streaming() {
        let b = brick(&[1, 2, 0, 4]);
        let plain = stream_brick(&b, IneffCriterion::Zero);
        let none = stream_brick_weightaware(&b, IneffCriterion::Zero, IsProduct::none(4)).unwrap();
        assert_eq!(plain, none);
        let all = stream_brick_weightaware(&b, IneffCriterion::Zero, IsProduct::identity(4)).unwrap();
        assert!(all.is_empty());
        // three effectual activations, the one at offset 1 faces only ineffectual weights
        let b = brick(&[7, 6, 0, 8]);
        let prod = IsProduct(BitMask::parse("0100").unwrap());
        let pairs = stream_brick_weightaware(&b, IneffCriterion::Zero, prod).unwrap();
        assert_eq!(pairs, [Pair::new(0, 7), Pair::new(3, 8)]);
    }

    fn column_layer(depth: usize) -> LayerConfig {
        LayerConfig {
            input: Dims::new(1, 1, depth),
            filter_x: 1,
            filter_y: 1,
            filters: 1,
            stride: 1,
        }
    }

    fn config(lanes: usize, brick: usize, policy: SyncPolicy) -> DispatchConfig {
        DispatchConfig {
            lanes,
            brick,
            policy,
            ..DispatchConfig::default()
        }
    }

    #[test]
    fn dense_window_has_no_idle() {
        let acts = ActTensor::from_values(Dims::new(1, 1, 16), (1..=16).collect()).unwrap();
        let src = RawSource::new(&acts, IneffCriterion::Zero, 4);
        let trace = run_dispatch(&src, &column_layer(16), &BankLayout::new(4), config(4, 4, SyncPolicy::BricksetLockstep), None).unwrap();
        assert_eq!(trace.stats.cycles, 4);
        assert_eq!(trace.stats.broadcasts, 16);
        assert!(trace.events.iter().all(|e| e.pair().is_some()));
    }

    #[test]
    fn lockstep_idles_empty_lane() {
        // lane 0 brick all zero, lane 1 full
        let acts = ActTensor::from_values(Dims::new(1, 1, 8), alloc::vec![0, 0, 0, 0, 5, 6, 7, 8]).unwrap();
        let src = RawSource::new(&acts, IneffCriterion::Zero, 4);
        let trace = run_dispatch(&src, &column_layer(8), &BankLayout::new(2), config(2, 4, SyncPolicy::BricksetLockstep), None).unwrap();
        let lines: Vec<alloc::string::String> = trace.events.iter().map(|e| alloc::format!("{e}")).collect();
        assert_eq!(
            lines,
            [
                "0,0,IDLE", "0,1,0,5", "1,0,IDLE", "1,1,1,6", "2,0,IDLE", "2,1,2,7", "3,0,IDLE", "3,1,3,8"
            ]
        );
        assert_eq!(trace.stats.lane_busy, [0, 4]);
    }

    #[test]
    fn window_sync_runs_ahead() {
        // 2 lanes, 4 bricks of 2: lane 0 gets bricks 0,2 ; lane 1 gets 1,3
        let acts = ActTensor::from_values(Dims::new(1, 1, 8), alloc::vec![1, 1, 0, 1, 0, 0, 1, 1]).unwrap();
        let src = RawSource::new(&acts, IneffCriterion::Zero, 2);
        let lock = run_dispatch(&src, &column_layer(8), &BankLayout::new(2), config(2, 2, SyncPolicy::BricksetLockstep), None).unwrap();
        let sync = run_dispatch(&src, &column_layer(8), &BankLayout::new(2), config(2, 2, SyncPolicy::WindowSync), None).unwrap();
        // lockstep: max(2,1) + max(0,2) = 4 ; window: max(2+0, 1+2) = 3
        assert_eq!(lock.stats.cycles, 4);
        assert_eq!(sync.stats.cycles, 3);
        assert_eq!(lock.lane_streams(), sync.lane_streams());
    }

    #[test]
    fn one_cycle_empty_brick() {
        let acts = ActTensor::from_values(Dims::new(1, 1, 4), alloc::vec![0, 0, 0, 0]).unwrap();
        let src = RawSource::new(&acts, IneffCriterion::Zero, 4);
        let mut cfg = config(1, 4, SyncPolicy::BricksetLockstep);
        let zero = run_dispatch(&src, &column_layer(4), &BankLayout::new(1), cfg, None).unwrap();
        assert_eq!(zero.stats.cycles, 0);
        cfg.empty_brick = EmptyBrickCost::OneCycle;
        let one = run_dispatch(&src, &column_layer(4), &BankLayout::new(1), cfg, None).unwrap();
        assert_eq!(one.stats.cycles, 1);
        assert_eq!(one.stats.broadcasts, 0);
    }

    #[test]
    fn fetch_latency_prefixes_idle() {
        let acts = ActTensor::from_values(Dims::new(1, 1, 4), alloc::vec![1, 0, 0, 4]).unwrap();
        let src = RawSource::new(&acts, IneffCriterion::Zero, 4);
        let mut cfg = config(1, 4, SyncPolicy::BricksetLockstep);
        cfg.fetch_latency = 3;
        let trace = run_dispatch(&src, &column_layer(4), &BankLayout::new(1), cfg, None).unwrap();
        assert_eq!(trace.stats.cycles, 5);
        assert_eq!(alloc::format!("{}", trace.events[3]), "3,0,0,1");
    }

    #[test]
    fn encoded_source_matches_raw() {
        let acts = ActTensor::from_values(Dims::new(2, 1, 8), alloc::vec![0, 3, 0, 0, 9, 0, 1, 2, 0, 0, 0, 0, 4, 4, 0, 7]).unwrap();
        let layer = LayerConfig {
            input: acts.dims(),
            filter_x: 1,
            filter_y: 1,
            filters: 1,
            stride: 1,
        };
        let raw = run_dispatch(&RawSource::new(&acts, IneffCriterion::Zero, 4), &layer, &BankLayout::new(2), config(2, 4, SyncPolicy::BricksetLockstep), None).unwrap();
        let enc = EncodedTensor::encode(Format::Zfnaf, &acts, IneffCriterion::Zero, 4).unwrap();
        let zf = run_dispatch(&enc, &layer, &BankLayout::new(2), config(2, 4, SyncPolicy::BricksetLockstep), None).unwrap();
        assert_eq!(raw, zf);
    }

    #[test]
    fn inconsistent_source_is_format_error() {
        let acts = ActTensor::zeros(Dims::new(1, 1, 8));
        let src = RawSource::new(&acts, IneffCriterion::Zero, 4);
        let err = run_dispatch(&src, &column_layer(16), &BankLayout::new(2), config(2, 4, SyncPolicy::BricksetLockstep), None);
        assert!(matches!(err, Err(Error::Format(_))));
        let err = run_dispatch(&src, &column_layer(8), &BankLayout::new(3), config(2, 4, SyncPolicy::BricksetLockstep), None);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
