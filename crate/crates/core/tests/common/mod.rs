#![allow(dead_code)]

use proptest::prelude::*;
use sparse_accel_core::dispatch::{EmptyBrickCost, SyncPolicy};
use sparse_accel_core::sim::{ProductScope, TileConfig};
use sparse_accel_core::tensor::{ActTensor, Dims, FilterSet, LayerConfig};
use sparse_accel_core::workloads::{gen_synthetic, SyntheticSpec};

#[derive(Debug, Clone)]
pub struct Case {
    pub acts: ActTensor,
    pub filters: FilterSet,
    pub layer: LayerConfig,
    pub tile: TileConfig,
}

/// Small random layers with varied geometry and sparsity.
pub fn layer_case() -> impl Strategy<Value = Case> {
    (
        prop::sample::select(vec![2usize, 4, 8, 16]),
        1usize..=3,
        1usize..=3,
        1usize..=2,
        1usize..=4,
        1usize..=3,
        1usize..=2,
        1usize..=8,
        0.0f64..=1.0,
        0.0f64..=1.0,
        any::<u64>(),
    )
        .prop_flat_map(|(brick, fx, fy, stride, columns, extra, tiles, filters, pa, pw, seed)| {
            (
                Just((brick, fx, fy, stride, columns, extra, tiles, filters, pa, pw, seed)),
                prop::sample::select(vec![1usize, 2, 4, 8]),
                1usize..=4,
                any::<bool>(),
                any::<bool>(),
                any::<bool>(),
            )
        })
        .prop_map(|((brick, fx, fy, stride, columns, extra, tiles, filters, pa, pw, seed), lanes, fpt, lock, one, per_tile)| {
            let x = fx + stride * extra;
            let y = fy + stride * (extra % 2 + 1);
            let spec = SyntheticSpec {
                input: Dims::new(x, y, columns * brick),
                filters,
                filter_x: fx,
                filter_y: fy,
                stride,
                brick,
                act_sparsity: pa,
                weight_sparsity: pw,
                min: -20,
                max: 20,
                seed,
            };
            let (acts, filters_set) = gen_synthetic(&spec).unwrap();
            let tile = TileConfig {
                tiles,
                filters_per_tile: fpt,
                lanes,
                brick,
                sync: if lock { SyncPolicy::BricksetLockstep } else { SyncPolicy::WindowSync },
                empty_brick: if one { EmptyBrickCost::OneCycle } else { EmptyBrickCost::ZeroCycles },
                product_scope: if per_tile { ProductScope::PerTile } else { ProductScope::AllResident },
                ..TileConfig::default()
            };
            Case { layer: spec.layer(), acts, filters: filters_set, tile }
        })
}

/// Random tensor with roughly `p` zeros.
pub fn tensor(x: usize, y: usize, depth: usize, p: f64, seed: u64) -> ActTensor {
    let spec = SyntheticSpec {
        input: Dims::new(x, y, depth),
        filters: 1,
        filter_x: 1,
        filter_y: 1,
        brick: 1,
        act_sparsity: p,
        weight_sparsity: 0.0,
        seed,
        ..SyntheticSpec::default()
    };
    gen_synthetic(&spec).unwrap().0
}
