use sparse_accel_core::tensor::Dims;
use sparse_accel_core::workloads::{gen_synthetic, SyntheticSpec};

fn spec(p: f64, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        input: Dims::new(64, 64, 64),
        filters: 1,
        filter_x: 1,
        filter_y: 1,
        act_sparsity: p,
        weight_sparsity: 0.0,
        seed,
        ..SyntheticSpec::default()
    }
}

#[test]
fn zero_count_within_three_sigma() {
    let n = 64.0 * 64.0 * 64.0;
    for seed in [7, 42, 12345] {
        let (acts, _) = gen_synthetic(&spec(0.5, seed)).unwrap();
        let zeros = acts.values().iter().filter(|&&v| v == 0).count() as f64;
        let sigma = (n * 0.25f64).sqrt();
        assert!((zeros - 131072.0).abs() <= 3.0 * sigma, "seed {seed}: {zeros} zeros");
    }
}

#[test]
fn values_stay_in_range_and_skip_zero() {
    let s = SyntheticSpec { min: -3, max: 5, ..spec(0.0, 1) };
    let (acts, filters) = gen_synthetic(&s).unwrap();
    for &v in acts.values().iter().chain(filters.values()) {
        assert!((-3..=5).contains(&v) && v != 0);
    }
    // every nonzero value in range shows up
    for v in (-3..=5).filter(|&v| v != 0) {
        assert!(acts.values().contains(&v));
    }
}

/// Reference SplitMix64, written out from the published algorithm.
struct Oracle(u64);

impl Oracle {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn value(&mut self, p: f64, min: i64, max: i64) -> i16 {
        let u = (self.next() >> 11) as f64 / (1u64 << 53) as f64;
        if u < p {
            return 0;
        }
        let nonzero: Vec<i64> = (min..=max).filter(|&v| v != 0).collect();
        nonzero[(self.next() % nonzero.len() as u64) as usize] as i16
    }
}

#[test]
fn oracle_reference_vector() {
    assert_eq!(Oracle(1234567).next(), 6457827717110365317);
}

#[test]
fn stream_matches_reference_generator() {
    let s = SyntheticSpec {
        input: Dims::new(3, 2, 5),
        filters: 2,
        filter_x: 2,
        filter_y: 1,
        brick: 4,
        act_sparsity: 0.4,
        weight_sparsity: 0.25,
        min: -9,
        max: 6,
        seed: 2024,
        ..SyntheticSpec::default()
    };
    let (acts, filters) = gen_synthetic(&s).unwrap();
    let mut o = Oracle(2024);
    let a: Vec<i16> = (0..30).map(|_| o.value(0.4, -9, 6)).collect();
    let w: Vec<i16> = (0..20).map(|_| o.value(0.25, -9, 6)).collect();
    assert_eq!(acts.logical_values(), a);
    assert_eq!(filters.logical_values(), w);
}
