use std::collections::BTreeSet;

use proptest::prelude::*;
use rough_contact::dataset::{
    build_database, clean, normalize_rows, replay_record, sample_displacements, split, train_size, DatabaseConfig,
    Dataset, SampleRecord, SamplingPlan, Status, Stratum, Timing, FEATURE_NAMES,
};
use rough_contact::stats::StatVector;
use rough_contact::Error;

fn small_config(seed: u64) -> DatabaseConfig {
    DatabaseConfig {
        seed,
        surfaces: 50,
        deltas_per_surface: 4,
        iterations: 5,
        timing: Timing::Off,
        ..Default::default()
    }
}

fn csv(ds: &Dataset) -> Vec<u8> {
    let mut buf = Vec::new();
    ds.write_csv(&mut buf).unwrap();
    buf
}

#[test]
fn database_is_deterministic_replayable_and_monotone() {
    let cfg = small_config(17);
    let a = build_database(&cfg).unwrap();
    let b = build_database(&cfg).unwrap();
    assert_eq!(a.dataset.len(), 200);
    assert_eq!(csv(&a.dataset), csv(&b.dataset));
    assert_eq!(FEATURE_NAMES.len(), 23);

    for r in a.dataset.records.iter().step_by(37) {
        assert_eq!(&replay_record(&cfg, r), r, "record {} does not replay", r.id);
    }
    for r in a.dataset.records.iter().filter(|r| r.status == Status::Ok) {
        assert!((0.0..=110.0).contains(&r.effective_area));
        assert!((5.0..=45.0).contains(&r.delta));
    }
    // Records of one surface share its statistics; more approach never loses contact.
    for chunk in a.dataset.records.chunks(cfg.deltas_per_surface) {
        assert!(chunk.iter().all(|r| r.seed == chunk[0].seed && r.stats == chunk[0].stats));
        let mut by_delta: Vec<&SampleRecord> = chunk.iter().collect();
        by_delta.sort_by(|x, y| x.delta.total_cmp(&y.delta));
        for w in by_delta.windows(2) {
            assert!(w[1].effective_area >= w[0].effective_area, "surface seed {}", w[0].seed);
        }
    }
}

#[test]
fn database_csv_round_trips_through_a_file() {
    let ds = build_database(&DatabaseConfig { surfaces: 4, deltas_per_surface: 2, ..small_config(3) }).unwrap().dataset;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db.csv");
    std::fs::write(&path, csv(&ds)).unwrap();
    let back = Dataset::read_csv(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back.records, ds.records);
    assert_eq!(csv(&back), csv(&ds));
}

#[test]
fn config_text_round_trip_and_unknown_keys() {
    let cfg = small_config(99);
    assert_eq!(DatabaseConfig::parse(&cfg.to_text()).unwrap(), cfg);
    assert!(matches!(DatabaseConfig::parse("surfaces = 3\nspeed = 9\n"), Err(Error::Config(_))));
}

fn synthetic(n: usize, failing: &[u64]) -> Dataset {
    let records = (0..n as u64)
        .map(|id| SampleRecord {
            id,
            seed: id,
            hurst: 0.6,
            sigma0: 5.0,
            delta: 5.0 + id as f64,
            stats: StatVector::from_array([1.0 + id as f64; 22]),
            effective_area: if failing.contains(&id) { f64::NAN } else { id as f64 },
            sim_time_s: 0.0,
            status: if failing.contains(&id) { Status::SolverFailed } else { Status::Ok },
        })
        .collect();
    Dataset::new(records).unwrap()
}

#[test]
fn clean_drops_failed_records() {
    let (c, removed) = clean(&synthetic(10, &[2, 7]));
    assert_eq!(removed, 2);
    assert_eq!(c.ids(), vec![0, 1, 3, 4, 5, 6, 8, 9]);
}

#[test]
fn full_scale_split_sizes() {
    assert_eq!(train_size(15_878, 0.8), 12_703);
    assert_eq!(15_878 - train_size(15_878, 0.8), 3_175);
}

#[test]
fn zero_norm_rows_name_the_record() {
    let x = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    assert!(matches!(normalize_rows(&x, &[4, 9]), Err(Error::ZeroNormRow { sample_id: 9 })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_the_dataset(n in 2usize..200, f in 0.05f64..0.95, seed in any::<u64>()) {
        let ds = synthetic(n, &[]);
        let (train, test) = split(&ds, f, seed).unwrap();
        prop_assert_eq!(train.len(), train_size(n, f));
        let a: BTreeSet<u64> = train.ids().into_iter().collect();
        let b: BTreeSet<u64> = test.ids().into_iter().collect();
        prop_assert!(a.is_disjoint(&b));
        prop_assert_eq!(a.union(&b).count(), n);
    }

    #[test]
    fn row_normalization_gives_unit_rows(seed in any::<u64>(), rows in 1usize..20) {
        let mut s = seed;
        let x = nalgebra::DMatrix::from_fn(rows, 23, |_, _| {
            s = rough_contact::rng::splitmix64(s);
            1.0 + (s >> 11) as f64 / (1u64 << 50) as f64
        });
        let ids: Vec<u64> = (0..rows as u64).collect();
        let y = normalize_rows(&x, &ids).unwrap();
        for r in y.row_iter() {
            prop_assert!((r.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn stratified_sampling_respects_the_plan(count in 1usize..500, w in 0.05f64..0.95, seed in any::<u64>()) {
        let plan = SamplingPlan {
            strata: vec![Stratum { lo: 5.0, hi: 25.0, weight: w }, Stratum { lo: 25.0, hi: 45.0, weight: 1.0 - w }],
            count,
            seed,
        };
        let alloc = plan.allocation();
        prop_assert_eq!(alloc.iter().sum::<usize>(), count);
        for (a, s) in alloc.iter().zip(&plan.strata) {
            prop_assert!((*a as f64 - s.weight * count as f64).abs() < 1.0);
        }
        let d = sample_displacements(&plan).unwrap();
        prop_assert_eq!(d.len(), count);
        prop_assert_eq!(d.iter().filter(|&&v| (5.0..25.0).contains(&v)).count(), alloc[0]);
        prop_assert_eq!(d.iter().filter(|&&v| v > 25.0 && v <= 45.0).count(), alloc[1]);
    }
}
