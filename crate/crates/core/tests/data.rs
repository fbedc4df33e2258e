mod common;

use std::io::BufReader;

use hybridlt::data::{
    class_counts, compose_sc_batch, load_cifar_binary, parse_cifar_binary, read_csv,
    subsample_longtail, synth_gaussian_longtail, write_csv, BatchSampler, LongTailSpec,
    PositiveCap, SamplerKind, SynthConfig, CIFAR_PIXELS, CIFAR_RECORD_BYTES,
};
use hybridlt::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 10000 records, 1000 per class, with pixel bytes that cycle through all
/// 256 values.
fn cifar_bytes() -> Vec<u8> {
    let mut bytes = Vec::with_capacity(10_000 * CIFAR_RECORD_BYTES);
    for i in 0..10_000usize {
        bytes.push((i % 10) as u8);
        bytes.extend((0..CIFAR_PIXELS).map(|j| ((i * 7 + j * 13) % 256) as u8));
    }
    bytes
}

#[test]
fn cifar_file_parses_bit_exactly() {
    let bytes = cifar_bytes();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data_batch_1.bin");
    std::fs::write(&path, &bytes).unwrap();
    let ds = load_cifar_binary(&path, 10).unwrap();
    assert_eq!(ds.len(), 10_000);
    assert_eq!(ds.dim(), 3072);
    assert_eq!(ds.class_counts(), vec![1000; 10]);
    for (i, record) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        assert_eq!(ds.labels()[i], record[0] as usize);
        let row = ds.features().row(i);
        for (v, &b) in row.iter().zip(&record[1..]) {
            assert_eq!(v.to_bits(), (f64::from(b) / 255.0).to_bits());
        }
    }
}

#[test]
fn cifar_errors_carry_byte_offsets() {
    let mut bytes = cifar_bytes()[..3 * CIFAR_RECORD_BYTES].to_vec();
    bytes.truncate(bytes.len() - 5);
    match parse_cifar_binary(&bytes, 10) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 2 * CIFAR_RECORD_BYTES as u64),
        other => panic!("{other:?}"),
    }
    let mut bytes = cifar_bytes()[..2 * CIFAR_RECORD_BYTES].to_vec();
    bytes[CIFAR_RECORD_BYTES] = 10;
    match parse_cifar_binary(&bytes, 10) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, CIFAR_RECORD_BYTES as u64),
        other => panic!("{other:?}"),
    }
}

#[test]
fn cifar_long_tail_matches_the_profile() {
    let ds = parse_cifar_binary(&cifar_bytes(), 10).unwrap();
    let spec = LongTailSpec::new(10, 1000, 100.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lt = subsample_longtail(&ds, &spec, &mut rng).unwrap();
    assert_eq!(lt.class_counts(), common::longtail_profile(10, 1000, 100.0));
    // Every kept row is an unmodified original record.
    for row in lt.features().row_iter().take(50) {
        assert!(ds.features().row_iter().any(|r| r == row));
    }
}

#[test]
fn full_scale_profile() {
    let spec = LongTailSpec::new(10, 5000, 100.0).unwrap();
    let counts = class_counts(&spec).unwrap();
    assert_eq!(counts, common::longtail_profile(10, 5000, 100.0));
    assert_eq!(counts, vec![5000, 2997, 1797, 1077, 646, 387, 232, 139, 83, 50]);
    let spec = LongTailSpec::new(100, 500, 100.0).unwrap();
    let counts = class_counts(&spec).unwrap();
    assert_eq!(counts, common::longtail_profile(100, 500, 100.0));
    assert_eq!((counts[0], counts[99]), (500, 5));
}

#[test]
fn subsampling_a_5000_row_balanced_set() {
    let (full, _) = synth_gaussian_longtail(&SynthConfig {
        spec: LongTailSpec::new(10, 500, 1.0).unwrap(),
        dim: 4,
        class_sep: 2.0,
        test_per_class: 1,
        seed: 1,
    })
    .unwrap();
    assert_eq!(full.len(), 5000);
    let spec = LongTailSpec::new(10, 500, 10.0).unwrap();
    let a = subsample_longtail(&full, &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = subsample_longtail(&full, &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.class_counts(), class_counts(&spec).unwrap());
    let same = LongTailSpec::new(10, 500, 1.0).unwrap();
    let c = subsample_longtail(&full, &same, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(c, full);
}

#[test]
fn csv_round_trip_is_exact() {
    let (train, _) = synth_gaussian_longtail(&SynthConfig {
        spec: LongTailSpec::new(10, 100, 100.0).unwrap(),
        dim: 16,
        class_sep: 3.0,
        test_per_class: 1,
        seed: 4,
    })
    .unwrap();
    let mut buf = Vec::new();
    write_csv(&train, &mut buf).unwrap();
    let back = read_csv(BufReader::new(&buf[..]), 10).unwrap();
    assert_eq!(back, train);
    assert_eq!(back.class_counts(), common::longtail_profile(10, 100, 100.0));
}

#[test]
fn balanced_sampler_equalizes_class_exposure() {
    let (train, _) = synth_gaussian_longtail(&SynthConfig {
        spec: LongTailSpec::new(5, 400, 50.0).unwrap(),
        dim: 2,
        class_sep: 1.0,
        test_per_class: 1,
        seed: 2,
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut sampler = BatchSampler::new(SamplerKind::Balanced, &train).unwrap();
    let mut seen = [0usize; 5];
    for _ in 0..200 {
        for i in sampler.next_batch(&train, 100, &mut rng).unwrap() {
            seen[train.labels()[i]] += 1;
        }
    }
    for s in seen {
        assert!((s as f64 / 20_000.0 - 0.2).abs() < 0.01, "{seen:?}");
    }
    let mut sampler = BatchSampler::new(SamplerKind::Random, &train).unwrap();
    sampler.begin_epoch(&mut rng);
    let mut all: Vec<usize> = (0..train.len().div_ceil(64))
        .flat_map(|_| sampler.next_batch(&train, 64, &mut rng).unwrap())
        .collect();
    all.sort_unstable();
    assert_eq!(all, (0..train.len()).collect::<Vec<_>>());
}

#[test]
fn contrastive_batches_pair_views() {
    let (train, _) = synth_gaussian_longtail(&SynthConfig {
        spec: LongTailSpec::new(4, 50, 10.0).unwrap(),
        dim: 3,
        class_sep: 1.0,
        test_per_class: 1,
        seed: 2,
    })
    .unwrap();
    let mut sampler = BatchSampler::new(SamplerKind::Random, &train).unwrap();
    let (mut a, mut b) = (ChaCha8Rng::seed_from_u64(1), ChaCha8Rng::seed_from_u64(2));
    sampler.begin_epoch(&mut a);
    let batch =
        compose_sc_batch(&train, &mut sampler, 20, 0.1, PositiveCap::AtMost(1), &mut a, &mut b)
            .unwrap();
    assert_eq!(batch.len(), 20);
    assert_eq!(&batch.labels[..10], &batch.labels[10..]);
    assert!(batch.positive_counts().iter().all(|&c| c == 1));
    let z = batch.rows.map(|v| v * 0.0 + 1.0 / 3f64.sqrt());
    let eb = batch.embedding_batch(z, 4).unwrap();
    for i in 0..10 {
        assert_eq!(eb.positives()[i], vec![i + 10]);
        assert_eq!(eb.positives()[i + 10], vec![i]);
    }
}
