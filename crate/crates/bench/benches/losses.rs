use criterion::{black_box, criterion_group, criterion_main, Criterion};
use hybridlt::losses::{ce_loss, mpsc_loss_kernel, psc_loss_kernel, sc_loss_kernel, LogitsBatch};
use hybridlt::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 256;
const DIM: usize = 32;
const CLASSES: usize = 10;
const TAU: f64 = 0.1;

fn unit_rows(rows: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Matrix::random_normal(rows, DIM, 1.0, rng);
    for r in 0..rows {
        let row = m.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    m
}

fn losses(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let labels: Vec<usize> = (0..N).map(|i| i % CLASSES).collect();
    let z = unit_rows(N, &mut rng);
    let logits = Matrix::random_normal(N, CLASSES, 1.0, &mut rng);
    let batch = LogitsBatch::new(logits, labels.clone()).unwrap();
    c.bench_function("ce/256x10", |b| b.iter(|| ce_loss(black_box(&batch))));

    let positives: Vec<Vec<usize>> = (0..N)
        .map(|i| (0..N).filter(|&j| j != i && labels[j] == labels[i]).collect())
        .collect();
    c.bench_function("sc/256x32", |b| {
        b.iter(|| sc_loss_kernel(black_box(&z), &positives, TAU).unwrap())
    });

    let protos = unit_rows(CLASSES, &mut rng);
    c.bench_function("psc/256x32", |b| {
        b.iter(|| psc_loss_kernel(black_box(&z), &labels, &protos, TAU).unwrap())
    });

    let per_class = 3;
    let protos = unit_rows(CLASSES * per_class, &mut rng);
    let weights = Matrix::from_rows(
        &(0..N)
            .map(|_| {
                let w: Vec<f64> = (0..per_class).map(|_| rng.gen_range(0.1..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|v| v / s).collect::<Vec<_>>()
            })
            .collect::<Vec<_>>(),
    )
    .unwrap();
    c.bench_function("mpsc/256x32x3", |b| {
        b.iter(|| mpsc_loss_kernel(black_box(&z), &labels, &protos, per_class, TAU, &weights).unwrap())
    });
}

criterion_group!(benches, losses);
criterion_main!(benches);
