use criterion::{criterion_group, criterion_main, Criterion};
use hybridlt::config::ExperimentConfig;
use hybridlt::training::LossKind;
use hybridlt::Trainer;

fn epoch(c: &mut Criterion) {
    let mut group = c.benchmark_group("epoch");
    group.sample_size(10);
    for loss in [LossKind::CeCe, LossKind::Sc, LossKind::Psc, LossKind::Mpsc] {
        let mut cfg = ExperimentConfig::parse("").unwrap();
        cfg.train.loss = loss;
        cfg.train.epochs = 100_000;
        cfg.train.lr_milestones.clear();
        if loss == LossKind::Mpsc {
            cfg.train.model.prototypes_per_class = 3;
        }
        let (train, _, train_cfg) = cfg.prepare().unwrap();
        let mut trainer = Trainer::new(&train, None, train_cfg).unwrap();
        group.bench_function(loss.to_string(), |b| b.iter(|| trainer.run_epoch().unwrap()));
    }
    group.finish();
}

criterion_group!(benches, epoch);
criterion_main!(benches);
