use criterion::{criterion_group, criterion_main, Criterion};
use pcrf::manifest::{select_training_frames, SelectionPolicy};
use pcrf::params::HyperParams;
use pcrf::training::{train_pcrf, train_static, PairConfig};

mod common;

fn training(c: &mut Criterion) {
    let ds = common::corpus(8);
    let train = select_training_frames(&ds, SelectionPolicy::AllLabeled).unwrap();
    let shp = HyperParams::static_profile()
        .geometric_only()
        .with_trees(16)
        .scaled_candidates(0.25);
    let php = HyperParams::pcrf_profile()
        .geometric_only()
        .with_trees(8)
        .scaled_candidates(0.25);
    common::compare(c, "train_static", || {
        train_static(&train, &shp, 1).unwrap();
    });
    common::compare(c, "train_pcrf", || {
        train_pcrf(&train, &php, &PairConfig::default(), None, 1).unwrap();
    });
}

criterion_group!(benches, training);
criterion_main!(benches);
