use criterion::Criterion;
use pcrf::frame::Dataset;
use pcrf::synth::{generate_corpus, GeneratorConfig};

/// Times `f` on the default pool and on a single thread. Without the
/// `parallel` feature only the sequential path exists.
pub fn compare<F: Fn() + Sync>(c: &mut Criterion, name: &str, f: F) {
    let mut g = c.benchmark_group(name);
    g.sample_size(10);
    #[cfg(feature = "parallel")]
    {
        g.bench_function("rayon", |b| b.iter(&f));
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        g.bench_function("rayon-1-thread", |b| b.iter(|| one.install(&f)));
    }
    #[cfg(not(feature = "parallel"))]
    g.bench_function("sequential", |b| b.iter(&f));
    g.finish();
}

pub fn corpus(subjects: usize) -> Dataset {
    generate_corpus(&GeneratorConfig {
        n_subjects: subjects,
        n_sequences_per_subject: 3,
        frames_per_sequence: 30,
        ..GeneratorConfig::default()
    })
    .unwrap()
}
