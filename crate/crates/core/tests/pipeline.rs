use pcrf::eval::{evaluate, EvalConfig, SequenceOutcome};
use pcrf::experiment::{train_bundle, TrainConfig};
use pcrf::inference::ModelKind;
use pcrf::model::ModelBundle;
use pcrf::synth::{generate_corpus, GeneratorConfig, PoseMode};

const ALL: [ModelKind; 5] = ModelKind::ALL;

fn corpus(seed: u64) -> pcrf::frame::Dataset {
    generate_corpus(&GeneratorConfig {
        n_subjects: 4,
        n_sequences_per_subject: 2,
        frames_per_sequence: 16,
        pose_mode: PoseMode::Bins15,
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

fn config() -> TrainConfig {
    TrainConfig {
        models: ALL.to_vec(),
        seed: 3,
        ..TrainConfig::default()
    }
    .reduced(4, 0.05)
}

fn run(
    bundle: &ModelBundle,
    test: &pcrf::frame::Dataset,
) -> Vec<(ModelKind, Vec<SequenceOutcome>)> {
    let cfg = EvalConfig {
        trees: Some(8),
        seed: 5,
        ..EvalConfig::default()
    };
    ALL.iter()
        .map(|&k| (k, evaluate(bundle.model(k).unwrap(), test, &cfg).unwrap()))
        .collect()
}

fn assert_same(a: &[(ModelKind, Vec<SequenceOutcome>)], b: &[(ModelKind, Vec<SequenceOutcome>)]) {
    for ((ka, oa), (kb, ob)) in a.iter().zip(b) {
        assert_eq!(ka, kb);
        assert_eq!(oa.len(), ob.len());
        for (x, y) in oa.iter().zip(ob) {
            assert_eq!(x.trace, y.trace, "{ka:?} sequence {}", x.sequence);
            assert_eq!(x.decision.label, y.decision.label);
        }
    }
}

#[test]
fn bundle_roundtrip_preserves_predictions() {
    let bundle = train_bundle(&corpus(1), &config()).unwrap();
    assert_eq!(bundle.available().len(), ALL.len());
    let test = corpus(2);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.pcrf");
    bundle.save(&path).unwrap();
    let loaded = ModelBundle::load(&path).unwrap();
    assert_eq!(loaded.to_bytes().unwrap(), bundle.to_bytes().unwrap());
    assert_same(&run(&bundle, &test), &run(&loaded, &test));
}

#[test]
fn outputs_are_distributions() {
    let bundle = train_bundle(&corpus(1), &config()).unwrap();
    for (kind, outcomes) in run(&bundle, &corpus(7)) {
        for o in &outcomes {
            assert_eq!(o.trace.len(), o.frames.len());
            for p in &o.trace {
                let sum: f64 = p.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "{kind:?} sums to {sum}");
                assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}

#[test]
fn untrained_models_are_unavailable() {
    let cfg = TrainConfig {
        models: vec![ModelKind::Rf],
        ..config()
    };
    let bundle = train_bundle(&corpus(1), &cfg).unwrap();
    assert!(bundle.model(ModelKind::Rf).is_ok());
    assert!(bundle.model(ModelKind::Pcrf).is_err());
    assert!(bundle.model(ModelKind::Mvpcrf).is_err());
}

#[cfg(feature = "parallel")]
#[test]
fn thread_count_does_not_change_results() {
    let pool = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
    };
    let train = corpus(1);
    let test = corpus(2);
    let one = pool(1).install(|| {
        let b = train_bundle(&train, &config()).unwrap();
        (b.to_bytes().unwrap(), run(&b, &test))
    });
    let many = pool(3).install(|| {
        let b = train_bundle(&train, &config()).unwrap();
        (b.to_bytes().unwrap(), run(&b, &test))
    });
    assert_eq!(one.0, many.0);
    assert_same(&one.1, &many.1);
}
