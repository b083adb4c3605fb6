use std::time::Instant;

use pcrf::eval::{evaluate, EvalConfig};
use pcrf::experiment::{train_bundle, TrainConfig};
use pcrf::forest::derive_seed;
use pcrf::inference::ModelKind;
use pcrf::synth::{generate_corpus, GeneratorConfig, PoseMode};

fn env<T: std::str::FromStr>(k: &str, d: T) -> T {
    std::env::var(k)
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(d)
}

fn main() {
    let trees: usize = env("TREES", 20);
    let scale: f64 = env("SCALE", 0.25);
    let seeds: u64 = env("SEEDS", 1);
    let subjects: usize = env("SUBJECTS", 12);
    let frames: usize = env("FRAMES", 30);
    let base = GeneratorConfig {
        n_subjects: subjects,
        frames_per_sequence: frames,
        morphology_strength: env("MORPH", GeneratorConfig::default().morphology_strength),
        landmark_offset: env("OFFSET", GeneratorConfig::default().landmark_offset),
        ..GeneratorConfig::default()
    };
    for seed in 0..seeds {
        let t0 = Instant::now();
        let frontal = GeneratorConfig {
            seed: derive_seed(seed, 1),
            ..base.clone()
        };
        let multi = GeneratorConfig {
            pose_mode: PoseMode::Bins15,
            ..frontal.clone()
        };
        let test_cfg = GeneratorConfig {
            seed: derive_seed(seed, 2),
            subject_prefix: "t".into(),
            n_subjects: subjects / 2,
            ..multi.clone()
        };
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        }
        .reduced(trees, scale);
        let fb = train_bundle(
            &generate_corpus(&frontal).unwrap(),
            &TrainConfig {
                models: vec![ModelKind::Pcrf],
                ..cfg.clone()
            },
        )
        .unwrap();
        let t1 = t0.elapsed();
        let mb = train_bundle(
            &generate_corpus(&multi).unwrap(),
            &TrainConfig {
                models: vec![ModelKind::Mvpcrf],
                ..cfg.clone()
            },
        )
        .unwrap();
        let t2 = t0.elapsed();
        let test = generate_corpus(&test_cfg).unwrap();
        let ecfg = EvalConfig {
            seed,
            ..EvalConfig::default()
        };
        let central = cfg.bins.central();
        let mut acc = [[0usize; 2]; 2];
        let mut tot = [0usize; 2];
        let a = evaluate(fb.model(ModelKind::Pcrf).unwrap(), &test, &ecfg).unwrap();
        let b = evaluate(mb.model(ModelKind::Mvpcrf).unwrap(), &test, &ecfg).unwrap();
        let c = evaluate(fb.model(ModelKind::Rf).unwrap(), &test, &ecfg).unwrap();
        let d = evaluate(mb.model(ModelKind::Mvrf).unwrap(), &test, &ecfg).unwrap();
        let mut per_bin = vec![[0usize; 5]; cfg.bins.len()];
        for (((x, y), z), w) in a.iter().zip(&b).zip(&c).zip(&d) {
            let name = &test.sequences[x.sequence];
            let bin: usize = name.rsplit("_b").next().unwrap().parse().unwrap();
            let k = usize::from(bin != central);
            tot[k] += 1;
            acc[k][0] += usize::from(x.correct());
            acc[k][1] += usize::from(y.correct());
            per_bin[bin][0] += 1;
            per_bin[bin][1] += usize::from(x.correct());
            per_bin[bin][2] += usize::from(y.correct());
            per_bin[bin][3] += usize::from(z.correct());
            per_bin[bin][4] += usize::from(w.correct());
        }
        let r = |k: usize, m: usize| acc[k][m] as f64 / tot[k] as f64;
        println!(
            "seed {seed}: center pcrf {:.3} mvpcrf {:.3} | off pcrf {:.3} mvpcrf {:.3} | train {:?} {:?} total {:?}",
            r(0, 0), r(0, 1), r(1, 0), r(1, 1), t1, t2 - t1, t0.elapsed()
        );
        if std::env::var("DIAG").is_ok() {
            for (bin, c) in per_bin.iter().enumerate() {
                let p = cfg.bins.center(bin);
                println!(
                    "  bin {bin:2} ({:5.1},{:5.1}) of {}: rf {} mvrf {} pcrf {} mvpcrf {}",
                    p.yaw, p.pitch, c[0], c[3], c[4], c[1], c[2]
                );
            }
        }
    }
}
