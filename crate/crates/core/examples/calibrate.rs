use std::time::Instant;

use pcrf::eval::{evaluate, outcome_metrics, EvalConfig};
use pcrf::forest::derive_seed;
use pcrf::frame::{Dataset, LandmarkFrame};
use pcrf::inference::ModelRef;
use pcrf::manifest::{select_training_frames, SelectionPolicy};
use pcrf::params::HyperParams;
use pcrf::synth::{generate_corpus, GeneratorConfig};
use pcrf::training::{train_full, train_pcrf, train_static, PairConfig};

/// Landmarks in an eye-aligned frame: origin between the eyes, unit
/// inter-ocular distance, eyes on the x axis.
fn aligned(ds: &Dataset, f: &LandmarkFrame) -> Vec<f64> {
    let (a, b) = (f.point(ds.layout.right_eye), f.point(ds.layout.left_eye));
    let (cx, cy) = ((a.x + b.x) / 2.0, (a.y + b.y) / 2.0);
    let (dx, dy) = ((b.x - a.x) / f.iod(), (b.y - a.y) / f.iod());
    let mut v = Vec::with_capacity(2 * f.landmarks.len() + 1);
    for p in &f.landmarks {
        let (x, y) = ((p.x - cx) / f.iod(), (p.y - cy) / f.iod());
        v.push(x * dx + y * dy);
        v.push(-x * dy + y * dx);
    }
    v
}

/// Neutral (first 3) and apex (last 3) frames of every sequence as
/// aligned landmark vectors with a 0/1 target.
fn probe_set(ds: &Dataset) -> (Vec<Vec<f64>>, Vec<f64>) {
    let sel = select_training_frames(ds, SelectionPolicy::FirstLast(3)).unwrap();
    let x = sel.frames.iter().map(|f| aligned(&sel, f)).collect();
    let y = sel
        .frames
        .iter()
        .map(|f| f64::from(f.label != sel.labels.neutral))
        .collect();
    (x, y)
}

/// Held-out accuracy of a logistic regression separating neutral from apex
/// frames on standardized landmark coordinates.
fn linear_probe(train: &Dataset, test: &Dataset) -> f64 {
    let (x, y) = probe_set(train);
    let d = x[0].len();
    let n = x.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| {
            (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n)
                .sqrt()
                .max(1e-9)
        })
        .collect();
    let z = |r: &[f64]| {
        r.iter()
            .enumerate()
            .map(|(j, v)| (v - mean[j]) / sd[j])
            .collect::<Vec<f64>>()
    };
    let xs: Vec<Vec<f64>> = x.iter().map(|r| z(r)).collect();
    let mut w = vec![0.0; d + 1];
    let score = |w: &[f64], r: &[f64]| w[d] + r.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    for _ in 0..500 {
        let mut g = vec![0.0; d + 1];
        for (r, t) in xs.iter().zip(&y) {
            let e = 1.0 / (1.0 + (-score(&w, r)).exp()) - t;
            for j in 0..d {
                g[j] += e * r[j];
            }
            g[d] += e;
        }
        for j in 0..=d {
            let l2 = if j < d { 1e-3 * w[j] } else { 0.0 };
            w[j] -= 0.5 * (g[j] / n + l2);
        }
    }
    let (tx, ty) = probe_set(test);
    let hits = tx
        .iter()
        .zip(&ty)
        .filter(|(r, t)| (score(&w, &z(r)) > 0.0) == (**t > 0.5))
        .count();
    hits as f64 / tx.len() as f64
}

fn main() {
    let trees: usize = std::env::var("TREES")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    let scale: f64 = std::env::var("SCALE")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(1.0);
    let seeds: u64 = std::env::var("SEEDS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let policy = std::env::var("POLICY")
        .ok()
        .and_then(|s| SelectionPolicy::parse(&s))
        .unwrap_or(SelectionPolicy::AllLabeled);
    let morph: f64 = std::env::var("MORPH")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(GeneratorConfig::default().morphology_strength);
    let offset: f64 = std::env::var("OFFSET")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(GeneratorConfig::default().landmark_offset);
    let base = GeneratorConfig {
        morphology_strength: morph,
        landmark_offset: offset,
        ..GeneratorConfig::default()
    };
    for seed in 0..seeds {
        let t0 = Instant::now();
        let train_cfg = GeneratorConfig {
            seed: derive_seed(seed, 1),
            ..base.clone()
        };
        let test_cfg = GeneratorConfig {
            seed: derive_seed(seed, 2),
            subject_prefix: "t".into(),
            n_subjects: 20,
            ..base.clone()
        };
        let train = generate_corpus(&train_cfg).unwrap();
        let test = generate_corpus(&test_cfg).unwrap();
        let tr = select_training_frames(&train, policy).unwrap();
        let shp = HyperParams::static_profile()
            .geometric_only()
            .with_trees(trees)
            .scaled_candidates(scale);
        let php = HyperParams::pcrf_profile()
            .geometric_only()
            .with_trees(trees)
            .scaled_candidates(scale);
        let rf = train_static(&tr, &shp, seed).unwrap();
        let t1 = t0.elapsed();
        let full = train_full(&tr, &php, &PairConfig::default(), seed).unwrap();
        let t2 = t0.elapsed();
        let bank = train_pcrf(&tr, &php, &PairConfig::default(), None, seed).unwrap();
        let t3 = t0.elapsed();
        let mut cfg = EvalConfig {
            seed,
            ..EvalConfig::default()
        };
        if std::env::var("PRIOR").as_deref() == Ok("static") {
            cfg.window.prior_mode = pcrf::inference::PriorMode::Static;
        }
        let n = test.labels.len();
        let a = outcome_metrics(
            &evaluate(ModelRef::Static(&rf.forest), &test, &cfg).unwrap(),
            n,
        );
        let b = outcome_metrics(
            &evaluate(
                ModelRef::Full {
                    init: &rf.forest,
                    pair: &full.forest,
                },
                &test,
                &cfg,
            )
            .unwrap(),
            n,
        );
        let c = outcome_metrics(
            &evaluate(
                ModelRef::Conditional {
                    init: &rf.forest,
                    bank: &bank,
                },
                &test,
                &cfg,
            )
            .unwrap(),
            n,
        );
        if std::env::var("DIAG").is_ok() {
            println!(
                "full confusion {:?}\npcrf confusion {:?}",
                b.confusion, c.confusion
            );
            let mut ok = [0usize; 2];
            let mut tot = [0usize; 2];
            let src = if std::env::var("DIAG").unwrap() == "train" {
                &tr
            } else {
                &test
            };
            for f in src.frames.iter().filter(|f| f.label.is_some()) {
                let p = pcrf::inference::predict_static(&rf.forest, f);
                let arg = (0..n)
                    .max_by(|&i, &j| p[i].partial_cmp(&p[j]).unwrap())
                    .unwrap();
                let k = usize::from(f.label != Some(0));
                tot[k] += 1;
                ok[k] += usize::from(Some(arg) == f.label);
                if k == 0 && tot[0] < 5 {
                    println!(
                        "neutral frame rf {:?}",
                        p.iter().map(|x| (x * 100.0).round()).collect::<Vec<_>>()
                    );
                }
            }
            println!(
                "rf frame acc neutral {}/{} apex {}/{}",
                ok[0], tot[0], ok[1], tot[1]
            );
            println!(
                "bank cells {:?} skipped {:?}",
                bank.cells.keys().collect::<Vec<_>>(),
                bank.skipped
            );
        }
        if std::env::var("PROBE").is_ok() {
            println!(
                "seed {seed}: neutral-vs-apex linear probe {:.3}",
                linear_probe(&train, &test)
            );
        }
        println!(
            "seed {seed}: rf {:.3} full {:.3} pcrf {:.3} | f1 {:.3} {:.3} {:.3} | train {:?} {:?} {:?} total {:?}",
            a.accuracy, b.accuracy, c.accuracy, a.macro_f1, b.macro_f1, c.macro_f1, t1, t2 - t1, t3 - t2, t0.elapsed()
        );
    }
}
