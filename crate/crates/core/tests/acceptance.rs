//! End-to-end acceptance checks, one test per criterion. Each prints a
//! single PASS line on success (visible with `--nocapture`); a failed
//! assertion fails the test.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use parkdur::dataset::{apply_transform, center_scale, encode, load_csv, Schema};
use parkdur::demand::{demand_extended, demand_static, DemandCoefficients, LandUseEntry};
use parkdur::explain::{fit_surrogate, garson, LimeConfig};
use parkdur::matrix::Matrix;
use parkdur::network::{Gradient, Network, OutputActivation};
use parkdur::selection::{accuracy, expected_accuracy, kappa, kfold_split, ConfusionMatrix};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pass(n: u32, what: &str) {
    println!("criterion {n}: PASS ({what})");
}

#[test]
fn criterion_1_kappa_oracle_obp() {
    let counts = vec![
        116, 6, 1, 0, 0, //
        8, 60, 2, 0, 0, //
        5, 5, 53, 3, 0, //
        0, 0, 2, 110, 3, //
        0, 0, 0, 4, 104,
    ];
    let cm = ConfusionMatrix::from_counts(5, counts).unwrap();
    let acc = accuracy(&cm);
    let exp = expected_accuracy(&cm);
    let k = kappa(&cm).unwrap();
    assert!((acc - 0.91908).abs() < 1e-4, "accuracy {acc}");
    assert!((exp - 0.2138).abs() < 5e-4, "expected {exp}");
    assert!((k - 0.897).abs() < 2e-3, "kappa {k}");
    pass(1, &format!("accuracy {acc:.5}, expected {exp:.4}, kappa {k:.3}"));
}

#[test]
fn criterion_2_kappa_oracle_msp() {
    let counts = vec![
        255, 25, 2, 0, 0, //
        9, 108, 3, 1, 0, //
        0, 5, 19, 1, 0, //
        0, 0, 0, 12, 0, //
        0, 0, 0, 0, 235,
    ];
    let cm = ConfusionMatrix::from_counts(5, counts).unwrap();
    let acc = accuracy(&cm);
    let exp = expected_accuracy(&cm);
    let k = kappa(&cm).unwrap();
    assert!((acc - 0.93185).abs() < 1e-4, "accuracy {acc}");
    assert!((exp - 0.3229).abs() < 5e-4, "expected {exp}");
    assert!((k - 0.899).abs() < 2e-3, "kappa {k}");
    pass(2, &format!("accuracy {acc:.5}, expected {exp:.4}, kappa {k:.3}"));
}

fn numeric_gradient(net: &Network, x: &Matrix, y: &[usize], h: f64) -> Gradient {
    let mut probe = net.clone();
    let eval = |n: &Network| n.loss(x, y).unwrap();
    let mut diff = |get: &dyn Fn(&mut Network) -> &mut Vec<f64>| -> Vec<f64> {
        let len = get(&mut probe).len();
        let mut out = Vec::with_capacity(len);
        for i in 0..len {
            let orig = get(&mut probe)[i];
            get(&mut probe)[i] = orig + h;
            let up = eval(&probe);
            get(&mut probe)[i] = orig - h;
            let down = eval(&probe);
            get(&mut probe)[i] = orig;
            out.push((up - down) / (2.0 * h));
        }
        out
    };
    Gradient {
        w1: diff(&|n| &mut n.w1),
        b1: diff(&|n| &mut n.b1),
        w2: diff(&|n| &mut n.w2),
        b2: diff(&|n| &mut n.b2),
    }
}

fn rel_error(a: &Gradient, b: &Gradient) -> f64 {
    let pairs = a
        .w1
        .iter()
        .zip(&b.w1)
        .chain(a.b1.iter().zip(&b.b1))
        .chain(a.w2.iter().zip(&b.w2))
        .chain(a.b2.iter().zip(&b.b2));
    let worst = pairs.fold(0.0f64, |m, (&ga, &gb)| m.max((ga - gb).abs()));
    worst / a.inf_norm().max(b.inf_norm()).max(1.0)
}

#[test]
fn criterion_3_gradient_correctness() {
    let mut worst = 0.0f64;
    for seed in 0..25u64 {
        let d_in = 1 + (seed as usize % 8);
        let d_hidden = 1 + (seed as usize % 6);
        let decay = [0.0, 0.001, 0.01][seed as usize % 3];
        let net = Network::init(d_in, d_hidden, 5, decay, seed, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
        let n = 20;
        let mut x = Matrix::zeros(n, d_in);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            for j in 0..d_in {
                x.set(i, j, rng.gen_range(-2.0..2.0));
            }
            y.push(rng.gen_range(0..5));
        }
        let analytic = net.gradient(&x, &y).unwrap();
        let numeric = numeric_gradient(&net, &x, &y, 1e-6);
        worst = worst.max(rel_error(&analytic, &numeric));
    }
    assert!(worst < 1e-6, "worst relative error {worst:e}");
    pass(3, &format!("25 networks, worst relative error {worst:.2e}"));
}

#[test]
fn criterion_4_garson_oracle() {
    for seed in 0..100u64 {
        let d_in = 2 + (seed as usize % 6);
        let d_hidden = 1 + (seed as usize % 5);
        let net = Network::init(d_in, d_hidden, 5, 0.0, seed, 0.5).unwrap();
        let names: Vec<String> = (0..d_in).map(|i| format!("x{i}")).collect();
        let table = garson(&net, &names).unwrap();
        let total: f64 = table.entries.iter().map(|e| e.1).sum();
        assert!((total - 1.0).abs() < 1e-9, "seed {seed}: sum {total}");
    }

    // 2-2-1 hand fixture: hidden weights [[1,2],[-2,1]], output [2,1]
    let net = Network {
        d_in: 2,
        d_hidden: 2,
        d_out: 1,
        w1: vec![1.0, 2.0, -2.0, 1.0],
        b1: vec![0.0, 0.0],
        w2: vec![2.0, 1.0],
        b2: vec![0.0],
        decay: 0.0,
        output: OutputActivation::Softmax,
    };
    let table = garson(&net, &["a".to_string(), "b".to_string()]).unwrap();
    let a = table.entries.iter().find(|e| e.0 == "a").unwrap().1;
    let b = table.entries.iter().find(|e| e.0 == "b").unwrap().1;
    assert!((a - 4.0 / 9.0).abs() < 1e-9, "a = {a}");
    assert!((b - 5.0 / 9.0).abs() < 1e-9, "b = {b}");
    pass(4, "100 random networks sum to 1; 2-2-1 fixture = (4/9, 5/9)");
}

#[test]
fn criterion_5_lime_linear_recovery() {
    // exactly linear black box over d = 4 binary features, all 16 patterns
    let d = 4;
    let truth = [0.5, -0.3, 0.2, -0.1];
    let intercept = 0.4;
    let rows: Vec<Vec<f64>> = (0..1u32 << d)
        .map(|bits| (0..d).map(|j| f64::from(bits >> j & 1)).collect())
        .collect();
    let zb = Matrix::from_rows(&rows);
    let targets: Vec<f64> = rows
        .iter()
        .map(|r| intercept + r.iter().zip(&truth).map(|(z, w)| z * w).sum::<f64>())
        .collect();
    let weights = vec![1.0; rows.len()];
    let cfg = LimeConfig {
        ridge_lambda: 1e-9,
        n_features: d,
        ..LimeConfig::default()
    };
    let fit = fit_surrogate(&zb, &targets, &weights, &cfg).unwrap();
    assert!((fit.intercept - intercept).abs() < 1e-3);
    for &(col, coef) in &fit.coefficients {
        assert!(
            (coef - truth[col]).abs() < 1e-3,
            "column {col}: {coef} vs {}",
            truth[col]
        );
    }
    assert!(fit.explanation_fit >= 0.999, "fit {}", fit.explanation_fit);
    pass(5, &format!("coefficients within 1e-3, fit {:.6}", fit.explanation_fit));
}

struct PipelineArtifacts {
    train_csv: PathBuf,
    model: PathBuf,
    report: PathBuf,
    importance: PathBuf,
    holdout_csv: PathBuf,
    explain: PathBuf,
}

fn run(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_parkdur"))
        .args(args)
        .output()
        .expect("spawn parkdur");
    assert!(
        status.status.success(),
        "parkdur {args:?} failed:\n{}",
        String::from_utf8_lossy(&status.stderr)
    );
}

/// The full desk-scale pipeline with fixed seeds: synthesize the 482-case
/// survey, grid-search on the down-sampled grid, rank importances, and
/// explain 6 held-out cases.
fn run_pipeline(dir: &Path) -> PipelineArtifacts {
    let spec = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs/obp.json");
    let spec = spec.to_str().unwrap();
    let p = |name: &str| dir.join(name);
    let s = |path: &PathBuf| path.to_str().unwrap().to_string();

    let art = PipelineArtifacts {
        train_csv: p("train.csv"),
        model: p("model.json"),
        report: p("model.report.json"),
        importance: p("importance.json"),
        holdout_csv: p("holdout.csv"),
        explain: p("explain.json"),
    };
    run(&["synth", spec, "--out", &s(&art.train_csv), "--seed", "42"]);
    run(&[
        "train",
        "--data",
        &s(&art.train_csv),
        "--schema",
        &s(&p("train.schema.json")),
        "--out",
        &s(&art.model),
        "--sizes",
        "2,4,6,8",
        "--folds",
        "10",
        "--max-iter",
        "2000",
        "--lr",
        "1.0",
        "--seed",
        "7",
    ]);
    run(&["importance", "--model", &s(&art.model), "--out", &s(&art.importance)]);
    run(&[
        "synth", spec, "--out", &s(&art.holdout_csv), "--seed", "1", "--n", "6",
    ]);
    run(&[
        "explain",
        "--model",
        &s(&art.model),
        "--cases",
        &s(&art.holdout_csv),
        "--out",
        &s(&art.explain),
        "--seed",
        "3",
    ]);
    art
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn criterion_6_end_to_end_reproduction() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let art = run_pipeline(dir.path());

    let report = read_json(&art.report);
    let train_accuracy = report["train_accuracy"].as_f64().unwrap();
    let train_kappa = report["train_kappa"].as_f64().unwrap();
    assert!(train_accuracy >= 0.90, "train accuracy {train_accuracy}");
    assert!(train_kappa >= 0.85, "train kappa {train_kappa}");

    let importance = read_json(&art.importance);
    let top = importance["entries"][0]["name"].as_str().unwrap();
    assert_eq!(top, "fee_per_hr", "top-ranked input is {top}");

    // compare explained labels against the held-out generator truth
    let schema_json = std::fs::read_to_string(
        art.train_csv.parent().unwrap().join("train.schema.json"),
    )
    .unwrap();
    let schema = Schema::from_json(schema_json.as_bytes()).unwrap();
    let holdout = load_csv(std::fs::File::open(&art.holdout_csv).unwrap(), &schema).unwrap();
    let actual: Vec<&str> = holdout
        .iter()
        .map(|r| r.target.unwrap().label())
        .collect();

    let explain = read_json(&art.explain);
    let cases = explain.as_array().unwrap();
    assert_eq!(cases.len(), 6);
    let mut confident_matches = 0;
    for (case, actual_label) in cases.iter().zip(&actual) {
        let label = case["label"].as_str().unwrap();
        let prob = case["probability"].as_f64().unwrap();
        if label == *actual_label && prob >= 0.85 {
            confident_matches += 1;
        }
    }
    assert!(
        confident_matches >= 5,
        "only {confident_matches}/6 held-out cases matched with probability >= 0.85"
    );

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() <= 120,
        "pipeline took {elapsed:?}, budget is 2 minutes for the down-sampled grid"
    );
    pass(
        6,
        &format!(
            "train accuracy {train_accuracy:.4}, kappa {train_kappa:.4}, fee_per_hr ranked first, \
             {confident_matches}/6 confident matches, {elapsed:.1?}"
        ),
    );
}

#[test]
fn criterion_7_cv_partition_property() {
    for &n in &[7usize, 10, 482] {
        for &k in &[3usize, 5, 10] {
            if k > n {
                assert!(kfold_split(n, k, 0).is_err(), "k {k} > n {n} must error");
                continue;
            }
            let folds = kfold_split(n, k, 1234).unwrap();
            assert_eq!(folds.len(), k);
            let max = folds.iter().map(Vec::len).max().unwrap();
            let min = folds.iter().map(Vec::len).min().unwrap();
            assert!(max - min <= 1, "n {n}, k {k}: sizes differ by {}", max - min);
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>(), "n {n}, k {k}");
        }
    }
    pass(7, "every index in exactly one fold, sizes differ by <= 1");
}

#[test]
fn criterion_8_demand_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    for _ in 0..100 {
        let m = rng.gen_range(1..6);
        let entries: Vec<LandUseEntry> = (0..m)
            .map(|_| LandUseEntry {
                a: rng.gen_range(0.0..20.0),
                r: rng.gen_range(0.0..500.0),
                mu: 1.0,
                gamma: 1.0,
            })
            .collect();
        let unit = DemandCoefficients {
            delta: 1.0,
            l: 1.0,
            beta: 1.0,
        };
        let flat: Vec<(f64, f64)> = entries.iter().map(|e| (e.a, e.r)).collect();
        let ext = demand_extended(&entries, &unit).unwrap();
        let stat = demand_static(&flat).unwrap();
        assert!((ext - stat).abs() < 1e-12, "{ext} vs {stat}");
    }

    // fixture: (10*100)/(2*0.8) * 1.2*0.9*1.1 = 625 * 1.188 = 742.5
    let fixture = [LandUseEntry {
        a: 10.0,
        r: 100.0,
        mu: 2.0,
        gamma: 0.8,
    }];
    let coeff = DemandCoefficients {
        delta: 1.2,
        l: 0.9,
        beta: 1.1,
    };
    let y = demand_extended(&fixture, &coeff).unwrap();
    assert_eq!(y, 10.0 * 100.0 / (2.0 * 0.8) * (1.2 * 0.9 * 1.1));
    assert!((y - 742.5).abs() < 1e-9, "fixture value {y}");
    pass(8, &format!("100 random equalities within 1e-12; fixture {y}"));
}

#[test]
fn criterion_9_determinism() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = run_pipeline(dir_a.path());
    let b = run_pipeline(dir_b.path());

    for (name, pa, pb) in [
        ("training CSV", &a.train_csv, &b.train_csv),
        ("model JSON", &a.model, &b.model),
        ("report JSON", &a.report, &b.report),
        ("explanation JSON", &a.explain, &b.explain),
    ] {
        let ba = std::fs::read(pa).unwrap();
        let bb = std::fs::read(pb).unwrap();
        assert_eq!(ba, bb, "{name} differs between identical-seed runs");
    }
    pass(9, "repeated runs produce byte-identical artifacts");
}

/// Smoke check that the library pipeline agrees with the CLI encoding path.
#[test]
fn library_pipeline_smoke() {
    let spec_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs/obp.json");
    let spec = parkdur::dataset::SynthSpec::from_json(
        std::fs::File::open(spec_path).unwrap(),
    )
    .unwrap();
    let records = parkdur::dataset::synthesize(&spec, 5).unwrap();
    let schema = spec.schema().unwrap();
    assert_eq!(records.len(), 482);
    for r in &records {
        r.validate(&schema).unwrap();
    }
    let dm = center_scale(&encode(&records, &schema).unwrap()).unwrap();
    assert_eq!(dm.data.rows(), 482);
    let again = apply_transform(&records, &dm.meta).unwrap();
    assert_eq!(dm.data.data(), again.data.data());
}
