use super::*;
use crate::dataset::{encode, FeatureSpec, Record, Schema, Value};
use crate::network::OutputActivation;
use indexmap::IndexMap;
use proptest::prelude::*;

fn names(n: &[&str]) -> Vec<String> {
    n.iter().map(|s| s.to_string()).collect()
}

fn bare_net(d_in: usize, d_hidden: usize, d_out: usize, w1: Vec<f64>, w2: Vec<f64>) -> Network {
    Network {
        d_in,
        d_hidden,
        d_out,
        w1,
        b1: vec![0.0; d_hidden],
        w2,
        b2: vec![0.0; d_out],
        decay: 0.0,
        output: OutputActivation::Softmax,
    }
}

#[test]
fn garson_two_two_one_oracle() {
    // hidden weights (hidden x input): [[1, 2], [-2, 1]], output weights
    // [2, 1]. Worked by hand: fan-ins are 3 and 3, so
    //   q0 = 1*2/3 + 2*1/3 = 4/3, q1 = 2*2/3 + 1*1/3 = 5/3
    // and after normalization the shares are 4/9 and 5/9.
    let net = bare_net(2, 2, 1, vec![1.0, 2.0, -2.0, 1.0], vec![2.0, 1.0]);
    let table = garson(&net, &names(&["a", "b"])).unwrap();
    assert_eq!(table.entries[0].0, "b");
    assert!((table.entries[0].1 - 5.0 / 9.0).abs() < 1e-9);
    assert_eq!(table.entries[1].0, "a");
    assert!((table.entries[1].1 - 4.0 / 9.0).abs() < 1e-9);
}

#[test]
fn garson_symmetric_inputs_split_evenly() {
    let net = bare_net(2, 2, 2, vec![0.7, 0.7, -0.3, -0.3], vec![1.0, -2.0, 0.5, 0.4]);
    let table = garson(&net, &names(&["a", "b"])).unwrap();
    for (_, share) in &table.entries {
        assert!((share - 0.5).abs() < 1e-12);
    }
}

#[test]
fn garson_ignores_hidden_sign_flips() {
    let net = bare_net(3, 2, 2, vec![0.4, -1.1, 0.2, 0.9, 0.3, -0.5], vec![1.0, 0.7, -0.2, 0.3]);
    let mut flipped = net.clone();
    // negate everything touching hidden unit 1
    for i in 0..3 {
        flipped.w1[3 + i] = -flipped.w1[3 + i];
    }
    for k in 0..2 {
        flipped.w2[k * 2 + 1] = -flipped.w2[k * 2 + 1];
    }
    let a = garson(&net, &names(&["x", "y", "z"])).unwrap();
    let b = garson(&flipped, &names(&["x", "y", "z"])).unwrap();
    for (ea, eb) in a.entries.iter().zip(&b.entries) {
        assert_eq!(ea.0, eb.0);
        assert!((ea.1 - eb.1).abs() < 1e-12);
    }
}

#[test]
fn garson_skips_zero_fan_in_hidden_units() {
    // hidden unit 1 has zero fan-in; its output weight must not matter
    let with_dead = bare_net(2, 2, 2, vec![1.0, 3.0, 0.0, 0.0], vec![0.5, 99.0, -0.2, -99.0]);
    let without = bare_net(2, 1, 2, vec![1.0, 3.0], vec![0.5, -0.2]);
    let a = garson(&with_dead, &names(&["a", "b"])).unwrap();
    let b = garson(&without, &names(&["a", "b"])).unwrap();
    for (ea, eb) in a.entries.iter().zip(&b.entries) {
        assert_eq!(ea.0, eb.0);
        assert!((ea.1 - eb.1).abs() < 1e-12);
    }
}

#[test]
fn garson_rejects_all_zero_network() {
    let net = bare_net(2, 2, 2, vec![0.0; 4], vec![0.0; 4]);
    assert!(garson(&net, &names(&["a", "b"])).is_err());
}

#[test]
fn garson_rejects_name_count_mismatch() {
    let net = bare_net(2, 2, 2, vec![1.0; 4], vec![1.0; 4]);
    assert!(garson(&net, &names(&["a"])).is_err());
}

fn two_feature_design() -> crate::dataset::DesignMatrix {
    // one categorical (3 levels) and one continuous feature
    let schema = Schema::new(
        vec![
            FeatureSpec::categorical("color", &["red", "green", "blue"]),
            FeatureSpec::continuous("size", "cm"),
        ],
        "duration",
    )
    .unwrap();
    let levels = ["red", "green", "blue", "green", "red", "blue", "blue", "blue"];
    let sizes = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
    let records: Vec<Record> = levels
        .iter()
        .zip(&sizes)
        .map(|(l, s)| {
            let mut values = IndexMap::new();
            values.insert("color".to_string(), Value::Level(l.to_string()));
            values.insert("size".to_string(), Value::Number(*s));
            Record {
                values,
                target: None,
            }
        })
        .collect();
    let dm = encode(&records, &schema).unwrap();
    crate::dataset::center_scale(&dm).unwrap()
}

#[test]
fn perturb_stats_capture_frequencies_and_quartiles() {
    let dm = two_feature_design();
    let stats = PerturbStats::from_design(&dm).unwrap();
    assert_eq!(stats.features.len(), 2);
    match &stats.features[0] {
        FeatureStat::Categorical {
            name,
            levels,
            freqs,
            ..
        } => {
            assert_eq!(name, "color");
            assert_eq!(levels, &names(&["red", "green", "blue"]));
            assert!((freqs[0] - 2.0 / 8.0).abs() < 1e-12);
            assert!((freqs[1] - 2.0 / 8.0).abs() < 1e-12);
            assert!((freqs[2] - 4.0 / 8.0).abs() < 1e-12);
        }
        other => panic!("expected categorical, got {other:?}"),
    }
    match &stats.features[1] {
        FeatureStat::Continuous { name, quartiles, .. } => {
            assert_eq!(name, "size");
            assert!(quartiles[0] < quartiles[1] && quartiles[1] < quartiles[2]);
            // the median of a standardized symmetric column sits at 0
            assert!(quartiles[1].abs() < 0.3);
        }
        other => panic!("expected continuous, got {other:?}"),
    }
}

#[test]
fn perturb_sample_zero_is_the_case_itself() {
    let dm = two_feature_design();
    let stats = PerturbStats::from_design(&dm).unwrap();
    let x = dm.data.row(0).to_vec();
    let pert = perturb(&x, &stats, 50, 7).unwrap();
    assert_eq!(pert.z.row(0), &x[..]);
    for f in 0..stats.features.len() {
        assert_eq!(pert.z_binary.get(0, f), 1.0);
    }
}

#[test]
fn perturb_is_deterministic_and_seed_sensitive() {
    let dm = two_feature_design();
    let stats = PerturbStats::from_design(&dm).unwrap();
    let x = dm.data.row(0).to_vec();
    let a = perturb(&x, &stats, 40, 3).unwrap();
    let b = perturb(&x, &stats, 40, 3).unwrap();
    assert_eq!(a.z.data(), b.z.data());
    assert_eq!(a.z_binary.data(), b.z_binary.data());
    let c = perturb(&x, &stats, 40, 4).unwrap();
    assert_ne!(a.z.data(), c.z.data());
}

#[test]
fn perturb_reproduces_level_frequencies() {
    let dm = two_feature_design();
    let stats = PerturbStats::from_design(&dm).unwrap();
    let x = dm.data.row(0).to_vec();
    let n = 5000;
    let pert = perturb(&x, &stats, n, 11).unwrap();

    // count the sampled levels via the indicator block (cols for green/blue)
    let (cols, freqs) = match &stats.features[0] {
        FeatureStat::Categorical { cols, freqs, .. } => (cols.clone(), freqs.clone()),
        _ => unreachable!(),
    };
    let mut counts = vec![0usize; 3];
    for t in 1..n {
        let mut picked = 0;
        for (li, &j) in cols.iter().enumerate() {
            if pert.z.get(t, j) > 0.5 {
                picked = li + 1;
            }
        }
        counts[picked] += 1;
    }
    for (li, &c) in counts.iter().enumerate() {
        let share = c as f64 / (n - 1) as f64;
        assert!(
            (share - freqs[li]).abs() < 0.03,
            "level {li}: sampled {share:.3}, training {:.3}",
            freqs[li]
        );
    }
}

#[test]
fn perturb_binary_flag_tracks_level_match() {
    let dm = two_feature_design();
    let stats = PerturbStats::from_design(&dm).unwrap();
    let x = dm.data.row(0).to_vec(); // row 0 is "red", the reference level
    let pert = perturb(&x, &stats, 300, 5).unwrap();
    let cols = match &stats.features[0] {
        FeatureStat::Categorical { cols, .. } => cols.clone(),
        _ => unreachable!(),
    };
    for t in 1..300 {
        let is_reference = cols.iter().all(|&j| pert.z.get(t, j) < 0.5);
        assert_eq!(pert.z_binary.get(t, 0) > 0.5, is_reference);
    }
}

#[test]
fn perturb_requires_two_samples() {
    let dm = two_feature_design();
    let stats = PerturbStats::from_design(&dm).unwrap();
    let x = dm.data.row(0).to_vec();
    assert!(perturb(&x, &stats, 1, 0).is_err());
}

#[test]
fn proximity_values() {
    let x = [1.0, 2.0, 3.0];
    assert!((proximity(&x, &x, 0.75) - 1.0).abs() < 1e-15);
    // at distance exactly equal to the kernel width: exp(-1)
    let z = [1.0, 2.0, 3.5];
    assert!((proximity(&x, &z, 0.5) - (-1.0f64).exp()).abs() < 1e-12);
    // monotone decreasing in distance
    let near = [1.1, 2.0, 3.0];
    let far = [1.5, 2.0, 3.0];
    assert!(proximity(&x, &near, 0.75) > proximity(&x, &far, 0.75));
}

fn unit_weights(n: usize) -> Vec<f64> {
    vec![1.0; n]
}

#[test]
fn surrogate_constant_target_is_degenerate() {
    let zb = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
    let targets = vec![0.7, 0.7, 0.7];
    let fit = fit_surrogate(&zb, &targets, &unit_weights(3), &LimeConfig::default()).unwrap();
    assert!((fit.intercept - 0.7).abs() < 1e-12);
    assert!(fit.coefficients.is_empty());
    assert_eq!(fit.explanation_fit, 0.0);
}

#[test]
fn surrogate_recovers_exact_linear_target() {
    // y = 0.2 + 0.5*z0 - 0.3*z1 over all four binary patterns
    let zb = Matrix::from_rows(&[
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 1.0],
    ]);
    let targets: Vec<f64> = (0..4)
        .map(|i| 0.2 + 0.5 * zb.get(i, 0) - 0.3 * zb.get(i, 1))
        .collect();
    let cfg = LimeConfig {
        ridge_lambda: 1e-9,
        n_features: 2,
        ..LimeConfig::default()
    };
    let fit = fit_surrogate(&zb, &targets, &unit_weights(4), &cfg).unwrap();
    assert!((fit.intercept - 0.2).abs() < 1e-3);
    assert_eq!(fit.coefficients.len(), 2);
    assert_eq!(fit.coefficients[0].0, 0); // largest |coef| first
    assert!((fit.coefficients[0].1 - 0.5).abs() < 1e-3);
    assert!((fit.coefficients[1].1 + 0.3).abs() < 1e-3);
    assert!(fit.explanation_fit >= 0.999);
}

#[test]
fn surrogate_caps_features_at_n_features() {
    let zb = Matrix::from_rows(&[
        vec![0.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
        vec![1.0, 1.0, 1.0],
    ]);
    let targets: Vec<f64> = (0..5)
        .map(|i| 1.0 * zb.get(i, 0) + 0.6 * zb.get(i, 1) + 0.1 * zb.get(i, 2))
        .collect();
    let cfg = LimeConfig {
        ridge_lambda: 1e-6,
        n_features: 2,
        ..LimeConfig::default()
    };
    let fit = fit_surrogate(&zb, &targets, &unit_weights(5), &cfg).unwrap();
    assert_eq!(fit.coefficients.len(), 2);
    let picked: Vec<usize> = fit.coefficients.iter().map(|c| c.0).collect();
    assert!(picked.contains(&0) && picked.contains(&1));
}

#[test]
fn surrogate_duplicate_samples_equal_double_weight() {
    let zb_dup = Matrix::from_rows(&[
        vec![0.0, 0.0],
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 1.0],
    ]);
    let t_dup = vec![0.1, 0.1, 0.8, 0.4, 0.9];
    let zb = Matrix::from_rows(&[
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 1.0],
    ]);
    let t = vec![0.1, 0.8, 0.4, 0.9];
    let w = vec![2.0, 1.0, 1.0, 1.0];
    let cfg = LimeConfig {
        n_features: 2,
        ..LimeConfig::default()
    };
    let a = fit_surrogate(&zb_dup, &t_dup, &unit_weights(5), &cfg).unwrap();
    let b = fit_surrogate(&zb, &t, &w, &cfg).unwrap();
    assert!((a.intercept - b.intercept).abs() < 1e-9);
    for (ca, cb) in a.coefficients.iter().zip(&b.coefficients) {
        assert_eq!(ca.0, cb.0);
        assert!((ca.1 - cb.1).abs() < 1e-9);
    }
    assert!((a.explanation_fit - b.explanation_fit).abs() < 1e-9);
}

#[test]
fn surrogate_rejects_bad_weights_and_lambda() {
    let zb = Matrix::from_rows(&[vec![0.0], vec![1.0]]);
    let t = vec![0.0, 1.0];
    assert!(fit_surrogate(&zb, &t, &[1.0, 0.0], &LimeConfig::default()).is_err());
    let cfg = LimeConfig {
        ridge_lambda: 0.0,
        ..LimeConfig::default()
    };
    assert!(fit_surrogate(&zb, &t, &unit_weights(2), &cfg).is_err());
}

fn explained_case_setup() -> (
    Network,
    Record,
    crate::dataset::EncodingMeta,
    PerturbStats,
    Vec<String>,
) {
    let dm = two_feature_design();
    let stats = PerturbStats::from_design(&dm).unwrap();
    let net = Network::init(dm.data.cols(), 3, 5, 0.0, 21, 0.5).unwrap();
    let mut values = IndexMap::new();
    values.insert("color".to_string(), Value::Level("blue".to_string()));
    values.insert("size".to_string(), Value::Number(6.5));
    let record = Record {
        values,
        target: None,
    };
    let labels = names(&["<2", "2-4", "4-6", "6-8", ">8"]);
    (net, record, dm.meta.clone(), stats, labels)
}

#[test]
fn explain_case_probability_matches_forward_pass() {
    let (net, record, meta, stats, labels) = explained_case_setup();
    let cfg = LimeConfig {
        n_samples: 500,
        ..LimeConfig::default()
    };
    let exp = explain_case(&net, &record, &meta, &stats, &labels, &cfg, "case-1").unwrap();

    let dm = crate::dataset::apply_transform(std::slice::from_ref(&record), &meta).unwrap();
    let pred = net.forward(dm.data.row(0)).unwrap();
    assert_eq!(exp.probability, pred.probabilities[pred.label]);
    assert_eq!(exp.label, labels[pred.label]);
    assert_eq!(exp.case, "case-1");
    assert!(exp.features.len() <= cfg.n_features);
    // the categorical display name carries the record's own level
    assert!(exp
        .features
        .iter()
        .all(|f| f.name == "size" || f.name == "color_blue"));
}

#[test]
fn explain_case_is_deterministic() {
    let (net, record, meta, stats, labels) = explained_case_setup();
    let cfg = LimeConfig {
        n_samples: 400,
        seed: 9,
        ..LimeConfig::default()
    };
    let a = explain_case(&net, &record, &meta, &stats, &labels, &cfg, "c").unwrap();
    let b = explain_case(&net, &record, &meta, &stats, &labels, &cfg, "c").unwrap();
    assert_eq!(a.probability, b.probability);
    assert_eq!(a.explanation_fit, b.explanation_fit);
    for (fa, fb) in a.features.iter().zip(&b.features) {
        assert_eq!(fa.name, fb.name);
        assert_eq!(fa.weight, fb.weight);
    }
}

#[test]
fn wide_kernel_approaches_unweighted_fit() {
    let dm = two_feature_design();
    let stats = PerturbStats::from_design(&dm).unwrap();
    let x = dm.data.row(0).to_vec();
    let pert = perturb(&x, &stats, 200, 2).unwrap();
    let targets: Vec<f64> = (0..200)
        .map(|t| 0.3 + 0.2 * pert.z_binary.get(t, 0) - 0.1 * pert.z_binary.get(t, 1))
        .collect();
    let huge: Vec<f64> = (0..200)
        .map(|t| proximity(&x, pert.z.row(t), 1e9))
        .collect();
    let flat = unit_weights(200);
    let cfg = LimeConfig {
        n_features: 2,
        ..LimeConfig::default()
    };
    let a = fit_surrogate(&pert.z_binary, &targets, &huge, &cfg).unwrap();
    let b = fit_surrogate(&pert.z_binary, &targets, &flat, &cfg).unwrap();
    assert!((a.intercept - b.intercept).abs() < 1e-9);
    for (ca, cb) in a.coefficients.iter().zip(&b.coefficients) {
        assert!((ca.1 - cb.1).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn garson_importances_sum_to_one(seed in 0u64..500) {
        let d_in = 2 + (seed as usize % 5);
        let d_hidden = 1 + (seed as usize / 5 % 4);
        let net = Network::init(d_in, d_hidden, 5, 0.0, seed, 0.5).unwrap();
        let input_names: Vec<String> = (0..d_in).map(|i| format!("x{i}")).collect();
        let table = garson(&net, &input_names).unwrap();
        let total: f64 = table.entries.iter().map(|e| e.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for (_, share) in &table.entries {
            prop_assert!(*share >= 0.0);
        }
        // descending order
        for w in table.entries.windows(2) {
            prop_assert!(w[0].1 >= w[1].1);
        }
    }
}
