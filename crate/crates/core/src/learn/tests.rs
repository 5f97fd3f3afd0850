use super::*;
use crate::features::FeatureVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matrix(rows: Vec<(Vec<f64>, AgentLabel)>) -> FeatureMatrix {
    let p = rows[0].0.len();
    FeatureMatrix {
        feature_names: (0..p).map(|j| format!("f{j}")).collect(),
        rows: rows
            .into_iter()
            .enumerate()
            .map(|(i, (values, label))| FeatureVector {
                values,
                label,
                pr_id: i.to_string(),
            })
            .collect(),
    }
}

/// Three Gaussian blobs along distinct axes, plus two noise columns.
fn separable_three_class(n: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = [AgentLabel::OpenAICodex, AgentLabel::Copilot, AgentLabel::Devin];
    matrix(
        (0..n)
            .map(|i| {
                let c = i % 3;
                let mut v: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
                v[c] += 3.0;
                (v, labels[c])
            })
            .collect(),
    )
}

fn accuracy(model: &TreeEnsembleModel, m: &FeatureMatrix) -> f64 {
    let hits = m
        .rows
        .iter()
        .filter(|r| model.predict_label(&r.values).unwrap() == r.label)
        .count();
    hits as f64 / m.n_rows() as f64
}

/// Independent brute-force search: every feature, every midpoint between
/// distinct values, sums recomputed from scratch.
fn exhaustive_root_split(m: &FeatureMatrix, grad: &[f64], hess: &[f64], cfg: &GbmConfig) -> Option<(usize, f64, f64)> {
    let score = |g: f64, h: f64| g * g / (h + cfg.l2_reg);
    let g_all: f64 = grad.iter().sum();
    let h_all: f64 = hess.iter().sum();
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..m.n_features() {
        let mut vals: Vec<f64> = m.rows.iter().map(|r| r.values[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = (w[0] + w[1]) / 2.0;
            let (mut gl, mut hl) = (0.0, 0.0);
            for (i, r) in m.rows.iter().enumerate() {
                if r.values[f] < thr {
                    gl += grad[i];
                    hl += hess[i];
                }
            }
            let (gr, hr) = (g_all - gl, h_all - hl);
            if hl < cfg.min_child_weight || hr < cfg.min_child_weight {
                continue;
            }
            let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(g_all, h_all));
            if gain > 0.0 && best.is_none_or(|b| gain > b.2) {
                best = Some((f, thr, gain));
            }
        }
    }
    best
}

fn gain_of(m: &FeatureMatrix, grad: &[f64], hess: &[f64], cfg: &GbmConfig, f: usize, thr: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + cfg.l2_reg);
    let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
    for (i, r) in m.rows.iter().enumerate() {
        if r.values[f] < thr {
            gl += grad[i];
            hl += hess[i];
        } else {
            gr += grad[i];
            hr += hess[i];
        }
    }
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr))
}

#[test]
fn root_split_matches_exhaustive_search() {
    let cfg = GbmConfig {
        n_rounds: 1,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.gen_range(6..=20);
        let p = rng.gen_range(1..=5);
        let k = rng.gen_range(2..=3);
        let m = matrix(
            (0..n)
                .map(|i| {
                    let v = (0..p).map(|_| rng.gen_range(0..6) as f64).collect();
                    (v, AgentLabel::ALL[if i < k { i } else { rng.gen_range(0..k) }])
                })
                .collect(),
        );
        let model = train_gbm(&m, &cfg).unwrap();
        let classes = m.classes();
        let pk = 1.0 / classes.len() as f64;
        let grad: Vec<f64> = m
            .rows
            .iter()
            .map(|r| pk - (r.label == classes[0]) as u8 as f64)
            .collect();
        let hess = vec![pk * (1.0 - pk); n];
        let oracle = exhaustive_root_split(&m, &grad, &hess, &cfg);
        match (&model.trees[0][0], oracle) {
            (TreeNode::Leaf { .. }, None) => {}
            (
                TreeNode::Split {
                    feature,
                    threshold,
                    gain,
                    ..
                },
                Some((_, _, best)),
            ) => {
                assert!((gain - best).abs() < 1e-9, "gain {gain} vs oracle {best}");
                let recomputed = gain_of(&m, &grad, &hess, &cfg, *feature, *threshold);
                assert!((recomputed - best).abs() < 1e-9);
            }
            (node, oracle) => panic!("tree root {node:?} disagrees with oracle {oracle:?}"),
        }
    }
}

#[test]
fn perfect_single_feature_is_chosen_at_root() {
    let rows = (0..20)
        .map(|i| {
            let cls = i % 2;
            (
                vec![(i * 7 % 5) as f64, cls as f64 * 10.0, (i % 3) as f64],
                AgentLabel::ALL[cls],
            )
        })
        .collect();
    let m = matrix(rows);
    let model = train_gbm(&m, &GbmConfig::default()).unwrap();
    match &model.trees[0][0] {
        TreeNode::Split { feature, threshold, .. } => {
            assert_eq!(*feature, 1);
            assert_eq!(*threshold, 5.0);
        }
        leaf => panic!("expected split, got {leaf:?}"),
    }
}

#[test]
fn gbm_learns_separable_classes() {
    let m = separable_three_class(300, 5);
    let cfg = GbmConfig {
        n_rounds: 50,
        ..Default::default()
    };
    let (model, losses) = train_gbm_traced(&m, &cfg).unwrap();
    assert!(accuracy(&model, &m) >= 0.95);
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "loss went up: {} -> {}", w[0], w[1]);
    }
    assert!(model.trees.iter().flatten().all(|t| t.depth() <= cfg.max_depth));
}

#[test]
fn constant_features_predict_priors() {
    let rows = (0..40)
        .map(|i| {
            (
                vec![1.0, 2.0],
                if i < 30 {
                    AgentLabel::Copilot
                } else {
                    AgentLabel::Cursor
                },
            )
        })
        .collect();
    let m = matrix(rows);
    let model = train_gbm(&m, &GbmConfig::default()).unwrap();
    assert!(model.trees.iter().flatten().all(TreeNode::is_leaf));
    let p = model.predict(&[1.0, 2.0]).unwrap();
    assert!((p[0] - 0.75).abs() < 1e-3 && (p[1] - 0.25).abs() < 1e-3, "{p:?}");
    assert!(model.importance(None).unwrap().is_empty());
}

#[test]
fn single_class_errors() {
    let m = matrix(vec![(vec![1.0], AgentLabel::Devin), (vec![2.0], AgentLabel::Devin)]);
    assert!(train_gbm(&m, &GbmConfig::default()).is_err());
    assert!(train_one_vs_rest(&m, AgentLabel::Cursor, &GbmConfig::default()).is_err());
    let empty = FeatureMatrix {
        feature_names: vec!["a".into()],
        rows: vec![],
    };
    assert!(train_gbm(&empty, &GbmConfig::default()).is_err());
    assert!(train_forest(&empty, &ForestConfig::default()).is_err());
}

#[test]
fn zero_round_model_is_uniform() {
    let m = separable_three_class(30, 1);
    let mut model = train_gbm(
        &m,
        &GbmConfig {
            n_rounds: 1,
            ..Default::default()
        },
    )
    .unwrap();
    model.trees.iter_mut().for_each(Vec::clear);
    let p = model.predict(&[0.0; 5]).unwrap();
    assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    assert!(model.importance(None).is_err());
}

#[test]
fn forest_single_class_is_all_leaves() {
    let m = matrix(
        (0..30)
            .map(|i| (vec![i as f64, (i % 4) as f64], AgentLabel::Cursor))
            .collect(),
    );
    let model = train_forest(
        &m,
        &ForestConfig {
            n_trees: 10,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(model.trees[0].iter().all(TreeNode::is_leaf));
    assert_eq!(model.predict(&[3.0, 1.0]).unwrap(), vec![1.0]);
    assert_eq!(model.predict_label(&[3.0, 1.0]).unwrap(), AgentLabel::Cursor);
}

#[test]
fn forest_is_seed_deterministic_and_accurate_out_of_bag() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = matrix(
        (0..400)
            .map(|i| {
                let c = i % 2;
                let v = vec![rng.gen::<f64>() + c as f64 * 1.5, rng.gen(), rng.gen(), rng.gen()];
                (v, AgentLabel::ALL[c])
            })
            .collect(),
    );
    let cfg = ForestConfig {
        n_trees: 50,
        ..Default::default()
    };
    let a = train_forest(&m, &cfg).unwrap();
    let b = train_forest(&m, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert!(a.oob_accuracy.unwrap() > 0.9, "oob {:?}", a.oob_accuracy);
    for r in &m.rows {
        assert_eq!(a.predict(&r.values).unwrap(), b.predict(&r.values).unwrap());
    }
    assert!(a.trees[0].iter().all(|t| t.depth() <= 10));
}

#[test]
fn forest_argmax_survives_monotone_transforms() {
    let m = separable_three_class(150, 3);
    let warped = FeatureMatrix {
        feature_names: m.feature_names.clone(),
        rows: m
            .rows
            .iter()
            .map(|r| FeatureVector {
                values: r.values.iter().map(|x| x.exp() * 3.0 + 1.0).collect(),
                ..r.clone()
            })
            .collect(),
    };
    let cfg = ForestConfig {
        n_trees: 25,
        ..Default::default()
    };
    let a = train_forest(&m, &cfg).unwrap();
    let b = train_forest(&warped, &cfg).unwrap();
    for (r, w) in m.rows.iter().zip(&warped.rows) {
        assert_eq!(a.predict_index(&r.values).unwrap(), b.predict_index(&w.values).unwrap());
    }
}

#[test]
fn identical_single_leaf_trees_vote_unanimously() {
    let m = matrix(vec![(vec![0.0], AgentLabel::Devin), (vec![1.0], AgentLabel::Cursor)]);
    let mut model = train_forest(
        &m,
        &ForestConfig {
            n_trees: 3,
            ..Default::default()
        },
    )
    .unwrap();
    for t in &mut model.trees[0] {
        *t = TreeNode::Leaf { value: vec![0.0, 1.0] };
    }
    assert_eq!(model.predict(&[0.5]).unwrap(), vec![0.0, 1.0]);
}

#[test]
fn vote_ties_prefer_prior_then_order() {
    assert_eq!(vote(&[0.5, 0.5], &[0.2, 0.8]), 1);
    assert_eq!(vote(&[0.5, 0.5], &[0.5, 0.5]), 0);
    assert_eq!(vote(&[0.1, 0.6, 0.3], &[0.9, 0.05, 0.05]), 1);
}

#[test]
fn model_json_round_trip_is_exact() {
    let m = separable_three_class(90, 2);
    for model in [
        train_gbm(
            &m,
            &GbmConfig {
                n_rounds: 5,
                ..Default::default()
            },
        )
        .unwrap(),
        train_forest(
            &m,
            &ForestConfig {
                n_trees: 5,
                ..Default::default()
            },
        )
        .unwrap(),
        train_one_vs_rest(
            &m,
            AgentLabel::Copilot,
            &GbmConfig {
                n_rounds: 5,
                ..Default::default()
            },
        )
        .unwrap(),
    ] {
        let back = TreeEnsembleModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        for r in &m.rows {
            let (p, q) = (model.predict(&r.values).unwrap(), back.predict(&r.values).unwrap());
            assert!(p.iter().zip(&q).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
    assert!(TreeEnsembleModel::from_json("{}").is_err());
}

#[test]
fn dimension_mismatch_is_rejected() {
    let m = separable_three_class(30, 2);
    let model = train_gbm(
        &m,
        &GbmConfig {
            n_rounds: 2,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(matches!(model.predict(&[1.0; 4]), Err(Error::RegistryMismatch(_))));
}

#[test]
fn column_permutation_preserves_predictions() {
    let m = separable_three_class(90, 4);
    let model = train_gbm(
        &m,
        &GbmConfig {
            n_rounds: 10,
            ..Default::default()
        },
    )
    .unwrap();
    let order: Vec<String> = ["f3", "f0", "f4", "f2", "f1"].iter().map(|s| s.to_string()).collect();
    let permuted = model.with_feature_order(&order).unwrap();
    for r in &m.rows {
        let x: Vec<f64> = order
            .iter()
            .map(|n| r.values[n[1..].parse::<usize>().unwrap()])
            .collect();
        assert_eq!(
            model.predict_index(&r.values).unwrap(),
            permuted.predict_index(&x).unwrap()
        );
    }
}

#[test]
fn importance_normalizes_gains() {
    let m = separable_three_class(30, 2);
    let mut model = train_gbm(
        &m,
        &GbmConfig {
            n_rounds: 1,
            ..Default::default()
        },
    )
    .unwrap();
    model.gain_totals = [("f1".to_string(), 1.0), ("f0".to_string(), 3.0)].into_iter().collect();
    let imp = model.importance(None).unwrap();
    assert_eq!(
        imp,
        vec![
            FeatureShare {
                feature: "f0".into(),
                share: 0.75
            },
            FeatureShare {
                feature: "f1".into(),
                share: 0.25
            }
        ]
    );
    assert_eq!(model.importance(Some(1)).unwrap().len(), 1);
}

#[test]
fn one_vs_rest_marker_takes_all_gain() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let m = matrix(
        (0..200)
            .map(|i| {
                let label = AgentLabel::ALL[i % 5];
                let marker = if label == AgentLabel::Cursor { 1.0 } else { 0.0 };
                (vec![rng.gen(), marker, rng.gen()], label)
            })
            .collect(),
    );
    let model = train_one_vs_rest(&m, AgentLabel::Cursor, &GbmConfig::default()).unwrap();
    let imp = model.importance(None).unwrap();
    assert_eq!(imp[0].feature, "f1");
    assert!(imp[0].share > 0.99, "{imp:?}");
    let p = model.predict(&[0.5, 1.0, 0.5]).unwrap();
    assert!(p[0] > 0.9 && (p[0] + p[1] - 1.0).abs() < 1e-12);
    assert_eq!(model.output_labels(), vec![Some(AgentLabel::Cursor), None]);
}

#[test]
fn random_labels_spread_gain() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let p = 8;
    let m = matrix(
        (0..1000)
            .map(|_| {
                let v = (0..p).map(|_| rng.gen::<f64>()).collect();
                (v, AgentLabel::ALL[rng.gen_range(0..2)])
            })
            .collect(),
    );
    let model = train_one_vs_rest(&m, AgentLabel::OpenAICodex, &GbmConfig::default()).unwrap();
    let uniform = 1.0 / p as f64;
    for s in model.importance(None).unwrap() {
        assert!(s.share < 2.0 * uniform, "{} has share {}", s.feature, s.share);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn predictions_are_distributions(seed in 0u64..1000, probe in proptest::collection::vec(-1.0f64..5.0, 5)) {
        let m = separable_three_class(60, seed);
        let g = train_gbm(&m, &GbmConfig { n_rounds: 5, ..Default::default() }).unwrap();
        let f = train_forest(&m, &ForestConfig { n_trees: 7, seed, ..Default::default() }).unwrap();
        for model in [&g, &f] {
            let p = model.predict(&probe).unwrap();
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
