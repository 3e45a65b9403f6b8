use proptest::prelude::*;
use rand::Rng;

use super::*;

fn dense(rows: &[[f64; 2]]) -> Vec<SparseVector> {
    rows.iter().map(|r| SparseVector::from_dense(r)).collect()
}

/// Two jittered clusters around (4, 1) and (1, 4), 20 points each.
fn blobs(seed: u64) -> (Vec<SparseVector>, Vec<bool>) {
    let mut rng = rng_for(seed, 99);
    let mut pts = Vec::new();
    let mut ys = Vec::new();
    for i in 0..40 {
        let pos = i % 2 == 0;
        let (cx, cy) = if pos { (4.0, 1.0) } else { (1.0, 4.0) };
        pts.push([cx + rng.random_range(-0.5..0.5), cy + rng.random_range(-0.5..0.5)]);
        ys.push(pos);
    }
    (dense(&pts), ys)
}

/// XOR corners replicated 25 times with small jitter, shifted off the origin.
fn xor(seed: u64) -> (Vec<SparseVector>, Vec<bool>) {
    let mut rng = rng_for(seed, 7);
    let corners = [
        ([1.0, 1.0], false),
        ([1.0, 3.0], true),
        ([3.0, 1.0], true),
        ([3.0, 3.0], false),
    ];
    let mut pts = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..25 {
        for (c, y) in corners {
            pts.push([
                c[0] + rng.random_range(-0.2..0.2),
                c[1] + rng.random_range(-0.2..0.2),
            ]);
            ys.push(y);
        }
    }
    (dense(&pts), ys)
}

fn accuracy(model: &TrainedModel, rows: &[SparseVector], ys: &[bool]) -> f64 {
    let hits = rows
        .iter()
        .zip(ys)
        .filter(|(x, &y)| model.predict(x, 0.5).unwrap() == y)
        .count();
    hits as f64 / ys.len() as f64
}

fn spec_with(kind: ModelKind, hyper: Hyperparameters) -> ModelSpec {
    ModelSpec {
        kind,
        hyper,
        seed: 42,
    }
}

#[test]
fn every_model_separates_blobs() {
    let (rows, ys) = blobs(1);
    for kind in ModelKind::ALL {
        let m = train(&ModelSpec::new(kind, 42), &rows, &ys, 2).unwrap();
        assert_eq!(accuracy(&m, &rows, &ys), 1.0, "{kind}");
        for x in &rows {
            let s = m.score(x).unwrap();
            assert!((0.0..=1.0).contains(&s));
        }
    }
}

#[test]
fn rbf_solves_xor_where_linear_cannot() {
    let (rows, ys) = xor(3);
    let rbf = spec_with(
        ModelKind::SvmRbf,
        Hyperparameters::Rbf(RbfParams {
            c: 10.0,
            gamma: Some(1.0),
            ..RbfParams::default()
        }),
    );
    let m = train(&rbf, &rows, &ys, 2).unwrap();
    assert!(accuracy(&m, &rows, &ys) >= 0.95);
    assert!(m.warnings().is_empty());

    let lin = train(&ModelSpec::new(ModelKind::SvmLinear, 42), &rows, &ys, 2).unwrap();
    assert!(accuracy(&lin, &rows, &ys) <= 0.80);
}

#[test]
fn one_tree_forest_without_sampling_is_the_tree() {
    let (rows, ys) = xor(5);
    let tree = TreeParams::default();
    let forest = ForestParams {
        trees: 1,
        bootstrap: false,
        tree: tree.clone(),
    };
    let dt = train(
        &spec_with(ModelKind::Dt, Hyperparameters::Tree(tree)),
        &rows,
        &ys,
        2,
    )
    .unwrap();
    let rf = train(
        &spec_with(ModelKind::Rf, Hyperparameters::Forest(forest)),
        &rows,
        &ys,
        2,
    )
    .unwrap();
    let (Parameters::Tree(t), Parameters::Forest(f)) = (&dt.params, &rf.params) else {
        unreachable!()
    };
    assert_eq!(&f.trees()[0], t);
    for x in &rows {
        assert_eq!(dt.score(x).unwrap(), rf.score(x).unwrap());
    }
}

#[test]
fn one_nearest_neighbor_recalls_training_labels() {
    let (rows, ys) = blobs(2);
    let spec = spec_with(ModelKind::Knn, Hyperparameters::Knn(KnnParams { k: 1 }));
    let m = train(&spec, &rows, &ys, 2).unwrap();
    for (x, &y) in rows.iter().zip(&ys) {
        assert_eq!(m.score(x).unwrap(), if y { 1.0 } else { 0.0 });
    }
}

#[test]
fn knn_ties_prefer_lower_ordinal() {
    let rows = dense(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    let m = KnnModel::fit(&KnnParams { k: 1 }, &rows, &[false, true, true]);
    assert_eq!(m.neighbors(&rows[1]), vec![0]);
    let zero = SparseVector::empty(2);
    assert!(m.distances(&zero).iter().all(|&d| d == 1.0));
}

#[test]
fn leaf_score_is_positive_proportion() {
    // Identical rows cannot be split, so the root stays a 3:1 leaf.
    let rows = dense(&[[1.0, 1.0]; 4]);
    let m = train(
        &ModelSpec::new(ModelKind::Dt, 0),
        &rows,
        &[true, true, true, false],
        2,
    )
    .unwrap();
    assert_eq!(m.score(&rows[0]).unwrap(), 0.75);
}

#[test]
fn tree_split_uses_midpoint_threshold() {
    let rows = dense(&[[1.0, 0.0], [2.0, 0.0], [4.0, 0.0], [5.0, 0.0]]);
    let mut rng = rng_for(0, 0);
    let t = TreeModel::fit(
        &TreeParams::default(),
        &rows,
        &[false, false, true, true],
        None,
        2,
        &mut rng,
    );
    match &t.nodes()[0] {
        Node::Split {
            feature, threshold, ..
        } => {
            assert_eq!(*feature, 0);
            assert_eq!(*threshold, 3.0);
        }
        other => panic!("expected a split, got {other:?}"),
    }
    assert_eq!(t.depth(), 1);
}

#[test]
fn tree_respects_max_depth() {
    let (rows, ys) = xor(8);
    let spec = spec_with(
        ModelKind::Dt,
        Hyperparameters::Tree(TreeParams {
            max_depth: 1,
            ..TreeParams::default()
        }),
    );
    let Parameters::Tree(t) = train(&spec, &rows, &ys, 2).unwrap().params else {
        unreachable!()
    };
    assert!(t.depth() <= 1);
}

#[test]
fn rbf_kernel_at_unit_distance() {
    let x = SparseVector::from_dense(&[1.0, 0.0]);
    let y = SparseVector::from_dense(&[0.0, 0.0]);
    assert!((rbf_kernel(&x, &y, 1.0) - 0.367_879_441_171_442_3).abs() < 1e-9);
    assert_eq!(rbf_kernel(&x, &x, 3.0), 1.0);
}

#[test]
fn gini_cases() {
    assert_eq!(gini_impurity(&[5.0, 0.0]), 0.0);
    assert_eq!(gini_impurity(&[2.0, 2.0]), 0.5);
    assert!((gini_impurity(&[3.0, 1.0]) - 0.375).abs() < 1e-15);
    assert!((gini_impurity(&[1.0, 1.0, 1.0]) - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn auto_gamma_is_inverse_mean_support() {
    let rows = vec![
        SparseVector::from_pairs(10, vec![(0, 1.0), (1, 1.0)]).unwrap(),
        SparseVector::from_pairs(10, vec![(2, 1.0), (3, 1.0), (4, 1.0), (5, 1.0)]).unwrap(),
    ];
    assert_eq!(smo::auto_gamma(&rows), 1.0 / 3.0);
}

#[test]
fn logistic_is_monotone_and_centered() {
    assert_eq!(logistic(0.0), 0.5);
    assert!(logistic(-2.0) < logistic(-1.0) && logistic(1.0) < logistic(2.0));
}

#[test]
fn training_rejects_bad_inputs() {
    let rows = dense(&[[1.0, 0.0], [0.0, 1.0]]);
    let spec = ModelSpec::new(ModelKind::Dt, 0);
    assert!(matches!(
        train(&spec, &rows, &[true, true], 2),
        Err(Error::SingleClassTraining)
    ));
    assert!(matches!(
        train(&spec, &rows, &[true], 2),
        Err(Error::LengthMismatch { .. })
    ));
    assert!(matches!(
        train(&spec, &rows, &[true, false], 3),
        Err(Error::DimensionMismatch { .. })
    ));
    let m = train(&spec, &rows, &[true, false], 2).unwrap();
    assert!(m.score(&SparseVector::empty(5)).is_err());

    let even = spec_with(ModelKind::Knn, Hyperparameters::Knn(KnnParams { k: 4 }));
    assert!(matches!(
        train(&even, &rows, &[true, false], 2),
        Err(Error::InvalidConfig(_))
    ));
    let mismatched = spec_with(ModelKind::Dt, Hyperparameters::Knn(KnnParams { k: 3 }));
    assert!(mismatched.validate().is_err());
}

#[test]
fn iteration_cap_is_reported() {
    let (rows, ys) = xor(4);
    let spec = spec_with(
        ModelKind::SvmRbf,
        Hyperparameters::Rbf(RbfParams {
            gamma: Some(1.0),
            max_iter: Some(2),
            ..RbfParams::default()
        }),
    );
    let m = train(&spec, &rows, &ys, 2).unwrap();
    assert_eq!(m.warnings().len(), 1);
}

#[test]
fn training_is_seed_deterministic() {
    let (rows, ys) = xor(6);
    for kind in ModelKind::ALL {
        let a = train(&ModelSpec::new(kind, 11), &rows, &ys, 2).unwrap();
        let b = train(&ModelSpec::new(kind, 11), &rows, &ys, 2).unwrap();
        assert_eq!(a, b, "{kind}");
    }
}

#[test]
fn forest_depends_on_seed() {
    let (rows, ys) = xor(6);
    let a = train(&ModelSpec::new(ModelKind::Rf, 1), &rows, &ys, 2).unwrap();
    let b = train(&ModelSpec::new(ModelKind::Rf, 2), &rows, &ys, 2).unwrap();
    assert_ne!(a, b);
}

#[test]
fn model_file_round_trips() {
    let (rows, ys) = blobs(9);
    let cfg = crate::features::FeatureConfig::default();
    for kind in ModelKind::ALL {
        let m = train(&ModelSpec::new(kind, 3), &rows, &ys, 2).unwrap();
        let file = ModelFile::new(
            crate::labels::Task::Word,
            crate::features::Ablation::Baseline,
            cfg.clone(),
            m,
        );
        let back = ModelFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
        for x in &rows {
            assert_eq!(back.model.score(x).unwrap(), file.model.score(x).unwrap());
        }
    }
}

#[test]
fn model_file_rejects_foreign_json() {
    assert!(matches!(ModelFile::from_json("{}"), Err(Error::ModelFormat(_))));
    let (rows, ys) = blobs(9);
    let m = train(&ModelSpec::new(ModelKind::Dt, 3), &rows, &ys, 2).unwrap();
    let mut file = ModelFile::new(
        crate::labels::Task::Ciu,
        crate::features::Ablation::Ctx2,
        Default::default(),
        m,
    );
    file.config_fingerprint = "0000000000000000".into();
    assert!(ModelFile::from_json(&file.to_json()).is_err());
}

fn shuffled(rows: &[SparseVector], ys: &[bool], seed: u64) -> (Vec<SparseVector>, Vec<bool>) {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng_for(seed, 1));
    (
        order.iter().map(|&i| rows[i].clone()).collect(),
        order.iter().map(|&i| ys[i]).collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn svm_scores_ignore_row_order(seed in 0u64..1000) {
        let (rows, ys) = xor(seed);
        let (rows2, ys2) = shuffled(&rows, &ys, seed);
        for kind in [ModelKind::SvmLinear, ModelKind::SvmRbf, ModelKind::Knn] {
            let a = train(&ModelSpec::new(kind, 5), &rows, &ys, 2).unwrap();
            let b = train(&ModelSpec::new(kind, 5), &rows2, &ys2, 2).unwrap();
            for x in &rows {
                let (sa, sb) = (a.score(x).unwrap(), b.score(x).unwrap());
                if kind == ModelKind::Knn {
                    // Exact distance ties may resolve to different rows.
                    prop_assert!((sa - sb).abs() <= 0.2 + 1e-12);
                } else {
                    prop_assert_eq!(sa, sb);
                }
            }
        }
    }

    #[test]
    fn scores_stay_in_unit_interval(seed in 0u64..1000, probe in prop::array::uniform2(-10.0f64..10.0)) {
        let (rows, ys) = xor(seed);
        let x = SparseVector::from_dense(&probe);
        for kind in ModelKind::ALL {
            let m = train(&ModelSpec::new(kind, seed), &rows, &ys, 2).unwrap();
            let s = m.score(&x).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn gini_is_bounded(counts in prop::collection::vec(0.0f64..50.0, 2..5)) {
        prop_assume!(counts.iter().sum::<f64>() > 0.0);
        let g = gini_impurity(&counts);
        let k = counts.len() as f64;
        prop_assert!(g >= -1e-12 && g <= 1.0 - 1.0 / k + 1e-12);
    }
}
