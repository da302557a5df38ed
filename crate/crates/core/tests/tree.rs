use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use distforest::data::{generate, CovariateColumn, CovariateValue, Dataset, ScenarioKind, SyntheticScenario};
use distforest::mle::{self, WeightedSample};
use distforest::tree::{select_split, select_variable, test_association, Node, SplitObjective, SplitRule, Statistic};
use distforest::{DistTree, DistributionFamily, Family, TreeConfig};

fn scenario(kind: ScenarioKind, n: usize, seed: u64, m_noise: usize) -> Dataset {
    generate(&SyntheticScenario::new(kind, n, seed).with_noise(m_noise)).unwrap().dataset
}

fn grow(d: &Dataset, config: TreeConfig) -> DistTree {
    DistTree::grow(d, Family::default(), config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
}

fn strict(alpha: f64) -> TreeConfig {
    TreeConfig {
        alpha,
        ..TreeConfig::default()
    }
}

/// Rows below every node, by collecting leaf members of the subtree.
fn rows_below(tree: &DistTree, id: usize) -> Vec<usize> {
    match &tree.nodes[id] {
        Node::Leaf { members, .. } => members.clone(),
        Node::Split(s) => {
            let mut v = rows_below(tree, s.left);
            v.extend(rows_below(tree, s.right));
            v
        }
    }
}

fn root_threshold(tree: &DistTree) -> Option<f64> {
    match tree.root() {
        Node::Split(s) => match s.rule {
            SplitRule::Threshold(t) => Some(t),
            SplitRule::Levels { .. } => None,
        },
        Node::Leaf { .. } => None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn leaves_partition_rows_and_respect_sizes(
        seed in 0u64..1000,
        n in 100usize..400,
        minbucket in 5usize..40,
        extra in 0usize..30,
        smooth in any::<bool>(),
    ) {
        let kind = if smooth { ScenarioKind::Smooth } else { ScenarioKind::StepLocation };
        let d = scenario(kind, n, seed, 2);
        let config = TreeConfig { minbucket, minsplit: 2 * minbucket + extra, ..TreeConfig::default() };
        let tree = grow(&d, config);
        let mut all: Vec<usize> = tree.leaves().flat_map(|(_, _, m)| m.to_vec()).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        for (_, _, members) in tree.leaves() {
            prop_assert!(members.len() >= minbucket);
        }
        for (id, node) in tree.nodes.iter().enumerate() {
            if let Node::Split(_) = node {
                prop_assert!(rows_below(&tree, id).len() >= config.minsplit);
            }
        }
    }
}

#[test]
fn quadratic_statistic_ignores_affine_score_rescaling() {
    let f = Family::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for seed in 0..20 {
        let d = scenario(ScenarioKind::Smooth, 300, 900 + seed, 3);
        let theta = mle::fit(&f, &WeightedSample::unweighted(d.response.clone()).unwrap(), None).unwrap().theta;
        let scores: Vec<[f64; 2]> = d.response.iter().map(|&y| f.score(&theta, y).unwrap()).collect();
        let col = rng.random_range(0..2);
        let a = rng.random_range(0.01..100.0) * if rng.random_bool(0.5) { -1.0 } else { 1.0 };
        let b = rng.random_range(-10.0..10.0);
        let rescaled: Vec<[f64; 2]> = scores
            .iter()
            .map(|s| {
                let mut r = *s;
                r[col] = a * r[col] + b;
                r
            })
            .collect();

        let tests = |s: &[[f64; 2]]| -> Vec<_> {
            d.covariates.columns().iter().map(|c| test_association(s, c, Statistic::Quadratic)).collect()
        };
        let before = tests(&scores);
        let after = tests(&rescaled);
        for (x, y) in before.iter().zip(&after) {
            assert!((x.statistic - y.statistic).abs() <= 1e-8 * x.statistic.max(1.0), "{} vs {}", x.statistic, y.statistic);
            assert_eq!(x.df, y.df);
        }
        let var = select_variable(&before, 1.0).unwrap();
        assert_eq!(select_variable(&after, 1.0), Some(var));
        let column = d.covariates.column(var);
        let split = |s: &[[f64; 2]]| select_split(s, column, 20, Statistic::Quadratic, SplitObjective::MaxStatistic).unwrap();
        assert_eq!(split(&scores).rule, split(&rescaled).rule, "dataset {seed}");
    }
}

#[test]
fn row_order_does_not_change_the_tree() {
    for seed in 0..10 {
        let d = scenario(ScenarioKind::Smooth, 300, 40 + seed, 2);
        let mut order: Vec<usize> = (0..d.n_rows()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = d.subset(&order);
        let a = grow(&d, TreeConfig::default());
        let b = grow(&shuffled, TreeConfig::default());
        assert_eq!(a.nodes.len(), b.nodes.len(), "seed {seed}");
        for (x, y) in a.nodes.iter().zip(&b.nodes) {
            match (x, y) {
                (Node::Split(s), Node::Split(t)) => {
                    assert_eq!((s.variable, &s.rule, s.left, s.right), (t.variable, &t.rule, t.left, t.right));
                }
                (Node::Leaf { theta: ta, members: ma }, Node::Leaf { theta: tb, members: mb }) => {
                    let mut mapped: Vec<usize> = mb.iter().map(|&i| order[i]).collect();
                    mapped.sort_unstable();
                    assert_eq!(ma, &mapped);
                    assert!((ta.mu - tb.mu).abs() < 1e-9 && (ta.sigma - tb.sigma).abs() < 1e-9);
                }
                _ => panic!("seed {seed}: node kinds differ"),
            }
        }
    }
}

#[test]
fn stored_leaf_parameters_equal_refit_from_tree_weights() {
    let d = scenario(ScenarioKind::Smooth, 500, 3, 2);
    let tree = grow(&d, TreeConfig::default());
    assert!(tree.n_leaves() > 1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let z: Vec<CovariateValue> = vec![
            CovariateValue::Numeric(rng.random_range(0.0..4.0)),
            CovariateValue::Numeric(rng.random_range(0.2..2.0)),
            CovariateValue::Numeric(rng.random_range(-1.0..1.0)),
            CovariateValue::Numeric(rng.random()),
            CovariateValue::Numeric(rng.random()),
            CovariateValue::Numeric(rng.random_range(-2.0..2.0)),
            CovariateValue::Numeric(rng.random_range(-2.0..2.0)),
        ];
        let w = tree.tree_weights(&z).unwrap();
        assert!(w.iter().all(|&v| v == 0.0 || v == 1.0));
        let refit = mle::fit_from_weights(&Family::default(), &d.response, &w).unwrap();
        let stored = tree.predict(&z).unwrap();
        assert!((refit.mu - stored.mu).abs() < 1e-10 && (refit.sigma - stored.sigma).abs() < 1e-10);
    }
    for i in (0..d.n_rows()).step_by(37) {
        assert_eq!(tree.tree_weights(&d.covariates.row(i)).unwrap()[i], 1.0);
    }
}

#[test]
fn single_leaf_tree_is_the_global_fit() {
    let d = scenario(ScenarioKind::StepLocation, 200, 8, 1);
    let tree = grow(&d, TreeConfig { minsplit: 201, ..TreeConfig::default() });
    assert_eq!(tree.n_leaves(), 1);
    let global = mle::fit(&Family::default(), &WeightedSample::unweighted(d.response.clone()).unwrap(), None).unwrap().theta;
    let z = d.covariates.row(0);
    assert_eq!(tree.predict(&z).unwrap(), global);
    assert!(tree.tree_weights(&z).unwrap().iter().all(|&w| w == 1.0));
}

#[test]
fn missing_values_follow_the_larger_child() {
    let d = scenario(ScenarioKind::StepLocation, 400, 2, 0);
    let tree = grow(&d, TreeConfig { minsplit: 400, ..strict(0.05) });
    let Node::Split(root) = tree.root() else { panic!("step data should split") };
    let left = rows_below(&tree, root.left);
    let right = rows_below(&tree, root.right);
    assert_ne!(left.len(), right.len());
    let larger = if left.len() > right.len() { root.left } else { root.right };
    assert_eq!(tree.leaf_of(&[CovariateValue::Missing]).unwrap(), larger);
}

#[test]
fn categorical_covariate_separates_levels() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = Family::default();
    let n = 300;
    let codes: Vec<Option<u32>> = (0..n).map(|_| Some(rng.random_range(0..3))).collect();
    let y: Vec<f64> = codes
        .iter()
        .map(|c| {
            let mu = if c.unwrap() == 1 { 4.0 } else { 1.0 };
            f.sample(&distforest::ParamVector::new(mu, 1.0).unwrap(), &mut rng).unwrap()
        })
        .collect();
    let col = CovariateColumn::categorical("site", vec!["a".into(), "b".into(), "c".into()], codes);
    let d = Dataset::new("y", y, vec![col]).unwrap();
    let tree = grow(&d, strict(0.05));
    let Node::Split(root) = tree.root() else { panic!("no split") };
    let SplitRule::Levels { left, right } = &root.rule else { panic!("not a level split") };
    let (single, pair) = if left.len() == 1 { (left, right) } else { (right, left) };
    assert_eq!(single, &vec![1]);
    assert_eq!(pair, &vec![0, 2]);
}

#[test]
fn null_with_ten_covariates_rarely_splits_the_root() {
    let sims = 500;
    let mut splits = 0;
    for seed in 0..sims {
        let d = scenario(ScenarioKind::Null, 200, 10_000 + seed, 9);
        assert_eq!(d.n_covariates(), 10);
        let tree = grow(&d, TreeConfig { minsplit: 200, ..strict(0.05) });
        if matches!(tree.root(), Node::Split(_)) {
            splits += 1;
        }
    }
    assert!(splits as f64 <= 0.08 * sims as f64, "root split in {splits}/{sims}");
}

#[test]
fn homogeneous_data_gives_a_single_leaf() {
    let single = (0..100)
        .filter(|&seed| grow(&scenario(ScenarioKind::Null, 400, 20_000 + seed, 4), strict(0.05)).n_leaves() == 1)
        .count();
    assert!(single >= 90, "single leaf in {single}/100");
}

#[test]
fn scale_step_threshold_is_recovered() {
    let hits = (0..100)
        .filter(|&seed| {
            let tree = grow(&scenario(ScenarioKind::StepScale, 400, 30_000 + seed, 0), TreeConfig::default());
            root_threshold(&tree).is_some_and(|t| (t - 0.5).abs() <= 0.05)
        })
        .count();
    assert!(hits >= 90, "threshold within 0.05 in {hits}/100");
}
