use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vimp_core::forest::TreeEnsemble;
use vimp_core::subtree::{
    estimate_pi, exact_pi_uniform, maximal_subtrees, paired_maximal_subtrees, path_distribution, PiWeights,
};
use vimp_core::vimp::{association_limit, delta_exact, delta_formula, delta_limit, SignalSpec};
use vimp_core::{grow_tree, Dataset, Forest, GrowConfig, Tree, VarSet};

/// Rows on a coarse grid so ties and repeated values occur.
fn dataset() -> impl Strategy<Value = Dataset> {
    (1usize..5, 8usize..80).prop_flat_map(|(d, n)| {
        (
            prop::collection::vec(prop::collection::vec(0u8..12, d), n),
            prop::collection::vec(-20i32..20, n),
        )
            .prop_map(|(rows, ys)| {
                let rows = rows
                    .into_iter()
                    .map(|r| r.into_iter().map(|v| f64::from(v) / 12.0).collect())
                    .collect();
                let ys = ys.into_iter().map(|y| f64::from(y) / 4.0).collect();
                Dataset::from_rows(ys, rows).unwrap()
            })
    })
}

fn grown() -> impl Strategy<Value = (Dataset, Tree)> {
    (dataset(), 1usize..5, any::<u64>()).prop_map(|(data, min_node_size, seed)| {
        let cfg = GrowConfig {
            min_node_size,
            mtry: None,
            max_depth: None,
            seed,
        };
        let tree = grow_tree(&data, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        (data, tree)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn terminals_partition_training_rows_at_their_means((data, tree) in grown()) {
        let m = tree.num_terminals();
        let (mut counts, mut sums) = (vec![0usize; m], vec![0.0; m]);
        for (x, y) in data.rows() {
            let label = tree.node_membership(x).unwrap();
            prop_assert!((1..=m).contains(&label));
            counts[label - 1] += 1;
            sums[label - 1] += y;
        }
        prop_assert_eq!(&counts, &tree.terminal_counts());
        for (k, a) in tree.fitted_values().iter().enumerate() {
            prop_assert!(counts[k] > 0);
            prop_assert!((a - sums[k] / counts[k] as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn path_masses_are_dyadic_and_sum_to_one((data, tree) in grown()) {
        let fitted = tree.fitted_values();
        for v in 0..data.dim() {
            for s in maximal_subtrees(&tree, v).unwrap() {
                let pd = path_distribution(&s, &fitted).unwrap();
                prop_assert_eq!(pd.total_mass(), 1.0);
                for (label, depth) in &s.depths {
                    prop_assert_eq!(pd.mass_of(*label), Some(0.5f64.powi(*depth as i32)));
                }
            }
        }
    }

    #[test]
    fn fitted_formula_equals_limit((data, tree) in grown()) {
        let pi = estimate_pi(&tree, &data).unwrap();
        let fitted = tree.fitted_values();
        for v in 0..data.dim() {
            let f = delta_formula(&tree, VarSet::Single(v), &SignalSpec::Fitted, &pi).unwrap().delta;
            let l = delta_limit(&tree, VarSet::Single(v), &fitted, &pi).unwrap().delta;
            prop_assert!(l >= 0.0);
            prop_assert!((f - l).abs() <= 1e-10 * (1.0 + l.abs()));
        }
    }

    #[test]
    fn association_limit_is_an_overcount((data, tree) in grown()) {
        let pi = PiWeights::uniform(tree.num_terminals());
        let fitted = tree.fitted_values();
        for v in 0..data.dim() {
            for w in v + 1..data.dim() {
                let a = association_limit(&tree, v, w, &fitted, &pi).unwrap();
                prop_assert!(a <= 0.0);
                if paired_maximal_subtrees(&tree, v, w).unwrap().is_orthogonal() {
                    prop_assert_eq!(a, 0.0);
                }
                let kept = delta_limit(&tree, VarSet::Pair(v, w), &fitted, &pi).unwrap().delta;
                let sum = delta_limit(&tree, VarSet::Single(v), &fitted, &pi).unwrap().delta
                    + delta_limit(&tree, VarSet::Single(w), &fitted, &pi).unwrap().delta;
                prop_assert!((kept - a - sum).abs() < 1e-10 * (1.0 + sum));
            }
        }
    }

    #[test]
    fn training_sample_importance_matches_formula((data, tree) in grown()) {
        // on its own training data each terminal's mean response is its fitted value
        let pi = estimate_pi(&tree, &data).unwrap();
        for v in 0..data.dim() {
            let exact = delta_exact(&tree, VarSet::Single(v), &data).unwrap().delta;
            let formula = delta_formula(&tree, VarSet::Single(v), &SignalSpec::Fitted, &pi).unwrap().delta;
            prop_assert!((exact - formula).abs() < 1e-9 * (1.0 + exact.abs()));
        }
    }

    #[test]
    fn uniform_pi_sums_to_one((_, tree) in grown()) {
        let bounds = vec![(0.0, 1.0); tree.dim()];
        let pi = exact_pi_uniform(&tree, &bounds).unwrap();
        prop_assert!((pi.sum() - 1.0).abs() < 1e-12);
        prop_assert!(pi.as_slice().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn tree_json_round_trips((_, tree) in grown()) {
        let text = serde_json::to_string(&tree).unwrap();
        let back: Tree = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &tree);
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn forest_prediction_is_tree_mean((data, tree) in grown(), other_seed in any::<u64>()) {
        let cfg = GrowConfig { min_node_size: 2, mtry: Some(1), max_depth: Some(3), seed: other_seed };
        let other = grow_tree(&data, &cfg, &mut ChaCha8Rng::seed_from_u64(other_seed)).unwrap();
        let forest = Forest::from_trees(vec![tree.clone(), other.clone()]).unwrap();
        for (x, _) in data.rows() {
            let want = (tree.predict(x).unwrap() + other.predict(x).unwrap()) / 2.0;
            prop_assert_eq!(forest.ensemble_predict(x).unwrap(), want);
        }
    }
}
