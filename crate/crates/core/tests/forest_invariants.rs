mod common;

use std::collections::BTreeMap;

use pfgap::dataset::{Dataset, Instance, Target};
use pfgap::distance::DistanceSpec;
use pfgap::forest::{fit, impurity, Forest, ForestConfig, Node, Purity, StopReason, Tree};
use pfgap::Error;
use proptest::prelude::*;

fn labelled() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (2usize..40, 1usize..4).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(prop::collection::vec(prop_oneof![4 => -3.0..3.0f64, 1 => Just(0.0)], 2), n),
            prop::collection::vec(0..k, n),
        )
    })
}

fn regression_data() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), n),
            prop::collection::vec(prop_oneof![3 => -5.0..5.0f64, 1 => Just(1.0)], n),
        )
    })
}

fn regression(rows: &[Vec<f64>], y: &[f64]) -> Dataset {
    let inst = rows
        .iter()
        .enumerate()
        .map(|(i, r)| Instance::vector(format!("i{i}"), r.clone()))
        .collect();
    Dataset::regression(inst, y.to_vec()).unwrap()
}

/// In-bag multiset of every node, collected from the leaves below it.
fn node_members(tree: &Tree) -> Vec<Vec<(usize, u32)>> {
    fn collect(tree: &Tree, node: usize, out: &mut Vec<Vec<(usize, u32)>>) -> Vec<(usize, u32)> {
        let members = match &tree.nodes[node] {
            Node::Leaf(l) => l.members.clone(),
            Node::Internal { children, .. } => {
                let mut all: Vec<(usize, u32)> = children.iter().flat_map(|&c| collect(tree, c, out)).collect();
                all.sort_unstable();
                all
            }
        };
        out[node] = members.clone();
        members
    }
    let mut out = vec![Vec::new(); tree.nodes.len()];
    collect(tree, 0, &mut out);
    out
}

fn check_structure(forest: &Forest, cfg: &ForestConfig) -> Result<(), TestCaseError> {
    let d = &forest.train;
    let n = d.len();
    prop_assert_eq!(forest.trees.len(), cfg.n_trees);
    for (t, tree) in forest.trees.iter().enumerate() {
        prop_assert_eq!(tree.multiplicity.iter().map(|&c| c as usize).sum::<usize>(), n);
        let oob: Vec<usize> = (0..n).filter(|&j| tree.multiplicity[j] == 0).collect();
        prop_assert_eq!(tree.oob_set(), oob.clone());
        let routed: Vec<usize> = tree.oob_leaves.iter().map(|&(i, _)| i).collect();
        prop_assert_eq!(routed, oob);

        // leaf multisets partition the in-bag multiset
        let mut seen = vec![0u32; n];
        for (_, leaf) in tree.leaves() {
            prop_assert_eq!(leaf.weight, leaf.members.iter().map(|m| m.1).sum::<u32>());
            for &(j, c) in &leaf.members {
                prop_assert!(c > 0);
                seen[j] += c;
            }
        }
        prop_assert_eq!(&seen, &tree.multiplicity);

        for node in &tree.nodes {
            if let Node::Internal { exemplars, children, .. } = node {
                prop_assert!(exemplars.len() >= 2);
                prop_assert_eq!(exemplars.len(), children.len());
            }
        }

        // every in-bag instance is routed to the leaf holding it
        for (id, leaf) in tree.leaves() {
            for &(j, _) in &leaf.members {
                prop_assert_eq!(forest.route(t, &d.instances[j]).unwrap().leaf, id);
            }
        }

        for (_, leaf) in tree.leaves() {
            let classes: BTreeMap<usize, u32> = leaf
                .members
                .iter()
                .filter_map(|&(j, c)| d.targets[j].class().map(|k| (k, c)))
                .fold(BTreeMap::new(), |mut m, (k, c)| {
                    *m.entry(k).or_default() += c;
                    m
                });
            match leaf.stop {
                StopReason::Pure => match d.targets[leaf.members[0].0] {
                    Target::Class(_) => prop_assert_eq!(classes.len(), 1),
                    Target::Real(_) => {
                        let y0 = d.targets[leaf.members[0].0].real().unwrap();
                        prop_assert!(leaf.members.iter().all(|&(j, _)| d.targets[j].real() == Some(y0)));
                    }
                },
                StopReason::MinLeaf => prop_assert!((leaf.weight as usize) < cfg.min_leaf),
                StopReason::MaxDepth => prop_assert_eq!(Some(leaf.depth), cfg.max_depth),
                StopReason::NoProgress => {}
            }
            if classes.len() > 1 {
                prop_assert!(leaf.stop != StopReason::Pure);
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn classification_forest_invariants(
        (rows, labels) in labelled(),
        trees in 1usize..6,
        r in 1usize..4,
        max_depth in prop::option::of(1usize..5),
        min_leaf in 1usize..4,
        seed in any::<u64>(),
    ) {
        let d = common::vectors(&rows, &labels);
        let mut cfg = ForestConfig::classification(vec![DistanceSpec::euclidean()]).with_trees(trees).with_r(r).with_seed(seed);
        cfg.max_depth = max_depth;
        cfg.min_leaf = min_leaf;
        let forest = fit(&d, &cfg).unwrap();
        check_structure(&forest, &cfg)?;
        let again = fit(&d, &cfg).unwrap();
        prop_assert_eq!(&forest.trees, &again.trees);
    }

    #[test]
    fn regression_splits_reduce_impurity(
        (rows, y) in regression_data(),
        mad in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let d = regression(&rows, &y);
        let mut cfg = ForestConfig::regression(vec![DistanceSpec::euclidean()]).with_trees(3).with_seed(seed);
        if mad {
            cfg.purity = Purity::Mad;
        }
        let forest = fit(&d, &cfg).unwrap();
        check_structure(&forest, &cfg)?;
        for tree in &forest.trees {
            let members = node_members(tree);
            for (id, node) in tree.nodes.iter().enumerate() {
                if let Node::Internal { children, .. } = node {
                    let parent = impurity(&d, cfg.purity, &members[id]);
                    let total: f64 = members[id].iter().map(|m| m.1 as f64).sum();
                    let weighted: f64 = children
                        .iter()
                        .map(|&c| {
                            let w: f64 = members[c].iter().map(|m| m.1 as f64).sum();
                            w / total * impurity(&d, cfg.purity, &members[c])
                        })
                        .sum();
                    prop_assert!(weighted < parent, "split at node {} does not reduce impurity: {} vs {}", id, weighted, parent);
                }
            }
        }
    }

    #[test]
    fn model_round_trip_preserves_predictions((rows, labels) in labelled(), seed in any::<u64>()) {
        let d = common::vectors(&rows, &labels);
        let cfg = ForestConfig::classification(vec![DistanceSpec::euclidean()]).with_trees(4).with_seed(seed);
        let forest = fit(&d, &cfg).unwrap();
        let bytes = forest.to_bytes().unwrap();
        let back = Forest::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back.trees, &forest.trees);
        let queries: Vec<Instance> = (0..50)
            .map(|q| Instance::vector(format!("q{q}"), vec![(q as f64 * 0.37).sin() * 3.0, (q as f64 * 0.11).cos() * 3.0]))
            .collect();
        prop_assert_eq!(forest.predict_many(&queries).unwrap(), back.predict_many(&queries).unwrap());
        prop_assert_eq!(forest.predict_oob(), back.predict_oob());
    }
}

fn penguin_like() -> Dataset {
    pfgap::bench::blobs(300, 3, 4, 1.5, 6.0, 7).unwrap()
}

#[test]
fn thread_count_does_not_change_the_forest() {
    let d = penguin_like();
    let cfg = ForestConfig::classification(vec![DistanceSpec::euclidean()]).with_trees(8).with_seed(3);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| fit(&d, &cfg).unwrap());
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| fit(&d, &cfg).unwrap());
    assert_eq!(one.trees, four.trees);
}

#[test]
fn model_file_round_trip_on_a_thousand_queries() {
    let d = penguin_like();
    let cfg = ForestConfig::classification(vec![DistanceSpec::euclidean()]).with_trees(11).with_seed(5);
    let forest = fit(&d, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.pf");
    forest.save(&path).unwrap();
    let back = Forest::load(&path).unwrap();
    let queries = pfgap::bench::blobs(1000, 3, 4, 2.5, 6.0, 99).unwrap();
    assert_eq!(
        forest.predict_many(&queries.instances).unwrap(),
        back.predict_many(&queries.instances).unwrap()
    );
}

#[test]
fn truncated_or_corrupted_model_is_rejected() {
    let d = penguin_like();
    let forest = fit(&d, &ForestConfig::classification(vec![DistanceSpec::euclidean()]).with_trees(2)).unwrap();
    let bytes = forest.to_bytes().unwrap();
    let truncated = &bytes[..bytes.len() - 10];
    let err = Forest::from_bytes(truncated).unwrap_err();
    assert!(matches!(err, Error::Model(ref m) if m.contains("checksum")), "{err}");
    assert_eq!(err.exit_code(), 3);

    let mut flipped = bytes.clone();
    let last = flipped.len() - 5;
    flipped[last] ^= 0x01;
    assert!(matches!(Forest::from_bytes(&flipped), Err(Error::Model(_))));

    let no_header: Vec<u8> = bytes.iter().copied().filter(|&b| b != b'\n').collect();
    assert!(matches!(Forest::from_bytes(&no_header), Err(Error::Model(_))));
}

#[test]
fn meta_class_trees_are_no_deeper_than_the_predicted_alphabet() {
    use std::sync::Arc;
    // predicted labels constant within each true class, three of them
    let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64, (i % 7) as f64]).collect();
    let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
    let d = common::vectors(&rows, &labels);
    let table = pfgap::meta::PredictionTable::from_labels(
        d.instances.iter().zip(&labels).map(|(x, &l)| (x.id.clone(), format!("p{}", l % 3))),
    )
    .unwrap();
    let spec = DistanceSpec::new("meta_class").with_table(Arc::new(table));
    let forest = fit(&d, &ForestConfig::classification(vec![spec]).with_trees(20).with_seed(1)).unwrap();
    for tree in &forest.trees {
        assert!(tree.depth <= 3, "depth {}", tree.depth);
    }
}
