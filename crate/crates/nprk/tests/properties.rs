//! Property tests over randomly built trees and tableaux.

use nprk::{ark_to_nprk, ArkPair, BWeightMode, ColoredTree, RkTableau, TABLEAU_TOL};
use proptest::prelude::*;

/// Builds a tree of `1 + attachments.len()` nodes by grafting each entry
/// onto an earlier node; colors and parents are taken modulo the valid range.
fn tree_from_seed(m: usize, attachments: &[(usize, usize)]) -> ColoredTree {
    let n = attachments.len() + 1;
    let mut children: Vec<Vec<(usize, u8)>> = vec![Vec::new(); n];
    for (i, &(parent, color)) in attachments.iter().enumerate() {
        children[parent % (i + 1)].push((i + 1, (color % m) as u8));
    }
    let mut levels = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    fn dfs(
        node: usize,
        level: u8,
        color: u8,
        children: &[Vec<(usize, u8)>],
        levels: &mut Vec<u8>,
        colors: &mut Vec<u8>,
    ) {
        levels.push(level);
        colors.push(color);
        for &(child, c) in &children[node] {
            dfs(child, level + 1, c, children, levels, colors);
        }
    }
    dfs(0, 1, 0, &children, &mut levels, &mut colors);
    let mut tree_colors = colors;
    tree_colors[0] = 0;
    ColoredTree::new(levels, tree_colors, m).expect("grafted trees are valid")
}

fn arb_tree() -> impl Strategy<Value = ColoredTree> {
    (1usize..=3, prop::collection::vec((any::<usize>(), any::<usize>()), 0..8))
        .prop_map(|(m, attachments)| tree_from_seed(m, &attachments))
}

proptest! {
    #[test]
    fn canonicalization_is_idempotent(tree in arb_tree()) {
        let canon = tree.canonicalize();
        prop_assert_eq!(canon.canonicalize(), canon);
    }

    #[test]
    fn canonicalization_preserves_invariants(tree in arb_tree()) {
        let canon = tree.canonicalize();
        prop_assert_eq!(canon.order(), tree.order());
        prop_assert_eq!(canon.density(), tree.density());
        prop_assert_eq!(canon.classify(), tree.classify());
        prop_assert_eq!(canon.symmetry(), tree.symmetry());
        prop_assert_eq!(canon.is_color_branching(), tree.is_color_branching());
    }

    #[test]
    fn tree_serialization_round_trips(tree in arb_tree()) {
        let json = serde_json::to_string(&tree).unwrap();
        let back: ColoredTree = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &tree);
        let compact: ColoredTree =
            format!("{};M:{}", tree.to_compact(), tree.num_colors()).parse().unwrap();
        prop_assert_eq!(compact, tree);
    }
}

/// Random additive pair with shared abscissae; weights sum to one.
fn arb_pair() -> impl Strategy<Value = (ArkPair, bool)> {
    let entry = -0.6f64..0.6f64;
    let weight = 0.1f64..1.0f64;
    (2usize..=4)
        .prop_flat_map(move |s| {
            (
                Just(s),
                prop::collection::vec(entry.clone(), s * s),
                prop::collection::vec(entry.clone(), s * s),
                prop::collection::vec(weight.clone(), s),
                prop::collection::vec(weight.clone(), s),
                any::<bool>(),
            )
        })
        .prop_map(|(s, a1, mut a2, b1, b2, equal_weights)| {
            let c: Vec<f64> = (0..s).map(|i| a1[i * s..(i + 1) * s].iter().sum()).collect();
            for i in 0..s {
                let partial: f64 = a2[i * s..i * s + s - 1].iter().sum();
                a2[i * s + s - 1] = c[i] - partial;
            }
            let normalize = |v: Vec<f64>| {
                let total: f64 = v.iter().sum();
                v.into_iter().map(|x| x / total).collect::<Vec<f64>>()
            };
            let b1 = normalize(b1);
            let b2 = if equal_weights { b1.clone() } else { normalize(b2) };
            let first = RkTableau::new(s, a1, b1, c.clone()).unwrap();
            let second = RkTableau::new(s, a2, b2, c).unwrap();
            (ArkPair::new(first, second).unwrap(), equal_weights)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lift_round_trips_to_the_same_pair((pair, equal_weights) in arb_pair()) {
        let mut modes = vec![BWeightMode::Dense];
        if equal_weights {
            modes.push(BWeightMode::Diagonal);
        }
        for mode in modes {
            let t = ark_to_nprk(&pair, mode).unwrap();
            prop_assert!(t.underlying_rk(1).approx_eq(pair.first(), TABLEAU_TOL));
            prop_assert!(t.underlying_rk(2).approx_eq(pair.second(), TABLEAU_TOL));
            // Shared abscissae come with the tensor structure.
            let c = t.c();
            for (x, y) in c.iter().zip(pair.c()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
