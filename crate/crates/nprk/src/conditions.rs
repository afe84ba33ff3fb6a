//! Elementary weights and order conditions.
//!
//! Every edge-colored rooted tree `tau` pairs a tableau-dependent elementary
//! weight `Phi(tau)` with the target `1/gamma(tau)`; a method has order `p`
//! exactly when `Phi(tau) = 1/gamma(tau)` for all trees with at most `p`
//! nodes. The weight attaches one `b` factor to the root multi-index and one
//! `a` factor per non-root node, the edge color selecting which component of
//! the parent's multi-index feeds the `a` factor's first slot.
//!
//! Two evaluation routes are provided. [`elementary_weight`] contracts the
//! tree bottom-up in `O(nodes * s^(M+1))`; [`elementary_weight_naive`] is the
//! literal full-multi-index summation in `O(s^(M * nodes))`, kept as an
//! independent oracle for the fast path.

use crate::error::{Error, Result};
use crate::tableau::NprkTableau;
use crate::tree::{generate_trees_capped, ColoredTree, ConditionClass, DEFAULT_TREE_CAP};
use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::Serialize;

/// Iteration cap for the naive full-index summation.
pub const NAIVE_ITERATION_BUDGET: u128 = 1_000_000_000;

/// Default absolute residual tolerance for order verification.
pub const DEFAULT_ORDER_TOL: f64 = 1e-10;

/// One order condition evaluated against a tableau.
#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub tree: ColoredTree,
    /// Elementary weight `Phi(tau)`.
    pub weight: f64,
    /// `1/gamma(tau)`, rounded once from the exact rational.
    pub target: f64,
    /// `weight - target`.
    pub residual: f64,
    pub class: ConditionClass,
}

impl ConditionReport {
    pub fn order(&self) -> usize {
        self.tree.order()
    }

    pub fn satisfied(&self, tol: f64) -> bool {
        self.residual.abs() <= tol
    }
}

impl Serialize for ConditionReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("ConditionReport", 6)?;
        st.serialize_field("order", &self.order())?;
        st.serialize_field("tree", &self.tree)?;
        st.serialize_field("weight", &self.weight)?;
        st.serialize_field("target", &self.target)?;
        st.serialize_field("residual", &self.residual)?;
        st.serialize_field("class", &self.class)?;
        st.end()
    }
}

/// Outcome of [`verify_order`].
#[derive(Clone, Debug, Serialize)]
pub struct OrderVerdict {
    /// Largest `p <= p_max` with all residuals within tolerance at orders
    /// `<= p`; zero when even the first-order condition fails.
    pub detected_order: usize,
    /// Conditions exceeding the tolerance at order `detected_order + 1`,
    /// empty when that order was not examined (`detected_order == p_max`).
    pub failing: Vec<ConditionReport>,
    pub tolerance: f64,
}

/// Elementary weight by recursive contraction.
///
/// For each subtree a stage vector `V` is built:
/// `V[q] = sum over child multi-indices K of a[q, K] * prod V_child[K[color]]`,
/// and the root contracts against `b`. This regroups the naive summation
/// without changing any summand.
pub fn elementary_weight(t: &NprkTableau, tree: &ColoredTree) -> Result<f64> {
    check_colors(t, tree)?;
    let s = t.stages();
    let children = tree.child_spans(0);
    let vecs: Vec<(Vec<f64>, u8)> = children
        .iter()
        .map(|&(cs, ce, color)| (stage_vector(t, tree, cs, ce), color))
        .collect();
    let mut total = 0.0;
    let mut digits = vec![0usize; t.partitions()];
    for flat in 0..t.b().len() {
        unflatten(flat, s, &mut digits);
        let mut term = t.b()[flat];
        for (v, color) in &vecs {
            term *= v[digits[*color as usize]];
        }
        total += term;
    }
    Ok(total)
}

fn stage_vector(t: &NprkTableau, tree: &ColoredTree, start: usize, end: usize) -> Vec<f64> {
    let s = t.stages();
    let children: Vec<(Vec<f64>, u8)> = {
        let mut out = Vec::new();
        let mut j = start + 1;
        while j < end {
            let mut e = j + 1;
            while e < end && tree.level_seq()[e] > tree.level_seq()[j] {
                e += 1;
            }
            out.push((stage_vector(t, tree, j, e), tree.color_seq()[j]));
            j = e;
        }
        out
    };
    let block = t.b().len();
    let mut v = vec![0.0; s];
    let mut digits = vec![0usize; t.partitions()];
    for (q, vq) in v.iter_mut().enumerate() {
        let row = t.a_row(q);
        let mut acc = 0.0;
        for (flat, &aqk) in row.iter().enumerate().take(block) {
            unflatten(flat, s, &mut digits);
            let mut term = aqk;
            for (cv, color) in &children {
                term *= cv[digits[*color as usize]];
            }
            acc += term;
        }
        *vq = acc;
    }
    v
}

fn unflatten(mut flat: usize, s: usize, digits: &mut [usize]) {
    for d in digits.iter_mut().rev() {
        *d = flat % s;
        flat /= s;
    }
}

fn check_colors(t: &NprkTableau, tree: &ColoredTree) -> Result<()> {
    if tree.num_colors() != t.partitions() {
        return Err(Error::PartitionMismatch {
            tree_colors: tree.num_colors(),
            tableau_m: t.partitions(),
        });
    }
    Ok(())
}

/// Elementary weight by the literal full-multi-index loop: every node gets an
/// `M`-multi-index, each non-root node contributes the `a` entry addressed by
/// its parent's color component and its own multi-index, the root contributes
/// the `b` entry, and everything is summed. Costs `s^(M * nodes)` iterations.
pub fn elementary_weight_naive(t: &NprkTableau, tree: &ColoredTree) -> Result<f64> {
    check_colors(t, tree)?;
    let s = t.stages();
    let m = t.partitions();
    let n = tree.order();
    let iterations = (s as u128)
        .checked_pow((m * n) as u32)
        .ok_or(Error::Overflow("naive weight iteration count"))?;
    if iterations > NAIVE_ITERATION_BUDGET {
        return Err(Error::NaiveBudgetExceeded {
            iterations,
            cap: NAIVE_ITERATION_BUDGET,
        });
    }

    let parents: Vec<usize> = (0..n).map(|k| tree.parent(k).unwrap_or(0)).collect();
    let colors = tree.color_seq();

    // digits[k * m..(k + 1) * m] is node k's multi-index.
    let mut digits = vec![0usize; n * m];
    let mut sum = 0.0;
    loop {
        let mut prod = t.b_at(&digits[0..m]);
        for k in (1..n).rev() {
            let c = colors[k] as usize;
            let row = digits[parents[k] * m + c];
            prod *= t.a_at(row, &digits[k * m..(k + 1) * m]);
        }
        sum += prod;

        // Odometer increment over all node multi-indices.
        let mut pos = n * m;
        loop {
            if pos == 0 {
                return Ok(sum);
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < s {
                break;
            }
            digits[pos] = 0;
        }
    }
}

fn report_for(t: &NprkTableau, tree: &ColoredTree) -> Result<ConditionReport> {
    let weight = elementary_weight(t, tree)?;
    let target = 1.0 / tree.density() as f64;
    Ok(ConditionReport {
        weight,
        target,
        residual: weight - target,
        class: tree.classify(),
        tree: tree.clone(),
    })
}

/// Evaluates every condition of order `1..=max_order`, grouped by ascending
/// order and canonical tree order within each order. Uses
/// [`DEFAULT_TREE_CAP`].
pub fn condition_set(t: &NprkTableau, max_order: usize) -> Result<Vec<ConditionReport>> {
    condition_set_capped(t, max_order, DEFAULT_TREE_CAP)
}

/// [`condition_set`] with an explicit tree-generation cap.
pub fn condition_set_capped(
    t: &NprkTableau,
    max_order: usize,
    cap: u128,
) -> Result<Vec<ConditionReport>> {
    if max_order == 0 {
        return Err(Error::Validation("max_order must be >= 1".into()));
    }
    let mut reports = Vec::new();
    for order in 1..=max_order {
        reports.extend(conditions_at_order(t, order, cap)?);
    }
    Ok(reports)
}

/// Evaluates the conditions of a single order, in canonical tree order.
pub fn conditions_at_order(
    t: &NprkTableau,
    order: usize,
    cap: u128,
) -> Result<Vec<ConditionReport>> {
    let trees = generate_trees_capped(t.partitions(), order, cap)?;
    trees
        .par_iter()
        .map(|tree| report_for(t, tree))
        .collect::<Result<Vec<_>>>()
}

/// Determines the largest order `p <= p_max` whose conditions all hold to the
/// absolute tolerance `tol`, reporting the violations one order above.
pub fn verify_order(t: &NprkTableau, p_max: usize, tol: f64) -> Result<OrderVerdict> {
    if p_max == 0 {
        return Err(Error::Validation("p_max must be >= 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Validation(format!("tolerance must be > 0, got {tol}")));
    }
    for order in 1..=p_max {
        let reports = conditions_at_order(t, order, DEFAULT_TREE_CAP)?;
        let failing: Vec<ConditionReport> = reports
            .into_iter()
            .filter(|r| !r.satisfied(tol))
            .collect();
        if !failing.is_empty() {
            return Ok(OrderVerdict {
                detected_order: order - 1,
                failing,
                tolerance: tol,
            });
        }
    }
    Ok(OrderVerdict {
        detected_order: p_max,
        failing: Vec::new(),
        tolerance: tol,
    })
}

/// Per-node index letters. Nodes are lettered in canonical (depth-first)
/// order with `M` letters each, drawn from a fixed alphabet so small cases
/// read like hand-written condition lists; exhausted alphabets continue with
/// numbered letters (`i1`, `j1`, ...).
fn letter_groups(m: usize, nodes: usize) -> Vec<Vec<String>> {
    const PAIRS: [&str; 18] = [
        "i", "j", "k", "l", "u", "v", "a", "b", "m", "n", "p", "q", "r", "t", "w", "x", "y", "z",
    ];
    const TRIPLES: [&str; 25] = [
        "i", "j", "k", "u", "v", "w", "a", "b", "c", "d", "e", "f", "g", "h", "l", "m", "n", "o",
        "p", "q", "r", "t", "x", "y", "z",
    ];
    let base: &[&str] = if m == 3 { &TRIPLES } else { &PAIRS };
    let needed = m * nodes;
    let mut flat = Vec::with_capacity(needed);
    let mut round = 0;
    'outer: loop {
        for letter in base {
            if flat.len() == needed {
                break 'outer;
            }
            flat.push(if round == 0 {
                (*letter).to_string()
            } else {
                format!("{letter}{round}")
            });
        }
        round += 1;
    }
    flat.chunks(m).map(|c| c.to_vec()).collect()
}

/// Renders the order condition of a tree as a summation equation, e.g.
/// `† Σ b_{ij} a_{iuv} a_{jkl} = 1/3`. The class tag prefix is `*` for
/// linearly separable coupling conditions and `†` for nonlinear ones.
pub fn render_condition(tree: &ColoredTree) -> String {
    let canon = tree.canonicalize();
    let letters = letter_groups(canon.num_colors(), canon.order());
    let b_sym = format!("b_{{{}}}", letters[0].join(""));
    let mut factors: Vec<String> = (1..canon.order())
        .map(|k| {
            let p = canon.parent(k).expect("non-root node has a parent");
            let row = &letters[p][canon.color_seq()[k] as usize];
            format!("a_{{{}{}}}", row, letters[k].join(""))
        })
        .collect();
    factors.sort();
    let gamma = canon.density();
    let target = if gamma == 1 {
        "1".to_string()
    } else {
        format!("1/{gamma}")
    };
    let tag = canon.classify().tag();
    let prefix = if tag.is_empty() {
        String::new()
    } else {
        format!("{tag} ")
    };
    let body = if factors.is_empty() {
        format!("Σ {b_sym} = {target}")
    } else {
        format!("Σ {b_sym} {} = {target}", factors.join(" "))
    };
    format!("{prefix}{body}")
}

/// [`render_condition`] wrapped in display-math markers with LaTeX symbols.
pub fn render_condition_latex(tree: &ColoredTree) -> String {
    let plain = render_condition(tree);
    let tex = plain
        .replace("† ", "{}^{\\dagger} ")
        .replace("* ", "{}^{*} ")
        .replace("Σ", "\\sum");
    format!("\\[ {tex} \\]")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::{method1, method2, nprk_euler_implicit_explicit, NprkTableau};
    use crate::tree::generate_trees;

    fn tree(levels: &[u8], colors: &[u8], m: usize) -> ColoredTree {
        ColoredTree::new(levels.to_vec(), colors.to_vec(), m).unwrap()
    }

    #[test]
    fn single_node_weight_is_b_sum() {
        let t = method2();
        let w = elementary_weight(&t, &ColoredTree::single(2)).unwrap();
        assert!((w - t.b_total()).abs() < 1e-15);
        assert!((w - 1.0).abs() < 1e-14);
    }

    #[test]
    fn order_two_dashed_weight_is_half() {
        // Sum b1_i c_i with fourth-order underlying weights.
        let t = method1();
        let w = elementary_weight(&t, &tree(&[1, 2], &[0, 0], 2)).unwrap();
        assert!((w - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mixed_cherry_fails_for_dense_weights() {
        let t = method2();
        let w = elementary_weight(&t, &tree(&[1, 2, 2], &[0, 1, 0], 2)).unwrap();
        // x/s - x^2/s^2 with x = 3/2, s = 3.
        assert!((w - 0.25).abs() < 1e-14);
        assert!((w - 1.0 / 3.0).abs() > 1e-2);
    }

    #[test]
    fn zero_tensor_kills_every_multi_node_weight() {
        let s = 2;
        let t = NprkTableau::new(2, s, vec![0.0; s * s * s], vec![0.25; s * s]).unwrap();
        for levels in [vec![1u8, 2], vec![1, 2, 2], vec![1, 2, 3]] {
            let colors = vec![0u8; levels.len()];
            let tr = ColoredTree::new(levels, colors, 2).unwrap();
            assert_eq!(elementary_weight(&t, &tr).unwrap(), 0.0);
            assert_eq!(elementary_weight_naive(&t, &tr).unwrap(), 0.0);
        }
    }

    #[test]
    fn naive_agrees_with_fast_on_builtins() {
        let tableaux = [method1(), method2(), nprk_euler_implicit_explicit()];
        for t in &tableaux {
            for order in 1..=3 {
                for tr in generate_trees(2, order).unwrap() {
                    let fast = elementary_weight(t, &tr).unwrap();
                    let naive = elementary_weight_naive(t, &tr).unwrap();
                    assert!(
                        (fast - naive).abs() <= 1e-12 * naive.abs().max(1.0),
                        "{} fast={fast} naive={naive}",
                        tr
                    );
                }
            }
        }
    }

    #[test]
    fn naive_budget_guard() {
        let s = 3;
        let t = NprkTableau::new(
            3,
            s,
            vec![0.1; s * s * s * s],
            vec![0.1; s * s * s],
        )
        .unwrap();
        let big = tree(
            &[1, 2, 3, 4, 5, 6, 7, 8],
            &[0, 0, 0, 0, 0, 0, 0, 0],
            3,
        );
        match elementary_weight_naive(&t, &big) {
            Err(Error::NaiveBudgetExceeded { .. }) => {}
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn color_mismatch_is_rejected() {
        let t = method1();
        let tr = ColoredTree::single(3);
        assert!(matches!(
            elementary_weight(&t, &tr),
            Err(Error::PartitionMismatch { .. })
        ));
    }

    #[test]
    fn method1_passes_order_three() {
        let reports = condition_set(&method1(), 3).unwrap();
        assert_eq!(reports.len(), 1 + 2 + 7);
        for r in &reports {
            assert!(r.residual.abs() < 1e-12, "{}: {}", r.tree, r.residual);
        }
    }

    #[test]
    fn method2_fails_exactly_the_nonlinear_conditions_at_order_three() {
        let reports = condition_set(&method2(), 3).unwrap();
        for r in &reports {
            let fails = r.residual.abs() > 1e-10;
            let nonlinear = r.class == ConditionClass::NonlinearCoupling;
            assert_eq!(fails, nonlinear, "{}: residual {}", r.tree, r.residual);
        }
    }

    #[test]
    fn order_three_targets_for_two_partitions() {
        let reports = conditions_at_order(&method1(), 3, DEFAULT_TREE_CAP).unwrap();
        let mut targets: Vec<f64> = reports.iter().map(|r| r.target).collect();
        targets.sort_by(f64::total_cmp);
        let expected = [
            1.0 / 6.0,
            1.0 / 6.0,
            1.0 / 6.0,
            1.0 / 6.0,
            1.0 / 3.0,
            1.0 / 3.0,
            1.0 / 3.0,
        ];
        assert_eq!(targets, expected);
    }

    #[test]
    fn verify_order_on_builtins() {
        let v = verify_order(&method1(), 4, DEFAULT_ORDER_TOL).unwrap();
        assert_eq!(v.detected_order, 3);
        assert!(!v.failing.is_empty());
        assert!(v.failing.iter().all(|r| r.order() == 4));

        let v = verify_order(&method2(), 4, DEFAULT_ORDER_TOL).unwrap();
        assert_eq!(v.detected_order, 2);

        let v = verify_order(&nprk_euler_implicit_explicit(), 2, DEFAULT_ORDER_TOL).unwrap();
        assert_eq!(v.detected_order, 1);
    }

    #[test]
    fn render_examples() {
        assert_eq!(
            render_condition(&tree(&[1, 2, 3], &[0, 0, 0], 2)),
            "Σ b_{ij} a_{ikl} a_{kuv} = 1/6"
        );
        assert_eq!(
            render_condition(&tree(&[1, 2, 2], &[0, 1, 0], 2)),
            "† Σ b_{ij} a_{iuv} a_{jkl} = 1/3"
        );
        assert_eq!(render_condition(&ColoredTree::single(3)), "Σ b_{ijk} = 1");
        assert_eq!(
            render_condition(&tree(&[1, 2, 3], &[0, 0, 1], 2)),
            "* Σ b_{ij} a_{ikl} a_{luv} = 1/6"
        );
        // Classical single-partition style.
        assert_eq!(
            render_condition(&tree(&[1, 2, 3], &[0, 0, 0], 1)),
            "Σ b_{i} a_{ij} a_{jk} = 1/6"
        );
    }

    #[test]
    fn render_latex_wraps_display_math() {
        let s = render_condition_latex(&tree(&[1, 2, 2], &[0, 1, 0], 2));
        assert_eq!(s, "\\[ {}^{\\dagger} \\sum b_{ij} a_{iuv} a_{jkl} = 1/3 \\]");
    }

    #[test]
    fn report_json_shape() {
        let reports = conditions_at_order(&method1(), 1, DEFAULT_TREE_CAP).unwrap();
        let json = serde_json::to_string(&reports[0]).unwrap();
        assert!(json.starts_with(r#"{"order":1,"tree":{"level_seq":[1]"#));
        assert!(json.contains(r#""class":"underlying""#));
        assert!(json.contains(r#""weight":"#));
        assert!(json.contains(r#""target":1.0"#));
    }
}
