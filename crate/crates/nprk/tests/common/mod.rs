//! Shared oracles for the integration suites: a letter-pattern summation
//! evaluator (independent of the library's weight evaluation), hand
//! transcriptions of the published third- and fourth-order condition lists,
//! and stand-alone RK/ARK one-step references.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use nprk::{ArkPair, ColoredTree, NprkTableau, RkTableau};

/// A tensor summation pattern `b_{..} a_{..} a_{..} = target` over single
/// character dummy indices, evaluated by brute force over all assignments.
#[derive(Clone, Debug)]
pub struct SumPattern {
    pub b_letters: Vec<char>,
    pub a_factors: Vec<Vec<char>>,
    pub target: f64,
    /// "", "*" or "†".
    pub tag: String,
}

impl SumPattern {
    /// Parses strings like `† Σ b_{ij} a_{iuv} a_{jkl} = 1/3`
    /// (the Σ and tag are optional).
    pub fn parse(text: &str) -> SumPattern {
        let mut tag = String::new();
        let mut rest = text.trim();
        for t in ["†", "*"] {
            if let Some(r) = rest.strip_prefix(t) {
                tag = t.to_string();
                rest = r.trim_start();
            }
        }
        rest = rest.strip_prefix('Σ').map(str::trim_start).unwrap_or(rest);
        let (sum_part, target_part) = rest.split_once('=').expect("pattern has an = sign");
        let target = {
            let t = target_part.trim();
            match t.split_once('/') {
                Some((num, den)) => {
                    num.trim().parse::<f64>().unwrap() / den.trim().parse::<f64>().unwrap()
                }
                None => t.parse::<f64>().unwrap(),
            }
        };
        let mut b_letters = Vec::new();
        let mut a_factors = Vec::new();
        for token in sum_part.split_whitespace() {
            let (head, sub) = token.split_once("_{").expect("indexed symbol");
            let letters: Vec<char> = sub.trim_end_matches('}').chars().collect();
            assert!(letters.iter().all(|c| c.is_ascii_alphabetic()));
            match head {
                "b" => b_letters = letters,
                "a" => a_factors.push(letters),
                other => panic!("unexpected symbol {other}"),
            }
        }
        assert!(!b_letters.is_empty());
        SumPattern {
            b_letters,
            a_factors,
            target,
            tag,
        }
    }

    /// Brute-force evaluation: sum over all assignments of the distinct
    /// letters to stage indices.
    pub fn eval(&self, t: &NprkTableau) -> f64 {
        let s = t.stages();
        let mut letters: Vec<char> = Vec::new();
        let push = |c: char, letters: &mut Vec<char>| {
            if !letters.contains(&c) {
                letters.push(c);
            }
        };
        for &c in &self.b_letters {
            push(c, &mut letters);
        }
        for f in &self.a_factors {
            for &c in f {
                push(c, &mut letters);
            }
        }
        let lookup = |c: char, assign: &[usize]| -> usize {
            assign[letters.iter().position(|&l| l == c).unwrap()]
        };

        let mut assign = vec![0usize; letters.len()];
        let mut total = 0.0;
        loop {
            let b_idx: Vec<usize> = self.b_letters.iter().map(|&c| lookup(c, &assign)).collect();
            let mut prod = t.b_at(&b_idx);
            for f in &self.a_factors {
                let row = lookup(f[0], &assign);
                let idx: Vec<usize> = f[1..].iter().map(|&c| lookup(c, &assign)).collect();
                prod *= t.a_at(row, &idx);
            }
            total += prod;

            let mut pos = assign.len();
            loop {
                if pos == 0 {
                    return total;
                }
                pos -= 1;
                assign[pos] += 1;
                if assign[pos] < s {
                    break;
                }
                assign[pos] = 0;
            }
        }
    }
}

/// Published third-order conditions for two partitions.
pub fn third_order_two_partitions() -> Vec<SumPattern> {
    [
        "Σ b_{ij} a_{ikl} a_{kuv} = 1/6",
        "* Σ b_{ij} a_{kuv} a_{jkl} = 1/6",
        "* Σ b_{ij} a_{ikl} a_{luv} = 1/6",
        "Σ b_{ij} a_{jkl} a_{luv} = 1/6",
        "Σ b_{ij} a_{ikl} a_{iuv} = 1/3",
        "† Σ b_{ij} a_{iuv} a_{jkl} = 1/3",
        "Σ b_{ij} a_{jkl} a_{juv} = 1/3",
    ]
    .iter()
    .map(|s| SumPattern::parse(s))
    .collect()
}

/// Published fourth-order conditions for two partitions.
pub fn fourth_order_two_partitions() -> Vec<SumPattern> {
    [
        "Σ b_{ij} a_{ikl} a_{kuv} a_{uab} = 1/24",
        "* Σ b_{ij} a_{kuv} a_{uab} a_{jkl} = 1/24",
        "* Σ b_{ij} a_{ikl} a_{uab} a_{luv} = 1/24",
        "* Σ b_{ij} a_{uab} a_{jkl} a_{luv} = 1/24",
        "* Σ b_{ij} a_{ikl} a_{kuv} a_{vab} = 1/24",
        "* Σ b_{ij} a_{kuv} a_{jkl} a_{vab} = 1/24",
        "* Σ b_{ij} a_{ikl} a_{luv} a_{vab} = 1/24",
        "Σ b_{ij} a_{jkl} a_{luv} a_{vab} = 1/24",
        "Σ b_{ij} a_{ikl} a_{kuv} a_{kab} = 1/12",
        "* Σ b_{ij} a_{kuv} a_{kab} a_{jkl} = 1/12",
        "† Σ b_{ij} a_{ikl} a_{kab} a_{luv} = 1/12",
        "† Σ b_{ij} a_{kab} a_{jkl} a_{luv} = 1/12",
        "* Σ b_{ij} a_{ikl} a_{luv} a_{lab} = 1/12",
        "Σ b_{ij} a_{jkl} a_{luv} a_{lab} = 1/12",
        "Σ b_{ij} a_{ikl} a_{iab} a_{kuv} = 1/8",
        "† Σ b_{ij} a_{iab} a_{kuv} a_{jkl} = 1/8",
        "* Σ b_{ij} a_{ikl} a_{iab} a_{luv} = 1/8",
        "† Σ b_{ij} a_{iab} a_{jkl} a_{luv} = 1/8",
        "† Σ b_{ij} a_{ikl} a_{kuv} a_{jab} = 1/8",
        "* Σ b_{ij} a_{kuv} a_{jkl} a_{jab} = 1/8",
        "† Σ b_{ij} a_{ikl} a_{jab} a_{luv} = 1/8",
        "Σ b_{ij} a_{jkl} a_{jab} a_{luv} = 1/8",
        "Σ b_{ij} a_{ikl} a_{iuv} a_{iab} = 1/4",
        "† Σ b_{ij} a_{iuv} a_{iab} a_{jkl} = 1/4",
        "† Σ b_{ij} a_{iab} a_{jkl} a_{juv} = 1/4",
        "Σ b_{ij} a_{jkl} a_{juv} a_{jab} = 1/4",
    ]
    .iter()
    .map(|s| SumPattern::parse(s))
    .collect()
}

/// Published third-order conditions for three partitions.
pub fn third_order_three_partitions() -> Vec<SumPattern> {
    [
        "Σ b_{ijk} a_{iuvw} a_{uabc} = 1/6",
        "* Σ b_{ijk} a_{iuvw} a_{vabc} = 1/6",
        "* Σ b_{ijk} a_{iuvw} a_{wabc} = 1/6",
        "* Σ b_{ijk} a_{uabc} a_{juvw} = 1/6",
        "Σ b_{ijk} a_{juvw} a_{vabc} = 1/6",
        "* Σ b_{ijk} a_{juvw} a_{wabc} = 1/6",
        "* Σ b_{ijk} a_{uabc} a_{kuvw} = 1/6",
        "* Σ b_{ijk} a_{vabc} a_{kuvw} = 1/6",
        "Σ b_{ijk} a_{kuvw} a_{wabc} = 1/6",
        "Σ b_{ijk} a_{iuvw} a_{iabc} = 1/3",
        "† Σ b_{ijk} a_{iabc} a_{juvw} = 1/3",
        "† Σ b_{ijk} a_{iabc} a_{kuvw} = 1/3",
        "Σ b_{ijk} a_{juvw} a_{jabc} = 1/3",
        "† Σ b_{ijk} a_{jabc} a_{kuvw} = 1/3",
        "Σ b_{ijk} a_{kuvw} a_{kabc} = 1/3",
    ]
    .iter()
    .map(|s| SumPattern::parse(s))
    .collect()
}

/// Order-1..3 elementary-weight patterns in the classic tabular layout,
/// paired with their densities.
pub fn low_order_table_two_partitions() -> Vec<(SumPattern, u128)> {
    [
        ("Σ b_{ij} = 1", 1),
        ("Σ b_{ij} a_{ikl} = 1/2", 2),
        ("Σ b_{ij} a_{jkl} = 1/2", 2),
        ("Σ b_{ij} a_{ikl} a_{iuv} = 1/3", 3),
        ("Σ b_{ij} a_{ikl} a_{juv} = 1/3", 3),
        ("Σ b_{ij} a_{jkl} a_{juv} = 1/3", 3),
        ("Σ b_{ij} a_{ikl} a_{kuv} = 1/6", 6),
        ("Σ b_{ij} a_{ikl} a_{luv} = 1/6", 6),
        ("Σ b_{ij} a_{jkl} a_{kuv} = 1/6", 6),
        ("Σ b_{ij} a_{jkl} a_{luv} = 1/6", 6),
    ]
    .iter()
    .map(|&(s, g)| (SumPattern::parse(s), g))
    .collect()
}

const PICARD_TOL: f64 = 1e-14;
const PICARD_MAX: usize = 2000;

/// Independent classical RK step, stages solved by Picard iteration.
pub fn rk_step(rk: &RkTableau, f: &dyn Fn(&[f64]) -> Vec<f64>, y: &[f64], h: f64) -> Vec<f64> {
    let s = rk.stages();
    let d = y.len();
    let mut stages = vec![y.to_vec(); s];
    for _ in 0..PICARD_MAX {
        let fs: Vec<Vec<f64>> = stages.iter().map(|ys| f(ys)).collect();
        let mut next = vec![y.to_vec(); s];
        let mut delta = 0.0f64;
        for i in 0..s {
            for j in 0..s {
                let aij = rk.a_at(i, j);
                if aij != 0.0 {
                    for k in 0..d {
                        next[i][k] += h * aij * fs[j][k];
                    }
                }
            }
            for k in 0..d {
                delta = delta.max((next[i][k] - stages[i][k]).abs());
            }
        }
        stages = next;
        if delta <= PICARD_TOL {
            break;
        }
    }
    let fs: Vec<Vec<f64>> = stages.iter().map(|ys| f(ys)).collect();
    let mut out = y.to_vec();
    for i in 0..s {
        for k in 0..d {
            out[k] += h * rk.b()[i] * fs[i][k];
        }
    }
    out
}

/// Independent additive two-component RK step.
pub fn ark_step(
    pair: &ArkPair,
    f1: &dyn Fn(&[f64]) -> Vec<f64>,
    f2: &dyn Fn(&[f64]) -> Vec<f64>,
    y: &[f64],
    h: f64,
) -> Vec<f64> {
    let s = pair.stages();
    let d = y.len();
    let mut stages = vec![y.to_vec(); s];
    for _ in 0..PICARD_MAX {
        let f1s: Vec<Vec<f64>> = stages.iter().map(|ys| f1(ys)).collect();
        let f2s: Vec<Vec<f64>> = stages.iter().map(|ys| f2(ys)).collect();
        let mut next = vec![y.to_vec(); s];
        let mut delta = 0.0f64;
        for i in 0..s {
            for j in 0..s {
                let a1 = pair.first().a_at(i, j);
                let a2 = pair.second().a_at(i, j);
                for k in 0..d {
                    next[i][k] += h * (a1 * f1s[j][k] + a2 * f2s[j][k]);
                }
            }
            for k in 0..d {
                delta = delta.max((next[i][k] - stages[i][k]).abs());
            }
        }
        stages = next;
        if delta <= PICARD_TOL {
            break;
        }
    }
    let f1s: Vec<Vec<f64>> = stages.iter().map(|ys| f1(ys)).collect();
    let f2s: Vec<Vec<f64>> = stages.iter().map(|ys| f2(ys)).collect();
    let mut out = y.to_vec();
    for i in 0..s {
        for k in 0..d {
            out[k] += h * (pair.first().b()[i] * f1s[i][k] + pair.second().b()[i] * f2s[i][k]);
        }
    }
    out
}

/// Weight of a non-color-branching tree computed from an underlying pair.
/// Each node's out-edge color selects the component tableau used for its
/// summation index; leaves collapse to abscissae. Independent of the tensor
/// contraction route.
pub fn ark_weight_of_tree(pair: &ArkPair, tree: &ColoredTree) -> f64 {
    assert!(!tree.is_color_branching());
    let canon = tree.canonicalize();
    let s = pair.stages();
    let children = canon.root_children();
    if children.is_empty() {
        return pair.first().b().iter().sum();
    }
    let root_out_color = children[0].1;
    let b = pair.component(root_out_color as usize + 1).b();
    let mut total = 0.0;
    for i in 0..s {
        let mut prod = b[i];
        for (sub, _) in &children {
            prod *= ark_subtree_weight(pair, sub, i);
        }
        total += prod;
    }
    total
}

/// `R(t, x)`: the summed factor block of subtree `t` whose root's `a` factor
/// has row component `x`.
fn ark_subtree_weight(pair: &ArkPair, tree: &ColoredTree, x: usize) -> f64 {
    let s = pair.stages();
    let children = tree.root_children();
    if children.is_empty() {
        // Full marginal of the leaf's a factor: the abscissa at row x.
        return pair.c()[x];
    }
    let out_color = children[0].1;
    let a = pair.component(out_color as usize + 1);
    let mut total = 0.0;
    for j in 0..s {
        let mut prod = a.a_at(x, j);
        for (sub, _) in &children {
            prod *= ark_subtree_weight(pair, sub, j);
        }
        total += prod;
    }
    total
}

pub fn rel_dev(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
