//! Edge-colored rooted trees.
//!
//! A tree of order `n` is stored as a level sequence (depth of each node in
//! depth-first order, root at level 1) together with a color sequence giving,
//! for every non-root node, the color of the edge connecting it to its
//! parent. Slot 0 of the color sequence belongs to the root; it is fixed to 0
//! and never read. Colors range over `0..M` where `M` is the number of
//! partitions.
//!
//! Two trees are equivalent when one can be turned into the other by
//! reordering sibling subtrees. Each equivalence class has a unique canonical
//! representative: the one whose interleaved `(level, color)` pair sequence is
//! lexicographically greatest over all sibling orderings.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

/// Default cap on the number of trees a single generation call may produce.
pub const DEFAULT_TREE_CAP: u128 = 10_000_000;

/// An edge-colored rooted tree with `num_colors` available edge colors.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTree")]
pub struct ColoredTree {
    level_seq: Vec<u8>,
    color_seq: Vec<u8>,
    num_colors: u8,
}

#[derive(Deserialize)]
struct RawTree {
    level_seq: Vec<u8>,
    color_seq: Vec<u8>,
    num_colors: u8,
}

impl TryFrom<RawTree> for ColoredTree {
    type Error = Error;

    fn try_from(raw: RawTree) -> Result<Self> {
        ColoredTree::new(raw.level_seq, raw.color_seq, raw.num_colors as usize)
    }
}

impl ColoredTree {
    /// Builds a tree from raw sequences, validating the level-sequence shape,
    /// the color range, and the root color convention.
    pub fn new(level_seq: Vec<u8>, color_seq: Vec<u8>, num_colors: usize) -> Result<Self> {
        if num_colors == 0 || num_colors > u8::MAX as usize {
            return Err(Error::Validation(format!(
                "num_colors must be in 1..=255, got {num_colors}"
            )));
        }
        if level_seq.is_empty() {
            return Err(Error::InvalidTree {
                reason: "empty level sequence".into(),
                index: 0,
            });
        }
        if level_seq[0] != 1 {
            return Err(Error::InvalidTree {
                reason: format!("root must have level 1, got {}", level_seq[0]),
                index: 0,
            });
        }
        for k in 1..level_seq.len() {
            if level_seq[k] < 2 || level_seq[k] > level_seq[k - 1] + 1 {
                return Err(Error::InvalidTree {
                    reason: format!(
                        "level {} cannot follow level {}",
                        level_seq[k],
                        level_seq[k - 1]
                    ),
                    index: k,
                });
            }
        }
        if color_seq.len() != level_seq.len() {
            return Err(Error::InvalidTree {
                reason: format!(
                    "color sequence length {} does not match level sequence length {}",
                    color_seq.len(),
                    level_seq.len()
                ),
                index: color_seq.len().min(level_seq.len()),
            });
        }
        if color_seq[0] != 0 {
            return Err(Error::InvalidTree {
                reason: format!("root color slot must be 0, got {}", color_seq[0]),
                index: 0,
            });
        }
        for (k, &c) in color_seq.iter().enumerate().skip(1) {
            if c as usize >= num_colors {
                return Err(Error::InvalidTree {
                    reason: format!("edge color {c} out of range 0..{num_colors}"),
                    index: k,
                });
            }
        }
        Ok(ColoredTree {
            level_seq,
            color_seq,
            num_colors: num_colors as u8,
        })
    }

    /// The single-node tree.
    pub fn single(num_colors: usize) -> Self {
        ColoredTree::new(vec![1], vec![0], num_colors).expect("single node is always valid")
    }

    /// Number of nodes.
    pub fn order(&self) -> usize {
        self.level_seq.len()
    }

    pub fn level_seq(&self) -> &[u8] {
        &self.level_seq
    }

    pub fn color_seq(&self) -> &[u8] {
        &self.color_seq
    }

    pub fn num_colors(&self) -> usize {
        self.num_colors as usize
    }

    /// Index of the parent of node `k`: the nearest previous node one level up.
    pub fn parent(&self, k: usize) -> Option<usize> {
        if k == 0 {
            return None;
        }
        (0..k)
            .rev()
            .find(|&p| self.level_seq[p] as usize + 1 == self.level_seq[k] as usize)
    }

    /// End (exclusive) of the DFS span of the subtree rooted at node `i`.
    fn subtree_end(&self, i: usize) -> usize {
        let base = self.level_seq[i];
        (i + 1..self.level_seq.len())
            .find(|&j| self.level_seq[j] <= base)
            .unwrap_or(self.level_seq.len())
    }

    /// DFS spans of the children of node `i`, paired with their edge colors.
    pub(crate) fn child_spans(&self, i: usize) -> Vec<(usize, usize, u8)> {
        let end = self.subtree_end(i);
        self.spans_between(i, end)
    }

    fn spans_between(&self, start: usize, end: usize) -> Vec<(usize, usize, u8)> {
        let child_level = self.level_seq[start] as usize + 1;
        let mut spans = Vec::new();
        let mut j = start + 1;
        while j < end {
            debug_assert_eq!(self.level_seq[j] as usize, child_level);
            let e = self.subtree_end(j);
            spans.push((j, e, self.color_seq[j]));
            j = e;
        }
        spans
    }

    /// The root's child subtrees as owned trees, paired with their edge colors.
    pub fn root_children(&self) -> Vec<(ColoredTree, u8)> {
        self.child_spans(0)
            .into_iter()
            .map(|(s, e, c)| (self.extract(s, e), c))
            .collect()
    }

    /// Extracts the subtree on the DFS span `[start, end)` as a standalone tree.
    fn extract(&self, start: usize, end: usize) -> ColoredTree {
        let base = self.level_seq[start] - 1;
        let mut level_seq = Vec::with_capacity(end - start);
        let mut color_seq = Vec::with_capacity(end - start);
        for k in start..end {
            level_seq.push(self.level_seq[k] - base);
            color_seq.push(self.color_seq[k]);
        }
        color_seq[0] = 0;
        ColoredTree {
            level_seq,
            color_seq,
            num_colors: self.num_colors,
        }
    }

    /// Interleaved `(level, color)` pair sequence of the subtree at `[start, end)`,
    /// recursively canonicalized. Levels are relative (subtree root at 1) and the
    /// first pair carries `edge_color`.
    fn canonical_pairs(&self, start: usize, end: usize, edge_color: u8) -> Vec<(u8, u8)> {
        let mut blocks: Vec<Vec<(u8, u8)>> = self
            .spans_between(start, end)
            .into_iter()
            .map(|(s, e, c)| self.canonical_pairs(s, e, c))
            .collect();
        blocks.sort_by(|a, b| b.cmp(a));
        let mut pairs = Vec::with_capacity(end - start);
        pairs.push((1, edge_color));
        for block in blocks {
            pairs.extend(block.into_iter().map(|(l, c)| (l + 1, c)));
        }
        pairs
    }

    /// Canonical representative of this tree's equivalence class.
    pub fn canonicalize(&self) -> ColoredTree {
        let pairs = self.canonical_pairs(0, self.order(), 0);
        let (level_seq, color_seq) = pairs.into_iter().unzip();
        ColoredTree {
            level_seq,
            color_seq,
            num_colors: self.num_colors,
        }
    }

    pub fn is_canonical(&self) -> bool {
        *self == self.canonicalize()
    }

    /// Density: the product of the subtree orders obtained by successively
    /// removing roots. Independent of edge colors.
    ///
    /// Panics on trees large enough to overflow `u128` (order ≳ 34); the
    /// generation cap keeps every realistic workload far below that.
    pub fn density(&self) -> u128 {
        self.density_span(0, self.order())
    }

    fn density_span(&self, start: usize, end: usize) -> u128 {
        let mut gamma = (end - start) as u128;
        for (s, e, _) in self.spans_between(start, end) {
            gamma = gamma
                .checked_mul(self.density_span(s, e))
                .expect("density overflows u128");
        }
        gamma
    }

    /// Symmetry factor: the size of this tree's equivalence class among the
    /// node-labeled, color-labeled expansion trees. Always a positive integer:
    ///
    /// `alpha(tau) = multinomial(|tau|-1; |tau_1|, ..., |tau_m|)
    ///               * alpha(tau_1) * ... * alpha(tau_m) / (mu_1! * ... * mu_j!)`
    ///
    /// where the `mu` count mutually equal child subtrees carrying the same
    /// edge color. Panics on astronomically large trees (u128 overflow).
    pub fn symmetry(&self) -> u128 {
        let canon = self.canonicalize();
        canon.symmetry_span(0, canon.order())
    }

    fn symmetry_span(&self, start: usize, end: usize) -> u128 {
        let children = self.spans_between(start, end);
        if children.is_empty() {
            return 1;
        }
        let mut alpha: u128 = 1;
        let mut remaining = (end - start - 1) as u128;
        for &(s, e, _) in &children {
            alpha = alpha
                .checked_mul(binomial(remaining, (e - s) as u128))
                .expect("symmetry overflows u128");
            remaining -= (e - s) as u128;
            alpha = alpha
                .checked_mul(self.symmetry_span(s, e))
                .expect("symmetry overflows u128");
        }
        alpha / equal_sibling_factor(self, &children)
    }

    /// Number of color-preserving automorphisms: the product over all nodes of
    /// the factorials of equal-(subtree, edge color) multiplicities.
    pub fn automorphisms(&self) -> u128 {
        let canon = self.canonicalize();
        canon.automorphisms_span(0, canon.order())
    }

    fn automorphisms_span(&self, start: usize, end: usize) -> u128 {
        let children = self.spans_between(start, end);
        let mut sigma = equal_sibling_factor(self, &children);
        for (s, e, _) in children {
            sigma = sigma
                .checked_mul(self.automorphisms_span(s, e))
                .expect("automorphisms overflows u128");
        }
        sigma
    }

    /// True when some node has at least two out-edges of different colors.
    pub fn is_color_branching(&self) -> bool {
        (0..self.order()).any(|i| {
            let children = self.child_spans(i);
            children.iter().any(|&(_, _, c)| c != children[0].2)
        })
    }

    /// Classifies the order condition this tree gives rise to.
    ///
    /// A single edge color throughout yields a condition on that color's
    /// underlying RK method; a color-branching tree yields a nonlinear
    /// coupling condition; anything else is a linearly separable coupling
    /// condition. The single-node tree counts as underlying (color 0).
    pub fn classify(&self) -> ConditionClass {
        let colors: Vec<u8> = self.color_seq[1..].to_vec();
        if colors.is_empty() {
            return ConditionClass::UnderlyingRk(0);
        }
        if colors.iter().all(|&c| c == colors[0]) {
            return ConditionClass::UnderlyingRk(colors[0]);
        }
        if self.is_color_branching() {
            ConditionClass::NonlinearCoupling
        } else {
            ConditionClass::LinearCoupling
        }
    }

    /// Compact text form, e.g. `L:1,2,2;C:0,0,1`.
    pub fn to_compact(&self) -> String {
        format!("{self}")
    }

    /// Product of the factorials of equal-(subtree, edge color) multiplicities
    /// among the children of node `i`.
    pub(crate) fn sibling_multiplicity_factor(&self, i: usize) -> u128 {
        equal_sibling_factor(self, &self.child_spans(i))
    }
}

/// Factorial product of the multiplicities of equal `(canonical subtree, edge
/// color)` pairs among `children`.
fn equal_sibling_factor(tree: &ColoredTree, children: &[(usize, usize, u8)]) -> u128 {
    let mut keys: Vec<Vec<(u8, u8)>> = children
        .iter()
        .map(|&(s, e, c)| tree.canonical_pairs(s, e, c))
        .collect();
    keys.sort();
    let mut factor: u128 = 1;
    let mut run = 1u128;
    for i in 1..keys.len() {
        if keys[i] == keys[i - 1] {
            run += 1;
            factor = factor.checked_mul(run).expect("sibling factor overflow");
        } else {
            run = 1;
        }
    }
    factor
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.checked_mul(n - i).expect("binomial overflows u128") / (i + 1);
    }
    c
}

impl Ord for ColoredTree {
    /// Canonical total order: compare the interleaved `(level, color)` pair
    /// sequences lexicographically (trees with more colors first compare by
    /// `num_colors`). Generation emits trees in descending order of this key.
    fn cmp(&self, other: &Self) -> Ordering {
        self.num_colors
            .cmp(&other.num_colors)
            .then_with(|| {
                let a = self.level_seq.iter().zip(&self.color_seq);
                let b = other.level_seq.iter().zip(&other.color_seq);
                a.cmp(b)
            })
    }
}

impl PartialOrd for ColoredTree {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ColoredTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |xs: &[u8]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(f, "L:{};C:{}", join(&self.level_seq), join(&self.color_seq))
    }
}

impl FromStr for ColoredTree {
    type Err = Error;

    /// Parses the compact form `L:1,2,2;C:0,0,1`. The number of colors is
    /// taken as `max(color) + 1` unless given explicitly via a trailing
    /// `;M:n` segment.
    fn from_str(s: &str) -> Result<Self> {
        let mut levels = None;
        let mut colors = None;
        let mut m = None;
        for part in s.split(';') {
            let (key, rest) = part
                .split_once(':')
                .ok_or_else(|| Error::Validation(format!("bad tree segment `{part}`")))?;
            let parse_list = |rest: &str| -> Result<Vec<u8>> {
                rest.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<u8>()
                            .map_err(|e| Error::Validation(format!("bad tree entry `{x}`: {e}")))
                    })
                    .collect()
            };
            match key.trim() {
                "L" => levels = Some(parse_list(rest)?),
                "C" => colors = Some(parse_list(rest)?),
                "M" => {
                    m = Some(rest.trim().parse::<usize>().map_err(|e| {
                        Error::Validation(format!("bad color count `{rest}`: {e}"))
                    })?)
                }
                other => {
                    return Err(Error::Validation(format!("unknown tree segment `{other}`")));
                }
            }
        }
        let levels = levels.ok_or_else(|| Error::Validation("missing L: segment".into()))?;
        let colors = colors.ok_or_else(|| Error::Validation("missing C: segment".into()))?;
        let m = m.unwrap_or_else(|| {
            colors.iter().copied().max().unwrap_or(0) as usize + 1
        });
        ColoredTree::new(levels, colors, m)
    }
}

/// Which kind of order condition a tree produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConditionClass {
    /// All edges share one color: a condition on that underlying RK method.
    UnderlyingRk(u8),
    /// Multiple colors but no color-branching node: linearly separable coupling.
    LinearCoupling,
    /// Contains a color-branching node: nonlinear coupling.
    NonlinearCoupling,
}

impl ConditionClass {
    /// Annotation used in rendered conditions: none, `*`, or `†`.
    pub fn tag(&self) -> &'static str {
        match self {
            ConditionClass::UnderlyingRk(_) => "",
            ConditionClass::LinearCoupling => "*",
            ConditionClass::NonlinearCoupling => "†",
        }
    }

    /// Short name used in JSON output.
    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionClass::UnderlyingRk(_) => "underlying",
            ConditionClass::LinearCoupling => "linear",
            ConditionClass::NonlinearCoupling => "nonlinear",
        }
    }
}

impl Serialize for ConditionClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Generates one canonical representative per equivalence class of
/// `num_colors`-edge-colored rooted trees of the given order, sorted in
/// descending canonical order. Uses [`DEFAULT_TREE_CAP`].
pub fn generate_trees(num_colors: usize, order: usize) -> Result<Vec<ColoredTree>> {
    generate_trees_capped(num_colors, order, DEFAULT_TREE_CAP)
}

/// [`generate_trees`] with an explicit cap on the number of trees produced.
pub fn generate_trees_capped(
    num_colors: usize,
    order: usize,
    cap: u128,
) -> Result<Vec<ColoredTree>> {
    validate_m_order(num_colors, order)?;
    let estimated = count_ark_conditions(num_colors, order)?;
    if estimated > cap {
        return Err(Error::BudgetExceeded { estimated, cap });
    }

    // memo[n] holds all canonical trees of order n + 1.
    let mut memo: Vec<Vec<ColoredTree>> = vec![vec![ColoredTree::single(num_colors)]];
    for n in 2..=order {
        // Rank every candidate child (subtree, color) pair: larger subtrees
        // first, then tree index, then color. Multisets of children are
        // enumerated as weakly increasing rank sequences, so each multiset of
        // child subtrees is assembled exactly once.
        let rank_base: Vec<usize> = {
            let mut bases = vec![0usize; n]; // bases[size], size in 1..n
            let mut acc = 0;
            for size in (1..n).rev() {
                bases[size] = acc;
                acc += memo[size - 1].len() * num_colors;
            }
            bases
        };
        let mut out = Vec::new();
        let mut chosen: Vec<(usize, usize, u8)> = Vec::new();
        pick_children(
            &memo, &rank_base, num_colors, n - 1, 0, &mut chosen, &mut out,
        );
        memo.push(out);
    }
    let mut trees = memo.pop().expect("memo is never empty");
    trees.sort_by(|a, b| b.cmp(a));
    debug_assert_eq!(trees.len() as u128, estimated);
    Ok(trees)
}

/// Chooses a multiset of `(subtree, color)` children with total order
/// `remaining`, as a weakly increasing sequence of ranks starting at
/// `min_rank`. Completed multisets are assembled and pushed onto `out`.
fn pick_children(
    memo: &[Vec<ColoredTree>],
    rank_base: &[usize],
    num_colors: usize,
    remaining: usize,
    min_rank: usize,
    chosen: &mut Vec<(usize, usize, u8)>,
    out: &mut Vec<ColoredTree>,
) {
    if remaining == 0 {
        out.push(assemble(memo, chosen));
        return;
    }
    for size in (1..=remaining).rev() {
        let pool = &memo[size - 1];
        let base = rank_base[size];
        let span = pool.len() * num_colors;
        let start = min_rank.saturating_sub(base);
        for flat in start..span {
            let (idx, color) = (flat / num_colors, flat % num_colors);
            chosen.push((size, idx, color as u8));
            pick_children(
                memo,
                rank_base,
                num_colors,
                remaining - size,
                base + flat,
                chosen,
                out,
            );
            chosen.pop();
        }
    }
}

/// Assembles the canonical tree whose root children are `chosen`.
fn assemble(memo: &[Vec<ColoredTree>], chosen: &[(usize, usize, u8)]) -> ColoredTree {
    let mut blocks: Vec<(Vec<u8>, Vec<u8>)> = chosen
        .iter()
        .map(|&(size, idx, color)| {
            let t = &memo[size - 1][idx];
            let mut colors = t.color_seq.clone();
            colors[0] = color;
            (t.level_seq.clone(), colors)
        })
        .collect();
    blocks.sort_by(|a, b| {
        let ka = a.0.iter().zip(&a.1);
        let kb = b.0.iter().zip(&b.1);
        kb.cmp(ka)
    });
    let order = 1 + chosen.iter().map(|&(size, _, _)| size).sum::<usize>();
    let mut level_seq = Vec::with_capacity(order);
    let mut color_seq = Vec::with_capacity(order);
    level_seq.push(1);
    color_seq.push(0);
    for (levels, colors) in blocks {
        level_seq.extend(levels.iter().map(|&l| l + 1));
        color_seq.extend(colors);
    }
    let num_colors = memo[0][0].num_colors;
    ColoredTree {
        level_seq,
        color_seq,
        num_colors,
    }
}

fn validate_m_order(num_colors: usize, order: usize) -> Result<()> {
    if num_colors == 0 {
        return Err(Error::Validation("partition count M must be >= 1".into()));
    }
    if num_colors > u8::MAX as usize {
        return Err(Error::Validation(format!(
            "partition count M = {num_colors} exceeds 255"
        )));
    }
    if order == 0 {
        return Err(Error::Validation("order must be >= 1".into()));
    }
    Ok(())
}

/// Number of order conditions at each order `i` for an additively partitioned
/// method with `M` components, divided by `M`: the coefficient `alpha^[M]_i`
/// of the generating function
///
/// `sum_i alpha_i x^(i-1) = prod_i (1 - x^i)^(-M alpha_i)`,
///
/// computed by the Euler-transform recurrence. Equals the number of
/// `M`-edge-colored rooted trees of order `i`.
pub fn count_ark_conditions(num_colors: usize, order: usize) -> Result<u128> {
    validate_m_order(num_colors, order)?;
    let m = num_colors as u128;
    let mut alpha: Vec<u128> = vec![1]; // alpha[i - 1] = alpha_i
    let mut d: Vec<u128> = vec![1]; // d[n] = alpha_{n + 1}
    let ovf = || Error::Overflow("count_ark_conditions");
    for n in 1..order {
        // g[k] = sum over divisors i of k of i * M * alpha_i, for k = 1..=n.
        let mut acc: u128 = 0;
        for k in 1..=n {
            let mut g: u128 = 0;
            for i in 1..=k {
                if k % i == 0 {
                    let term = (i as u128)
                        .checked_mul(m)
                        .and_then(|x| x.checked_mul(alpha[i - 1]))
                        .ok_or_else(ovf)?;
                    g = g.checked_add(term).ok_or_else(ovf)?;
                }
            }
            let term = g.checked_mul(d[n - k]).ok_or_else(ovf)?;
            acc = acc.checked_add(term).ok_or_else(ovf)?;
        }
        debug_assert_eq!(acc % n as u128, 0);
        let dn = acc / n as u128;
        d.push(dn);
        alpha.push(dn);
    }
    Ok(alpha[order - 1])
}

/// Per-order census of order conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionCounts {
    pub order: usize,
    /// Total number of conditions (= number of canonical trees).
    pub total: usize,
    /// Conditions not covered by the M underlying RK methods.
    pub coupling: usize,
    /// Single-colored trees. The order-1 tree counts once, not M times.
    pub underlying: usize,
    /// Multi-colored, non-color-branching trees.
    pub linear: usize,
    /// Color-branching trees.
    pub nonlinear: usize,
}

/// Counts conditions of one order by class, using [`DEFAULT_TREE_CAP`].
pub fn count_conditions(num_colors: usize, order: usize) -> Result<ConditionCounts> {
    count_conditions_capped(num_colors, order, DEFAULT_TREE_CAP)
}

/// [`count_conditions`] with an explicit generation cap.
pub fn count_conditions_capped(
    num_colors: usize,
    order: usize,
    cap: u128,
) -> Result<ConditionCounts> {
    let trees = generate_trees_capped(num_colors, order, cap)?;
    let mut counts = ConditionCounts {
        order,
        total: trees.len(),
        coupling: 0,
        underlying: 0,
        linear: 0,
        nonlinear: 0,
    };
    for t in &trees {
        match t.classify() {
            ConditionClass::UnderlyingRk(_) => counts.underlying += 1,
            ConditionClass::LinearCoupling => counts.linear += 1,
            ConditionClass::NonlinearCoupling => counts.nonlinear += 1,
        }
    }
    counts.coupling = counts.linear + counts.nonlinear;
    Ok(counts)
}
