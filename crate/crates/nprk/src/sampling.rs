//! Seeded random tableaux and trees for self-checks and randomized tests.

use crate::error::Result;
use crate::tableau::NprkTableau;
use crate::tree::{generate_trees, ColoredTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A deterministic generator from a seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random coefficient tensor pair. Entries are drawn from `[0.1, 1.1)` so
/// weights never cancel to zero and relative comparisons stay meaningful;
/// no order conditions are imposed.
pub fn random_tableau(rng: &mut impl Rng, m: usize, s: usize) -> NprkTableau {
    let a = (0..s.pow(m as u32 + 1))
        .map(|_| rng.gen_range(0.1..1.1))
        .collect();
    let b = (0..s.pow(m as u32))
        .map(|_| rng.gen_range(0.1..1.1))
        .collect();
    NprkTableau::new(m, s, a, b).expect("shapes are consistent")
}

/// A uniformly chosen canonical tree with `m` colors and order in
/// `1..=max_order`.
pub fn random_tree(rng: &mut impl Rng, m: usize, max_order: usize) -> Result<ColoredTree> {
    let order = rng.gen_range(1..=max_order);
    let trees = generate_trees(m, order)?;
    Ok(trees[rng.gen_range(0..trees.len())].clone())
}

/// One fast-versus-naive comparison sample.
#[derive(Clone, Debug)]
pub struct OracleSample {
    pub m: usize,
    pub s: usize,
    pub tree: ColoredTree,
    pub fast: f64,
    pub naive: f64,
    /// `|fast - naive| / max(1, |naive|)`.
    pub relative_deviation: f64,
}

/// Draws `samples` random `(tableau, tree)` pairs with `s <= 3`, `M <= 3`,
/// order `<= 4` and evaluates the elementary weight along both routes.
pub fn compare_weight_routes(seed: u64, samples: usize) -> Result<Vec<OracleSample>> {
    let mut rng = rng(seed);
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let m = rng.gen_range(1..=3);
        let s = rng.gen_range(1..=3);
        let tree = random_tree(&mut rng, m, 4)?;
        let tableau = random_tableau(&mut rng, m, s);
        let fast = crate::conditions::elementary_weight(&tableau, &tree)?;
        let naive = crate::conditions::elementary_weight_naive(&tableau, &tree)?;
        let relative_deviation = (fast - naive).abs() / naive.abs().max(1.0);
        out.push(OracleSample {
            m,
            s,
            tree,
            fast,
            naive,
            relative_deviation,
        });
    }
    Ok(out)
}
