//! Tableaux: classical RK, additive pairs, and NPRK coefficient tensors.
//!
//! An `s`-stage NPRK method with `M` partitions stores its coefficients as a
//! rank-`M+1` tensor `a` (shape `s^(M+1)`, first index slowest) and a rank-`M`
//! tensor `b` (shape `s^M`):
//!
//! ```text
//! Y_i   = y_n + h * sum a[i, j_1, ..., j_M] F(Y_{j_1}, ..., Y_{j_M})
//! y_new = y_n + h * sum b[j_1, ..., j_M]    F(Y_{j_1}, ..., Y_{j_M})
//! ```
//!
//! Summing out all child indices except the `r`-th recovers the `r`-th
//! underlying RK method; conversely an additive RK pair with shared abscissae
//! lifts to an NPRK tensor.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Absolute tolerance defining tableau-level equality of coefficients.
pub const TABLEAU_TOL: f64 = 1e-14;

/// A classical Butcher tableau with the row-sum abscissa convention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRk")]
pub struct RkTableau {
    s: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

#[derive(Deserialize)]
struct RawRk {
    s: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl TryFrom<RawRk> for RkTableau {
    type Error = Error;
    fn try_from(raw: RawRk) -> Result<Self> {
        RkTableau::new(raw.s, raw.a, raw.b, raw.c)
    }
}

impl RkTableau {
    /// Builds a tableau, checking shapes and the row-sum convention
    /// `c_i = sum_j a_ij` to within `1e-12`.
    pub fn new(s: usize, a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if s == 0 || a.len() != s * s || b.len() != s || c.len() != s {
            return Err(Error::Validation(format!(
                "RK tableau shape mismatch: s={s}, |a|={}, |b|={}, |c|={}",
                a.len(),
                b.len(),
                c.len()
            )));
        }
        for i in 0..s {
            let row: f64 = a[i * s..(i + 1) * s].iter().sum();
            if (row - c[i]).abs() > 1e-12 {
                return Err(Error::Validation(format!(
                    "row-sum convention violated at stage {i}: sum a = {row}, c = {}",
                    c[i]
                )));
            }
        }
        Ok(RkTableau { s, a, b, c })
    }

    /// Builds a tableau with `c` taken as the row sums of `a`.
    pub fn from_ab(s: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if s == 0 || a.len() != s * s || b.len() != s {
            return Err(Error::Validation(format!(
                "RK tableau shape mismatch: s={s}, |a|={}, |b|={}",
                a.len(),
                b.len()
            )));
        }
        let c = (0..s).map(|i| a[i * s..(i + 1) * s].iter().sum()).collect();
        Ok(RkTableau { s, a, b, c })
    }

    pub fn stages(&self) -> usize {
        self.s
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn a_at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.s + j]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn approx_eq(&self, other: &RkTableau, tol: f64) -> bool {
        self.s == other.s
            && iter_close(&self.a, &other.a, tol)
            && iter_close(&self.b, &other.b, tol)
            && iter_close(&self.c, &other.c, tol)
    }
}

fn iter_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// A pair of RK tableaux with equal stage counts and shared abscissae,
/// forming an additive method.
#[derive(Clone, Debug, PartialEq)]
pub struct ArkPair {
    first: RkTableau,
    second: RkTableau,
}

impl ArkPair {
    pub fn new(first: RkTableau, second: RkTableau) -> Result<Self> {
        if first.s != second.s {
            return Err(Error::Validation(format!(
                "ARK pair stage counts differ: {} vs {}",
                first.s, second.s
            )));
        }
        if !iter_close(&first.c, &second.c, TABLEAU_TOL) {
            return Err(Error::Validation(
                "ARK pair abscissae differ beyond 1e-14".into(),
            ));
        }
        Ok(ArkPair { first, second })
    }

    pub fn stages(&self) -> usize {
        self.first.s
    }

    pub fn first(&self) -> &RkTableau {
        &self.first
    }

    pub fn second(&self) -> &RkTableau {
        &self.second
    }

    /// The component for 1-based argument index `r` (1 or 2).
    pub fn component(&self, r: usize) -> &RkTableau {
        match r {
            1 => &self.first,
            2 => &self.second,
            _ => panic!("ARK pair component index must be 1 or 2, got {r}"),
        }
    }

    pub fn c(&self) -> &[f64] {
        &self.first.c
    }
}

/// JSON schema for [`ArkPair`]:
/// `{"s":3,"a1":[...],"b1":[...],"a2":[...],"b2":[...],"c":[...]}`.
#[derive(Serialize, Deserialize)]
struct RawArkPair {
    s: usize,
    a1: Vec<f64>,
    b1: Vec<f64>,
    a2: Vec<f64>,
    b2: Vec<f64>,
    c: Vec<f64>,
}

impl Serialize for ArkPair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawArkPair {
            s: self.stages(),
            a1: self.first.a.clone(),
            b1: self.first.b.clone(),
            a2: self.second.a.clone(),
            b2: self.second.b.clone(),
            c: self.first.c.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ArkPair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawArkPair::deserialize(d)?;
        let first = RkTableau::new(raw.s, raw.a1, raw.b1, raw.c.clone())
            .map_err(serde::de::Error::custom)?;
        let second =
            RkTableau::new(raw.s, raw.a2, raw.b2, raw.c).map_err(serde::de::Error::custom)?;
        ArkPair::new(first, second).map_err(serde::de::Error::custom)
    }
}

/// Coefficients of an `s`-stage NPRK method with `M` partitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNprk")]
pub struct NprkTableau {
    #[serde(rename = "M")]
    m: usize,
    s: usize,
    /// Rank-`M+1` tensor, length `s^(M+1)`, row-major with the stage index
    /// slowest.
    a: Vec<f64>,
    /// Rank-`M` tensor, length `s^M`, row-major.
    b: Vec<f64>,
}

#[derive(Deserialize)]
struct RawNprk {
    #[serde(rename = "M")]
    m: usize,
    s: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl TryFrom<RawNprk> for NprkTableau {
    type Error = Error;
    fn try_from(raw: RawNprk) -> Result<Self> {
        NprkTableau::new(raw.m, raw.s, raw.a, raw.b)
    }
}

impl NprkTableau {
    /// Builds a tableau, validating tensor shapes. Entry values are not
    /// checked here; see [`NprkTableau::validate`].
    pub fn new(m: usize, s: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if m == 0 || s == 0 {
            return Err(Error::Validation(format!(
                "NPRK tableau needs M >= 1 and s >= 1, got M={m}, s={s}"
            )));
        }
        let (a_len, b_len) = (s.pow(m as u32 + 1), s.pow(m as u32));
        if a.len() != a_len || b.len() != b_len {
            return Err(Error::Validation(format!(
                "NPRK tensor shape mismatch: expected |a|={a_len}, |b|={b_len}, \
                 got |a|={}, |b|={}",
                a.len(),
                b.len()
            )));
        }
        Ok(NprkTableau { m, s, a, b })
    }

    pub fn partitions(&self) -> usize {
        self.m
    }

    pub fn stages(&self) -> usize {
        self.s
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Flat offset of the child multi-index block for stage `i0`.
    pub fn a_row(&self, i0: usize) -> &[f64] {
        let block = self.b.len();
        &self.a[i0 * block..(i0 + 1) * block]
    }

    /// Entry `a[i0, children]` with `children.len() == M`.
    pub fn a_at(&self, i0: usize, children: &[usize]) -> f64 {
        self.a_row(i0)[flat_index(self.s, children)]
    }

    /// Entry `b[children]`.
    pub fn b_at(&self, children: &[usize]) -> f64 {
        self.b[flat_index(self.s, children)]
    }

    /// Abscissae: full row sums of `a` over all child indices. Every
    /// underlying method shares these by construction.
    pub fn c(&self) -> Vec<f64> {
        (0..self.s).map(|i| self.a_row(i).iter().sum()).collect()
    }

    /// Sum of all entries of `b` (the first-order condition target is 1).
    pub fn b_total(&self) -> f64 {
        self.b.iter().sum()
    }

    /// The `r`-th underlying RK method (1-based, `1 <= r <= M`), obtained by
    /// summing out every child index except the `r`-th.
    pub fn underlying_rk(&self, r: usize) -> RkTableau {
        assert!(
            r >= 1 && r <= self.m,
            "argument index {r} out of range 1..={}",
            self.m
        );
        let s = self.s;
        let mut a = vec![0.0; s * s];
        let mut b = vec![0.0; s];
        let block = self.b.len();
        // Stride of the r-th child index in the flat layout (last index fastest).
        let stride = s.pow((self.m - r) as u32);
        for flat in 0..block {
            let ir = (flat / stride) % s;
            b[ir] += self.b[flat];
            for i0 in 0..s {
                a[i0 * s + ir] += self.a[i0 * block + flat];
            }
        }
        RkTableau::from_ab(s, a, b).expect("marginal tableau shapes are consistent")
    }

    /// Extracts both underlying methods of a 2-partition tableau as a pair.
    pub fn underlying_ark(&self) -> Result<ArkPair> {
        if self.m != 2 {
            return Err(Error::Validation(format!(
                "underlying ARK pair requires M = 2, tableau has M = {}",
                self.m
            )));
        }
        ArkPair::new(self.underlying_rk(1), self.underlying_rk(2))
    }

    pub fn approx_eq(&self, other: &NprkTableau, tol: f64) -> bool {
        self.m == other.m
            && self.s == other.s
            && iter_close(&self.a, &other.a, tol)
            && iter_close(&self.b, &other.b, tol)
    }

    /// Runs the structural checks and returns a report; never fails.
    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();

        let bad_a = self.a.iter().position(|x| !x.is_finite());
        let bad_b = self.b.iter().position(|x| !x.is_finite());
        checks.push(Check {
            name: "finite entries".into(),
            passed: bad_a.is_none() && bad_b.is_none(),
            detail: match (bad_a, bad_b) {
                (Some(i), _) => format!("a has non-finite entry at flat index {i}"),
                (None, Some(i)) => format!("b has non-finite entry at flat index {i}"),
                _ => "all entries finite".into(),
            },
        });

        // The r-marginal abscissae all equal the full row sums; report the
        // worst floating-point deviation across marginals.
        let c = self.c();
        let mut max_dev: f64 = 0.0;
        if bad_a.is_none() {
            for r in 1..=self.m {
                let underlying = self.underlying_rk(r);
                for (marginal, full) in underlying.c().iter().zip(&c) {
                    max_dev = max_dev.max((marginal - full).abs());
                }
            }
        }
        checks.push(Check {
            name: "shared abscissae".into(),
            passed: bad_a.is_none() && max_dev <= TABLEAU_TOL,
            detail: format!("max deviation across marginals {max_dev:.3e}"),
        });

        let total = self.b_total();
        checks.push(Check {
            name: "first-order sum".into(),
            passed: (total - 1.0).abs() <= 1e-12,
            detail: format!("sum b = {total}"),
        });

        ValidationReport { checks }
    }
}

/// Flattens an `M`-digit base-`s` multi-index (last digit fastest).
pub fn flat_index(s: usize, digits: &[usize]) -> usize {
    digits.iter().fold(0, |acc, &d| {
        debug_assert!(d < s);
        acc * s + d
    })
}

/// Outcome of one structural check.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Findings from [`NprkTableau::validate`].
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// How an ARK pair's weights are lifted into the rank-2 tensor `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BWeightMode {
    /// `b_ij = b1_i / s + b2_j / s - 1 / s^2`; requires both weight vectors
    /// to sum to 1.
    Dense,
    /// `b_ij = b1_i delta_ij`; additionally requires `b1 == b2`.
    Diagonal,
}

/// Lifts an additive RK pair with shared abscissae into an NPRK tableau via
///
/// `a_ijk = a1_ij / s + a2_ik / s - c_i / s^2`
///
/// and the `b` lift selected by `mode`. The result's underlying methods
/// reproduce the input pair exactly.
pub fn ark_to_nprk(pair: &ArkPair, mode: BWeightMode) -> Result<NprkTableau> {
    let s = pair.stages();
    let sf = s as f64;
    let b1 = pair.first().b();
    let b2 = pair.second().b();
    let sum1: f64 = b1.iter().sum();
    let sum2: f64 = b2.iter().sum();
    if (sum1 - 1.0).abs() > 1e-12 || (sum2 - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!(
            "conversion requires first-order weights: sum b1 = {sum1}, sum b2 = {sum2}"
        )));
    }
    if mode == BWeightMode::Diagonal && !iter_close(b1, b2, 1e-12) {
        return Err(Error::Validation(
            "diagonal lift requires equal weight vectors b1 == b2".into(),
        ));
    }

    let c = pair.c();
    let mut a = vec![0.0; s * s * s];
    for i in 0..s {
        for j in 0..s {
            for k in 0..s {
                a[(i * s + j) * s + k] =
                    pair.first().a_at(i, j) / sf + pair.second().a_at(i, k) / sf - c[i] / (sf * sf);
            }
        }
    }
    let mut b = vec![0.0; s * s];
    match mode {
        BWeightMode::Dense => {
            for i in 0..s {
                for j in 0..s {
                    b[i * s + j] = b1[i] / sf + b2[j] / sf - 1.0 / (sf * sf);
                }
            }
        }
        BWeightMode::Diagonal => {
            for i in 0..s {
                b[i * s + i] = b1[i];
            }
        }
    }
    NprkTableau::new(2, s, a, b)
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 4] = [
    "lobatto3A3B",
    "method1",
    "method2",
    "nprk_euler_implicit_explicit",
];

/// A built-in method: either an NPRK tensor or an additive pair.
#[derive(Clone, Debug)]
pub enum Builtin {
    Tableau(NprkTableau),
    Pair(ArkPair),
}

impl Builtin {
    /// The NPRK tableau, converting a pair via the diagonal lift.
    pub fn into_tableau(self) -> Result<NprkTableau> {
        match self {
            Builtin::Tableau(t) => Ok(t),
            Builtin::Pair(p) => ark_to_nprk(&p, BWeightMode::Diagonal),
        }
    }
}

/// Looks up a built-in method by name.
pub fn builtin(name: &str) -> Result<Builtin> {
    match name {
        "lobatto3A3B" => Ok(Builtin::Pair(lobatto_iiia_iiib())),
        "method1" => Ok(Builtin::Tableau(method1())),
        "method2" => Ok(Builtin::Tableau(method2())),
        "nprk_euler_implicit_explicit" => Ok(Builtin::Tableau(nprk_euler_implicit_explicit())),
        _ => Err(Error::UnknownBuiltin {
            name: name.into(),
            available: BUILTIN_NAMES.join(", "),
        }),
    }
}

/// The 3-stage Lobatto IIIA / IIIB pair: a fourth-order additive method with
/// shared abscissae (0, 1/2, 1) and equal weights.
pub fn lobatto_iiia_iiib() -> ArkPair {
    let b = vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0];
    let c = vec![0.0, 0.5, 1.0];
    #[rustfmt::skip]
    let a1 = vec![
        0.0,        0.0,       0.0,
        5.0 / 24.0, 1.0 / 3.0, -1.0 / 24.0,
        1.0 / 6.0,  2.0 / 3.0, 1.0 / 6.0,
    ];
    #[rustfmt::skip]
    let a2 = vec![
        1.0 / 6.0, -1.0 / 6.0, 0.0,
        1.0 / 6.0, 1.0 / 3.0,  0.0,
        1.0 / 6.0, 5.0 / 6.0,  0.0,
    ];
    let first = RkTableau::new(3, a1, b.clone(), c.clone()).expect("IIIA coefficients");
    let second = RkTableau::new(3, a2, b, c).expect("IIIB coefficients");
    ArkPair::new(first, second).expect("shared abscissae")
}

/// Third-order NPRK method: Lobatto IIIA-IIIB tensor with diagonal weights.
pub fn method1() -> NprkTableau {
    ark_to_nprk(&lobatto_iiia_iiib(), BWeightMode::Diagonal).expect("built-in conversion")
}

/// Second-order NPRK method: Lobatto IIIA-IIIB tensor with dense weights.
pub fn method2() -> NprkTableau {
    ark_to_nprk(&lobatto_iiia_iiib(), BWeightMode::Dense).expect("built-in conversion")
}

/// First-order two-stage method solving `y_new = y_n + h F(y_new, y_n)`:
/// implicit in the first argument, explicit in the second.
pub fn nprk_euler_implicit_explicit() -> NprkTableau {
    let s = 2;
    let mut a = vec![0.0; s * s * s];
    let mut b = vec![0.0; s * s];
    // Stage 1 copies y_n; stage 2 couples (Y_2, Y_1): a[2, 2, 1] = b[2, 1] = 1.
    a[(s + 1) * s] = 1.0;
    b[s] = 1.0;
    NprkTableau::new(2, s, a, b).expect("shape is fixed")
}
