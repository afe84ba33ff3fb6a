//! Canonical problems and experiment drivers: the Lotka-Volterra partition,
//! an optional viscous Burgers discretization, convergence studies, one-step
//! coupling scans, and witness systems that make a single tree's elementary
//! differential visible in one solution component.

use crate::conditions::elementary_weight;
use crate::error::{Error, Result};
use crate::integrator::{
    embedded_diff, integrate, step, FnOde, PartitionedOde, StageSolverConfig, Trajectory,
};
use crate::tableau::{method1, method2, NprkTableau};
use crate::tree::ColoredTree;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::PathBuf;

/// Lotka-Volterra with tunable coupling strength:
/// `du/dt = u - alpha u v`, `dv/dt = v + alpha u v`, nonlinearly partitioned
/// as `F((u1,v1),(u2,v2)) = (u2 - alpha u1 v2, v1 + alpha u2 v1)`.
#[derive(Clone, Copy, Debug)]
pub struct LotkaVolterra {
    pub alpha: f64,
}

impl PartitionedOde for LotkaVolterra {
    fn dim(&self) -> usize {
        2
    }

    fn arity(&self) -> usize {
        2
    }

    fn eval(&self, args: &[&[f64]], out: &mut [f64]) {
        let (x, y) = (args[0], args[1]);
        out[0] = y[0] - self.alpha * x[0] * y[1];
        out[1] = x[1] + self.alpha * y[0] * x[1];
    }

    fn description(&self) -> String {
        format!("Lotka-Volterra, alpha = {}", self.alpha)
    }
}

/// The nonlinearly partitioned Lotka-Volterra problem.
pub fn lotka_volterra(alpha: f64) -> LotkaVolterra {
    LotkaVolterra { alpha }
}

/// Periodic finite-difference viscous Burgers partition
/// `F(u, v) = epsilon D u + diag(v) A u` on the unit interval with `n` cells:
/// `D` the second-order Laplacian, `A` the second-order first difference.
#[derive(Clone, Debug)]
pub struct Burgers {
    pub epsilon: f64,
    pub n_cells: usize,
}

impl Burgers {
    fn dx(&self) -> f64 {
        1.0 / self.n_cells as f64
    }
}

impl PartitionedOde for Burgers {
    fn dim(&self) -> usize {
        self.n_cells
    }

    fn arity(&self) -> usize {
        2
    }

    fn eval(&self, args: &[&[f64]], out: &mut [f64]) {
        let (u, v) = (args[0], args[1]);
        let n = self.n_cells;
        let dx = self.dx();
        for i in 0..n {
            let left = u[(i + n - 1) % n];
            let right = u[(i + 1) % n];
            let lap = (right - 2.0 * u[i] + left) / (dx * dx);
            let adv = (right - left) / (2.0 * dx);
            out[i] = self.epsilon * lap + v[i] * adv;
        }
    }

    fn description(&self) -> String {
        format!(
            "viscous Burgers, epsilon = {}, {} periodic cells",
            self.epsilon, self.n_cells
        )
    }
}

/// Builds the Burgers problem; requires `n_cells >= 8` and `epsilon >= 0`.
pub fn burgers(epsilon: f64, n_cells: usize) -> Result<Burgers> {
    if n_cells < 8 {
        return Err(Error::Validation(format!(
            "Burgers needs at least 8 cells, got {n_cells}"
        )));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::Validation(format!(
            "viscosity must be >= 0, got {epsilon}"
        )));
    }
    Ok(Burgers { epsilon, n_cells })
}

/// Least-squares fit of `ln y` against `ln x`.
/// Returns `(slope, slope standard error, residual standard error)`.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 3 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = ly.iter().sum::<f64>() / n as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let resid_se = (rss / (n as f64 - 2.0)).sqrt();
    let slope_se = resid_se / sxx.sqrt();
    Some((slope, slope_se, resid_se))
}

/// Result of a step-refinement study.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceResult {
    pub h_values: Vec<f64>,
    /// l1 errors against the reference at the final time.
    pub errors: Vec<f64>,
    /// Fitted log-log slope; `None` when the errors sit at roundoff and no
    /// fit is meaningful.
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    /// Residual standard error of the fit in log-log space.
    pub residual_stderr: Option<f64>,
}

impl ConvergenceResult {
    /// A fit is trustworthy when it exists and its residual standard error in
    /// log-log space stays below 0.1.
    pub fn fit_ok(&self) -> bool {
        matches!(self.residual_stderr, Some(r) if r < 0.1) && self.slope.is_some()
    }
}

/// Where the reference solution for a convergence study comes from.
pub enum Reference<'a> {
    /// Final state supplied directly.
    FinalState(Vec<f64>),
    /// Final state of a precomputed trajectory.
    Trajectory(&'a Trajectory),
    /// Integrate this tableau at this step size.
    Method { tableau: &'a NprkTableau, h: f64 },
}

/// Error floor below which a study refuses to fit a slope.
const ROUNDOFF_FLOOR: f64 = 1e-14;

/// Runs a step-refinement study: integrates at each `h`, measures the l1
/// error at `t_end` against the reference, and fits a log-log slope.
/// Requires at least four strictly decreasing step sizes spanning at least a
/// decade.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    t: &NprkTableau,
    ode: &dyn PartitionedOde,
    y0: &[f64],
    t0: f64,
    t_end: f64,
    h_values: &[f64],
    reference: Reference<'_>,
    cfg: &StageSolverConfig,
) -> Result<ConvergenceResult> {
    if h_values.len() < 4 {
        return Err(Error::Validation(format!(
            "need at least 4 step sizes, got {}",
            h_values.len()
        )));
    }
    if !h_values.windows(2).all(|w| w[1] < w[0]) {
        return Err(Error::Validation(
            "step sizes must be strictly decreasing".into(),
        ));
    }
    let span = h_values[0] / h_values[h_values.len() - 1];
    if span < 10.0 {
        return Err(Error::Validation(format!(
            "step sizes must span at least a decade, got factor {span:.2}"
        )));
    }

    let reference_state: Vec<f64> = match reference {
        Reference::FinalState(s) => s,
        Reference::Trajectory(tr) => tr.final_state().to_vec(),
        Reference::Method { tableau, h } => integrate(tableau, ode, y0, t0, t_end, h, cfg)?
            .final_state()
            .to_vec(),
    };

    let errors: Vec<f64> = h_values
        .par_iter()
        .map(|&h| -> Result<f64> {
            let traj = integrate(t, ode, y0, t0, t_end, h, cfg).map_err(|e| {
                Error::Validation(format!("integration failed at h = {h}: {e}"))
            })?;
            Ok(traj
                .final_state()
                .iter()
                .zip(&reference_state)
                .map(|(a, b)| (a - b).abs())
                .sum())
        })
        .collect::<Result<Vec<_>>>()?;

    let fit = if errors.iter().all(|e| *e > ROUNDOFF_FLOOR) {
        log_log_fit(h_values, &errors)
    } else {
        None
    };
    let (slope, slope_stderr, residual_stderr) = match fit {
        Some((s, se, re)) => (Some(s), Some(se), Some(re)),
        None => (None, None, None),
    };
    Ok(ConvergenceResult {
        h_values: h_values.to_vec(),
        errors,
        slope,
        slope_stderr,
        residual_stderr,
    })
}

/// One cell of a coupling scan.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CouplingPoint {
    pub alpha: f64,
    pub h: f64,
    pub estimate: f64,
}

/// Step sizes used by the default one-step coupling scan.
pub const COUPLING_H_VALUES: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Coupling-strength grid 0, 0.05, ..., 3.0.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=60).map(|k| k as f64 * 0.05).collect()
}

/// Takes one step of the embedded pair (diagonal- and dense-weight lifts of
/// the Lobatto pair) from `y0` for every `(alpha, h)` cell and records the l1
/// difference of the two updates. Cells run in parallel; rows are ordered by
/// the input grids.
pub fn coupling_scan(
    alpha_grid: &[f64],
    h_values: &[f64],
    y0: &[f64],
    cfg: &StageSolverConfig,
) -> Result<Vec<CouplingPoint>> {
    if alpha_grid.is_empty() || h_values.is_empty() {
        return Err(Error::Validation("coupling scan grids must be non-empty".into()));
    }
    let (m1, m2) = (method1(), method2());
    let cells: Vec<(f64, f64)> = alpha_grid
        .iter()
        .flat_map(|&alpha| h_values.iter().map(move |&h| (alpha, h)))
        .collect();
    cells
        .par_iter()
        .map(|&(alpha, h)| {
            let ode = lotka_volterra(alpha);
            let estimate = embedded_diff(&m1, &m2, &ode, y0, h, cfg)?;
            Ok(CouplingPoint { alpha, h, estimate })
        })
        .collect()
}

/// The triangular polynomial system that isolates one tree.
///
/// Node `k` of the canonical tree (depth-first order, `q` nodes) owns state
/// component `q - 1 - k`, so the root owns the last component and children
/// always reference lower components. The component owned by a node with
/// children `c_1..c_m` and edge colors `a_1..a_m` is
///
/// `F_comp(args) = (1 / prod mu!) * prod_i args[a_i][comp(c_i)]`,
///
/// where the `mu` count equal (subtree, color) children. The scaling makes
/// the tree's elementary differential have root component exactly 1 at the
/// origin, while every other tree's differential vanishes there.
#[derive(Clone, Debug)]
pub struct WitnessOde {
    arity: usize,
    /// Per component: normalization and (argument, component) factor pairs.
    terms: Vec<(f64, Vec<(usize, usize)>)>,
    tree: ColoredTree,
}

impl WitnessOde {
    pub fn tree(&self) -> &ColoredTree {
        &self.tree
    }
}

impl PartitionedOde for WitnessOde {
    fn dim(&self) -> usize {
        self.terms.len()
    }

    fn arity(&self) -> usize {
        self.arity
    }

    fn eval(&self, args: &[&[f64]], out: &mut [f64]) {
        for (comp, (norm, factors)) in self.terms.iter().enumerate() {
            let mut value = *norm;
            for &(arg, c) in factors {
                value *= args[arg][c];
            }
            out[comp] = value;
        }
    }

    fn description(&self) -> String {
        format!("witness system for {}", self.tree)
    }
}

/// Builds the witness system of a tree. Starting from the zero state, the
/// exact solution's root component is `alpha(tau) h^order / order!` and one
/// step of a tableau yields exactly
/// `alpha(tau) gamma(tau) Phi(tau) h^order / order!` in that component.
pub fn witness_ode(tree: &ColoredTree) -> WitnessOde {
    let canon = tree.canonicalize();
    let q = canon.order();
    let comp = |node: usize| q - 1 - node;
    let mut terms = vec![(1.0, Vec::new()); q];
    for node in 0..q {
        let children: Vec<(usize, u8)> = (node + 1..q)
            .filter(|&k| canon.parent(k) == Some(node))
            .map(|k| (k, canon.color_seq()[k]))
            .collect();
        let norm = 1.0 / canon.sibling_multiplicity_factor(node) as f64;
        let factors: Vec<(usize, usize)> = children
            .iter()
            .map(|&(k, color)| (color as usize, comp(k)))
            .collect();
        terms[comp(node)] = (norm, factors);
    }
    WitnessOde {
        arity: canon.num_colors(),
        terms,
        tree: canon,
    }
}

/// Step sizes used for Taylor-coefficient extraction: `2^-8 .. 2^-12`.
pub const WITNESS_H_VALUES: [f64; 5] = [
    0.00390625,
    0.001953125,
    0.0009765625,
    0.00048828125,
    0.000244140625,
];

/// Extracts the `h^order` coefficient of the root witness component after one
/// step of `t`, by a least-squares fit of `y_root(h)` against `h^order` over
/// [`WITNESS_H_VALUES`]. Stage systems are solved to near roundoff so the
/// tiny high-order components stay meaningful.
pub fn witness_taylor_coefficient(t: &NprkTableau, tree: &ColoredTree) -> Result<f64> {
    let ode = witness_ode(tree);
    let q = ode.dim();
    let y0 = vec![0.0; q];
    let cfg = StageSolverConfig {
        newton_tol: 1e-16,
        max_newton_iters: 60,
        ..Default::default()
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for &h in &WITNESS_H_VALUES {
        let y = step(t, &ode, &y0, h, &cfg)?;
        let hq = h.powi(q as i32);
        num += y[q - 1] * hq;
        den += hq * hq;
    }
    Ok(num / den)
}

/// Predicted witness coefficient `alpha gamma Phi / order!` for a tableau.
pub fn witness_prediction(t: &NprkTableau, tree: &ColoredTree) -> Result<f64> {
    let canon = tree.canonicalize();
    let phi = elementary_weight(t, &canon)?;
    let q = canon.order();
    let factorial: f64 = (1..=q as u128).product::<u128>() as f64;
    Ok(canon.symmetry() as f64 * canon.density() as f64 * phi / factorial)
}

/// Disk cache for expensive reference solutions, keyed by an explicit string
/// describing the run. Disabled when constructed without a directory.
pub struct ReferenceCache {
    dir: Option<PathBuf>,
}

#[derive(Serialize, serde::Deserialize)]
struct CacheEntry {
    key: String,
    state: Vec<f64>,
}

impl ReferenceCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        ReferenceCache { dir }
    }

    pub fn disabled() -> Self {
        ReferenceCache { dir: None }
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        let mut hasher = Sha256::new();
        hasher.update(key.as_bytes());
        let digest = hasher.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Some(dir.join(format!("{hex}.json")))
    }

    /// Returns the cached state for `key`, computing and storing it on miss.
    pub fn get_or_compute(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<Vec<f64>>,
    ) -> Result<Vec<f64>> {
        let path = match self.path_for(key) {
            Some(p) => p,
            None => return compute(),
        };
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(entry) = serde_json::from_str::<CacheEntry>(&text) {
                if entry.key == key {
                    return Ok(entry.state);
                }
            }
        }
        let state = compute()?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| {
                Error::Validation(format!("cannot create cache directory: {e}"))
            })?;
        }
        let entry = CacheEntry {
            key: key.to_string(),
            state: state.clone(),
        };
        std::fs::write(&path, serde_json::to_string(&entry).expect("serializable"))
            .map_err(|e| Error::Validation(format!("cannot write cache file: {e}")))?;
        Ok(state)
    }
}

/// The unpartitioned Lotka-Volterra right-hand side, for cross-checks.
pub fn lotka_volterra_unpartitioned(alpha: f64) -> impl Fn(&[f64]) -> Vec<f64> {
    move |y: &[f64]| vec![y[0] - alpha * y[0] * y[1], y[1] + alpha * y[0] * y[1]]
}

/// Convenience wrapper turning an unpartitioned `f` into a trivially
/// partitioned one-argument ODE.
pub fn unpartitioned<F: Fn(&[f64]) -> Vec<f64> + Sync>(
    dim: usize,
    f: F,
) -> FnOde<impl Fn(&[&[f64]], &mut [f64]) + Sync> {
    FnOde {
        dim,
        arity: 1,
        f: move |args: &[&[f64]], out: &mut [f64]| {
            out.copy_from_slice(&f(args[0]));
        },
        description: "unpartitioned ODE".into(),
    }
}
