//! Time stepping for partitioned initial value problems.
//!
//! A step advances `y' = F(y, ..., y)` with an NPRK tableau:
//!
//! ```text
//! Y_i   = y_n + h * sum_J a[i, J] F(Y_{J_1}, ..., Y_{J_M})
//! y_new = y_n + h * sum_J b[J]    F(Y_{J_1}, ..., Y_{J_M})
//! ```
//!
//! Stages are solved in index order when the tensor only references earlier
//! (or diagonal) stages, and as one coupled Newton system otherwise. Newton
//! uses forward-difference Jacobians with damping; an optional fixed-point
//! fallback covers the rare damping dead ends.

use crate::error::{Error, Result};
use crate::tableau::NprkTableau;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// An `M`-argument right-hand side `F(Y_1, ..., Y_M)` with
/// `F(y, ..., y) = f(y)`.
pub trait PartitionedOde: Sync {
    /// State dimension.
    fn dim(&self) -> usize;

    /// Number of arguments `M`.
    fn arity(&self) -> usize;

    /// Evaluates `F` into `out`; `args` holds `M` state slices and `out` has
    /// length [`PartitionedOde::dim`]. Must be re-entrant.
    fn eval(&self, args: &[&[f64]], out: &mut [f64]);

    fn description(&self) -> String {
        "partitioned ODE".into()
    }
}

/// A [`PartitionedOde`] built from a closure.
pub struct FnOde<F: Fn(&[&[f64]], &mut [f64]) + Sync> {
    pub dim: usize,
    pub arity: usize,
    pub f: F,
    pub description: String,
}

impl<F: Fn(&[&[f64]], &mut [f64]) + Sync> PartitionedOde for FnOde<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn arity(&self) -> usize {
        self.arity
    }

    fn eval(&self, args: &[&[f64]], out: &mut [f64]) {
        (self.f)(args, out)
    }

    fn description(&self) -> String {
        self.description.clone()
    }
}

/// Knobs for the implicit-stage solver.
#[derive(Clone, Copy, Debug)]
pub struct StageSolverConfig {
    /// Max-norm residual at which a stage system counts as solved.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Forward-difference step is `fd_epsilon * (1 + |x|_inf)`.
    pub fd_epsilon: f64,
    /// Fall back to fixed-point iteration when Newton stalls.
    pub fallback_fixed_point: bool,
    pub fixed_point_max_iters: usize,
}

impl Default for StageSolverConfig {
    fn default() -> Self {
        StageSolverConfig {
            newton_tol: 1e-12,
            max_newton_iters: 50,
            fd_epsilon: 1e-7,
            fallback_fixed_point: true,
            fixed_point_max_iters: 200,
        }
    }
}

/// Per-step solver effort.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct StepStats {
    pub newton_iterations: usize,
    pub fixed_point_iterations: usize,
    /// Max-norm stage residual at acceptance.
    pub residual: f64,
}

impl StepStats {
    fn merge(&mut self, other: StepStats) {
        self.newton_iterations += other.newton_iterations;
        self.fixed_point_iterations += other.fixed_point_iterations;
        self.residual = self.residual.max(other.residual);
    }
}

/// A solved trajectory: `states[k]` is the state at `times[k]`.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// One entry per step taken (length `times.len() - 1`).
    pub stats: Vec<StepStats>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least y0")
    }

    /// CSV with header `t,y0,y1,...`, one row per stored state.
    pub fn to_csv(&self) -> String {
        let dim = self.states[0].len();
        let mut out = String::from("t");
        for i in 0..dim {
            out.push_str(&format!(",y{i}"));
        }
        out.push('\n');
        for (t, y) in self.times.iter().zip(&self.states) {
            out.push_str(&t.to_string());
            for v in y {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// How the `a` tensor couples the stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageCoupling {
    /// Every stage references only strictly earlier stages.
    Explicit,
    /// Stages reference earlier stages and themselves.
    SequentiallyImplicit,
    /// Some stage references a later stage.
    FullyCoupled,
}

/// Detects the coupling structure from the sparsity of `a`.
pub fn stage_coupling(t: &NprkTableau) -> StageCoupling {
    let s = t.stages();
    let m = t.partitions();
    let block = t.b().len();
    let mut coupling = StageCoupling::Explicit;
    for i0 in 0..s {
        let row = t.a_row(i0);
        for (flat, &v) in row.iter().enumerate().take(block) {
            if v == 0.0 {
                continue;
            }
            let mut rest = flat;
            for _ in 0..m {
                let j = rest % t.stages();
                rest /= t.stages();
                if j > i0 {
                    return StageCoupling::FullyCoupled;
                }
                if j == i0 {
                    coupling = StageCoupling::SequentiallyImplicit;
                }
            }
        }
    }
    coupling
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

fn check_setup(t: &NprkTableau, ode: &dyn PartitionedOde, y: &[f64], h: f64) -> Result<()> {
    if ode.arity() != t.partitions() {
        return Err(Error::Validation(format!(
            "ODE takes {} arguments but tableau has M = {}",
            ode.arity(),
            t.partitions()
        )));
    }
    if y.len() != ode.dim() {
        return Err(Error::Validation(format!(
            "state dimension {} does not match ODE dimension {}",
            y.len(),
            ode.dim()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::Validation(format!("step size must be > 0, got {h}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "initial state".into(),
        });
    }
    Ok(())
}

/// Evaluates `F` for every child multi-index, reading stage `j`'s value
/// through `stage`. `out[flat]` is `F(Y_{J_1}, ..., Y_{J_M})`.
fn eval_couplings<'a>(
    t: &NprkTableau,
    ode: &dyn PartitionedOde,
    stage: impl Fn(usize) -> &'a [f64],
    out: &mut [Vec<f64>],
) {
    let s = t.stages();
    let m = t.partitions();
    let mut digits = vec![0usize; m];
    let mut args: Vec<&[f64]> = Vec::with_capacity(m);
    for (flat, f) in out.iter_mut().enumerate() {
        let mut rest = flat;
        for d in digits.iter_mut().rev() {
            *d = rest % s;
            rest /= s;
        }
        args.clear();
        for &d in digits.iter() {
            args.push(stage(d));
        }
        ode.eval(&args, f);
    }
}

/// Newton with forward-difference Jacobian and residual-halving damping.
/// `residual` writes the residual of `x` into its output slice.
fn newton(
    mut residual: impl FnMut(&[f64], &mut [f64]) -> Result<()>,
    x: &mut [f64],
    cfg: &StageSolverConfig,
    context: &str,
) -> Result<StepStats> {
    let dim = x.len();
    let mut stats = StepStats::default();
    let mut r = vec![0.0; dim];
    let mut r_try = vec![0.0; dim];
    residual(x, &mut r)?;
    let mut rn = inf_norm(&r);

    while rn > cfg.newton_tol && stats.newton_iterations < cfg.max_newton_iters {
        stats.newton_iterations += 1;
        let eps = cfg.fd_epsilon * (1.0 + inf_norm(x));
        let mut jac = DMatrix::zeros(dim, dim);
        let mut x_pert = x.to_vec();
        for col in 0..dim {
            x_pert[col] += eps;
            residual(&x_pert, &mut r_try)?;
            for row in 0..dim {
                jac[(row, col)] = (r_try[row] - r[row]) / eps;
            }
            x_pert[col] = x[col];
        }
        let rhs = DVector::from_column_slice(&r);
        let delta = match jac.lu().solve(&rhs) {
            Some(d) => d,
            None => break, // singular Jacobian: hand off to fixed point
        };

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=8 {
            for i in 0..dim {
                x_pert[i] = x[i] - lambda * delta[i];
            }
            residual(&x_pert, &mut r_try)?;
            let rn_try = inf_norm(&r_try);
            if rn_try < rn {
                x.copy_from_slice(&x_pert);
                std::mem::swap(&mut r, &mut r_try);
                rn = rn_try;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    if rn <= cfg.newton_tol {
        stats.residual = rn;
        return Ok(stats);
    }

    if cfg.fallback_fixed_point {
        // x <- x - R(x) is the Picard map for stage equations.
        let mut x_next = x.to_vec();
        while stats.fixed_point_iterations < cfg.fixed_point_max_iters {
            stats.fixed_point_iterations += 1;
            for i in 0..dim {
                x_next[i] = x[i] - r[i];
            }
            residual(&x_next, &mut r_try)?;
            let rn_try = inf_norm(&r_try);
            x.copy_from_slice(&x_next);
            std::mem::swap(&mut r, &mut r_try);
            rn = rn_try;
            if rn <= cfg.newton_tol {
                stats.residual = rn;
                return Ok(stats);
            }
        }
    }

    Err(Error::SolverFailed {
        residual: rn,
        iterations: stats.newton_iterations + stats.fixed_point_iterations,
        context: context.into(),
    })
}

/// Solves the stage equations, returning one state vector per stage.
pub fn solve_stages(
    t: &NprkTableau,
    ode: &dyn PartitionedOde,
    y: &[f64],
    h: f64,
    cfg: &StageSolverConfig,
) -> Result<(Vec<Vec<f64>>, StepStats)> {
    check_setup(t, ode, y, h)?;
    let s = t.stages();
    let d = ode.dim();
    let block = t.b().len();

    match stage_coupling(t) {
        StageCoupling::Explicit | StageCoupling::SequentiallyImplicit => {
            let mut stages: Vec<Vec<f64>> = vec![y.to_vec(); s];
            let mut stats = StepStats::default();
            let mut couplings = vec![vec![0.0; d]; block];
            for i0 in 0..s {
                let row = t.a_row(i0).to_vec();
                let self_coupled = row.iter().enumerate().any(|(flat, &v)| {
                    v != 0.0 && multi_index_contains(flat, s, t.partitions(), i0)
                });
                if !self_coupled {
                    // Direct evaluation from already-solved stages.
                    eval_couplings(t, ode, |j| stages[j].as_slice(), &mut couplings);
                    let mut next = y.to_vec();
                    for (flat, &aij) in row.iter().enumerate() {
                        if aij != 0.0 {
                            for k in 0..d {
                                next[k] += h * aij * couplings[flat][k];
                            }
                        }
                    }
                    ensure_finite(&next, || format!("stage {}", i0 + 1))?;
                    stages[i0] = next;
                } else {
                    let solved = stages.clone();
                    let mut x = y.to_vec();
                    let residual = |x: &[f64], out: &mut [f64]| -> Result<()> {
                        let mut local = vec![vec![0.0; d]; block];
                        eval_couplings(
                            t,
                            ode,
                            |j| if j == i0 { x } else { solved[j].as_slice() },
                            &mut local,
                        );
                        for k in 0..d {
                            out[k] = x[k] - y[k];
                        }
                        for (flat, &aij) in row.iter().enumerate() {
                            if aij != 0.0 {
                                for k in 0..d {
                                    out[k] -= h * aij * local[flat][k];
                                }
                            }
                        }
                        ensure_finite(out, || format!("stage {} residual", i0 + 1))
                    };
                    let st = newton(residual, &mut x, cfg, &format!("stage {}", i0 + 1))?;
                    stats.merge(st);
                    stages[i0] = x;
                }
            }
            Ok((stages, stats))
        }
        StageCoupling::FullyCoupled => {
            let mut z = vec![0.0; s * d];
            for i0 in 0..s {
                z[i0 * d..(i0 + 1) * d].copy_from_slice(y);
            }
            let residual = |z: &[f64], out: &mut [f64]| -> Result<()> {
                let mut local = vec![vec![0.0; d]; block];
                eval_couplings(t, ode, |j| &z[j * d..(j + 1) * d], &mut local);
                for i0 in 0..s {
                    let row = t.a_row(i0);
                    for k in 0..d {
                        out[i0 * d + k] = z[i0 * d + k] - y[k];
                    }
                    for (flat, &aij) in row.iter().enumerate() {
                        if aij != 0.0 {
                            for k in 0..d {
                                out[i0 * d + k] -= h * aij * local[flat][k];
                            }
                        }
                    }
                }
                ensure_finite(out, || "coupled stage residual".to_string())
            };
            let stats = newton(residual, &mut z, cfg, "coupled stage system")?;
            let stages = (0..s).map(|i0| z[i0 * d..(i0 + 1) * d].to_vec()).collect();
            Ok((stages, stats))
        }
    }
}

fn multi_index_contains(flat: usize, s: usize, m: usize, stage: usize) -> bool {
    let mut rest = flat;
    for _ in 0..m {
        if rest % s == stage {
            return true;
        }
        rest /= s;
    }
    false
}

fn ensure_finite(values: &[f64], context: impl Fn() -> String) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        Err(Error::NonFinite { context: context() })
    } else {
        Ok(())
    }
}

/// Max-norm residual of the stage equations at the given stage values.
pub fn stage_equation_residual(
    t: &NprkTableau,
    ode: &dyn PartitionedOde,
    y: &[f64],
    h: f64,
    stages: &[Vec<f64>],
) -> f64 {
    let d = ode.dim();
    let block = t.b().len();
    let mut couplings = vec![vec![0.0; d]; block];
    eval_couplings(t, ode, |j| stages[j].as_slice(), &mut couplings);
    let mut worst = 0.0f64;
    for (i0, stage) in stages.iter().enumerate().take(t.stages()) {
        let row = t.a_row(i0);
        for k in 0..d {
            let mut r = stage[k] - y[k];
            for (flat, &aij) in row.iter().enumerate() {
                if aij != 0.0 {
                    r -= h * aij * couplings[flat][k];
                }
            }
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Contracts coupling evaluations against a rank-`M` weight tensor.
fn contract_b(
    t: &NprkTableau,
    ode: &dyn PartitionedOde,
    weights: &[f64],
    stages: &[Vec<f64>],
    h: f64,
) -> Vec<f64> {
    let d = ode.dim();
    let block = t.b().len();
    let mut couplings = vec![vec![0.0; d]; block];
    eval_couplings(t, ode, |j| stages[j].as_slice(), &mut couplings);
    let mut out = vec![0.0; d];
    for (flat, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            for k in 0..d {
                out[k] += h * w * couplings[flat][k];
            }
        }
    }
    out
}

/// One step, returning the increment `h * sum b[J] F(...)` separately.
fn step_increment(
    t: &NprkTableau,
    ode: &dyn PartitionedOde,
    y: &[f64],
    h: f64,
    cfg: &StageSolverConfig,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, StepStats)> {
    let (stages, stats) = solve_stages(t, ode, y, h, cfg)?;
    let incr = contract_b(t, ode, t.b(), &stages, h);
    ensure_finite(&incr, || "step update".to_string())?;
    Ok((incr, stages, stats))
}

/// One step with explicit stage output.
pub fn step_with_stages(
    t: &NprkTableau,
    ode: &dyn PartitionedOde,
    y: &[f64],
    h: f64,
    cfg: &StageSolverConfig,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, StepStats)> {
    let (incr, stages, stats) = step_increment(t, ode, y, h, cfg)?;
    let next: Vec<f64> = y.iter().zip(&incr).map(|(a, b)| a + b).collect();
    Ok((next, stages, stats))
}

/// Advances one step of size `h` from `y`.
pub fn step(
    t: &NprkTableau,
    ode: &dyn PartitionedOde,
    y: &[f64],
    h: f64,
    cfg: &StageSolverConfig,
) -> Result<Vec<f64>> {
    step_with_stages(t, ode, y, h, cfg).map(|(y_next, _, _)| y_next)
}

/// Integrates from `t0` to `t_end` with constant step `h`; the final step is
/// shortened to land exactly on `t_end`.
pub fn integrate(
    t: &NprkTableau,
    ode: &dyn PartitionedOde,
    y0: &[f64],
    t0: f64,
    t_end: f64,
    h: f64,
    cfg: &StageSolverConfig,
) -> Result<Trajectory> {
    if !(t_end > t0) {
        return Err(Error::Validation(format!(
            "t_end ({t_end}) must exceed t0 ({t0})"
        )));
    }
    check_setup(t, ode, y0, h)?;
    let dim = y0.len();
    let mut times = vec![t0];
    let mut states = vec![y0.to_vec()];
    let mut stats = Vec::new();
    let mut now = t0;
    let mut k = 0u64;
    // Compensated state accumulation: `comp` carries the rounding residue of
    // each `y += increment`, so long runs do not random-walk at the ulp level.
    let mut y = y0.to_vec();
    let mut comp = vec![0.0; dim];
    while now < t_end {
        let remaining = t_end - now;
        // Absorb roundoff: a final sliver below h * 1e-12 merges into the
        // last full step.
        let this_h = if remaining <= h * (1.0 + 1e-12) {
            remaining
        } else {
            h
        };
        let (incr, _, st) = step_increment(t, ode, &y, this_h, cfg)?;
        for i in 0..dim {
            let a = y[i];
            comp[i] += incr[i];
            y[i] = a + comp[i];
            comp[i] += a - y[i];
        }
        states.push(y.clone());
        stats.push(st);
        k += 1;
        now = if this_h == remaining {
            t_end
        } else {
            t0 + k as f64 * h
        };
        times.push(now);
    }
    Ok(Trajectory {
        times,
        states,
        stats,
    })
}

/// One-step difference of two tableaux sharing the same `a` tensor, in the
/// l1 norm: the embedded estimate of nonlinear coupling strength.
///
/// Both updates reuse one stage solution, and the difference is contracted
/// with `b - b~` directly, so cancellation between the two O(1) updates never
/// touches floating point. Two polish iterations push the stage residual to
/// its roundoff floor first; the estimate scales like `h^3` and must stay
/// meaningful well below the solver tolerance.
pub fn embedded_diff(
    t1: &NprkTableau,
    t2: &NprkTableau,
    ode: &dyn PartitionedOde,
    y: &[f64],
    h: f64,
    cfg: &StageSolverConfig,
) -> Result<f64> {
    if t1.partitions() != t2.partitions() || t1.stages() != t2.stages() {
        return Err(Error::Validation(
            "embedded pair must share stage and partition counts".into(),
        ));
    }
    if t1
        .a()
        .iter()
        .zip(t2.a())
        .any(|(x, y)| (x - y).abs() > 1e-14)
    {
        return Err(Error::Validation(
            "embedded pair must share the a tensor to 1e-14".into(),
        ));
    }
    let (mut stages, _) = solve_stages(t1, ode, y, h, cfg)?;
    polish_stages(t1, ode, y, h, cfg, &mut stages, 2)?;
    let delta_b: Vec<f64> = t1.b().iter().zip(t2.b()).map(|(x, y)| x - y).collect();
    let diff = contract_b(t1, ode, &delta_b, &stages, h);
    Ok(l1_norm(&diff))
}

/// Runs up to `rounds` extra coupled Newton iterations, keeping each update
/// only when it lowers the stage residual.
fn polish_stages(
    t: &NprkTableau,
    ode: &dyn PartitionedOde,
    y: &[f64],
    h: f64,
    cfg: &StageSolverConfig,
    stages: &mut [Vec<f64>],
    rounds: usize,
) -> Result<()> {
    let s = t.stages();
    let d = ode.dim();
    let block = t.b().len();
    let mut z: Vec<f64> = stages.iter().flatten().copied().collect();
    let residual = |z: &[f64], out: &mut [f64]| -> Result<()> {
        let mut local = vec![vec![0.0; d]; block];
        eval_couplings(t, ode, |j| &z[j * d..(j + 1) * d], &mut local);
        for i0 in 0..s {
            let row = t.a_row(i0);
            for k in 0..d {
                out[i0 * d + k] = z[i0 * d + k] - y[k];
            }
            for (flat, &aij) in row.iter().enumerate() {
                if aij != 0.0 {
                    for k in 0..d {
                        out[i0 * d + k] -= h * aij * local[flat][k];
                    }
                }
            }
        }
        Ok(())
    };
    let polish_cfg = StageSolverConfig {
        newton_tol: 0.0,
        max_newton_iters: rounds,
        fallback_fixed_point: false,
        ..*cfg
    };
    // Tolerance zero makes newton() run exactly `rounds` improving steps and
    // then report failure; the improved iterate is what we keep.
    match newton(residual, &mut z, &polish_cfg, "polish") {
        Ok(_) | Err(Error::SolverFailed { .. }) => {}
        Err(e) => return Err(e),
    }
    for (i0, stage) in stages.iter_mut().enumerate() {
        stage.copy_from_slice(&z[i0 * d..(i0 + 1) * d]);
    }
    Ok(())
}
