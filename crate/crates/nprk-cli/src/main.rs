//! `nprk`: enumeration, order conditions, tableau conversion, integration,
//! and coupling experiments for nonlinearly partitioned Runge-Kutta methods.

use clap::{Parser, Subcommand, ValueEnum};
use nprk::harness::Reference;
use nprk::{
    ark_to_nprk, builtin, convergence_study, count_ark_conditions,
    count_conditions_capped, coupling_scan, default_alpha_grid, generate_trees_capped, integrate,
    render_condition, render_condition_latex, verify_order, witness_ode, witness_prediction,
    witness_taylor_coefficient, ArkPair, BWeightMode, Builtin, ColoredTree, Error, NprkTableau,
    PartitionedOde, ReferenceCache, StageSolverConfig, COUPLING_H_VALUES, DEFAULT_TREE_CAP,
};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "nprk",
    version,
    about = "Order conditions and integrators for nonlinearly partitioned Runge-Kutta methods",
    after_help = "Tableau arguments accept a JSON file path or builtin:NAME \
                  (lobatto3A3B, method1, method2, nprk_euler_implicit_explicit)."
)]
struct Cli {
    /// Cap on worker threads for parallel evaluation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
    Latex,
}

#[derive(Subcommand)]
enum Command {
    /// Count edge-colored rooted trees and coupling conditions per order.
    Enumerate {
        /// Number of partitions M.
        #[arg(long, default_value_t = 2)]
        partitions: usize,
        /// Count orders 1..=N.
        #[arg(long, default_value_t = 8)]
        max_order: usize,
        /// Generation budget (number of trees per order).
        #[arg(long, default_value_t = DEFAULT_TREE_CAP)]
        max_trees: u128,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Output path (defaults to standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit order conditions, symbolically or evaluated against a tableau.
    Conditions {
        /// Number of partitions M (ignored when --tableau fixes it).
        #[arg(long)]
        partitions: Option<usize>,
        /// Single order to emit.
        #[arg(long)]
        order: Option<usize>,
        /// Emit all orders 1..=N instead.
        #[arg(long)]
        max_order: Option<usize>,
        /// Tableau to evaluate the conditions against (path or builtin:NAME).
        #[arg(long)]
        tableau: Option<String>,
        #[arg(long, default_value_t = DEFAULT_TREE_CAP)]
        max_trees: u128,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect the order of a tableau from its condition residuals.
    Check {
        /// Tableau to verify (path or builtin:NAME).
        #[arg(long)]
        tableau: String,
        /// Largest order to examine.
        #[arg(long, default_value_t = 4)]
        max_order: usize,
        /// Absolute residual tolerance.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lift an additive pair to an NPRK tableau, or extract an underlying
    /// RK method from an NPRK tableau.
    Convert {
        /// Input: ARK pair JSON or builtin:lobatto3A3B; with --underlying,
        /// an NPRK tableau instead.
        #[arg(long)]
        tableau: String,
        /// Weight lift for pair conversion.
        #[arg(long, value_enum, default_value_t = BMode::Diagonal)]
        b_mode: BMode,
        /// Extract this underlying method (1-based argument index).
        #[arg(long)]
        underlying: Option<usize>,
        /// Extract both underlying methods of an M = 2 tableau as a pair.
        #[arg(long, conflicts_with = "underlying")]
        underlying_pair: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a partitioned problem and emit the trajectory.
    Integrate {
        #[arg(long)]
        tableau: String,
        #[arg(long, value_enum, default_value_t = Problem::LotkaVolterra)]
        problem: Problem,
        /// Coupling strength for the Lotka-Volterra partition.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Viscosity for the Burgers partition.
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        /// Grid cells for the Burgers partition.
        #[arg(long, default_value_t = 64)]
        cells: usize,
        /// Initial state, comma separated (problem default when omitted).
        #[arg(long)]
        y0: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
        /// Step size.
        #[arg(long, default_value_t = 0.01)]
        h: f64,
        /// Stage solver tolerance.
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-step solver statistics as JSON.
        #[arg(long)]
        stats_out: Option<PathBuf>,
    },
    /// Step-refinement convergence study against a reference solution.
    Converge {
        #[arg(long)]
        tableau: String,
        #[arg(long, value_enum, default_value_t = Problem::LotkaVolterra)]
        problem: Problem,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long, default_value_t = 64)]
        cells: usize,
        #[arg(long)]
        y0: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
        /// Step size; repeat for each refinement level (default 1/40..1/640).
        #[arg(long = "h")]
        h: Vec<f64>,
        /// Reference: the same tableau at this step size.
        #[arg(long, default_value_t = 1e-4)]
        reference_h: f64,
        /// Cache directory for reference solutions.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One-step embedded coupling estimate over an alpha grid.
    CouplingScan {
        #[arg(long, default_value_t = 0.0)]
        alpha_start: f64,
        #[arg(long, default_value_t = 3.0)]
        alpha_stop: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha_step: f64,
        /// Step size; repeat for several (default 1e-2, 1e-3, 1e-4).
        #[arg(long = "h")]
        h: Vec<f64>,
        /// Initial state, comma separated.
        #[arg(long, default_value = "1,1")]
        y0: String,
        #[arg(long, default_value_t = 1e-13)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show the witness system of a tree; with a tableau, extract the
    /// one-step Taylor coefficient it isolates.
    Witness {
        /// Tree in compact form, e.g. "L:1,2,2;C:0,1,0".
        #[arg(long)]
        tree: String,
        #[arg(long)]
        tableau: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized agreement check of the two elementary-weight routes.
    #[command(hide = true)]
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BMode {
    Dense,
    Diagonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Problem {
    LotkaVolterra,
    Burgers,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    eprintln!("nprk {}", env!("CARGO_PKG_VERSION"));
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SolverFailed { .. } | Error::NonFinite { .. } => 2,
        Error::BudgetExceeded { .. } | Error::NaiveBudgetExceeded { .. } => 3,
        _ => 1,
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::Validation(format!("cannot write to stdout: {e}")))
        }
    }
}

fn load_tableau(source: &str) -> Result<NprkTableau, Error> {
    if let Some(name) = source.strip_prefix("builtin:") {
        return builtin(name)?.into_tableau();
    }
    let text = std::fs::read_to_string(source)
        .map_err(|e| Error::Validation(format!("cannot read tableau {source}: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Validation(format!("invalid tableau JSON in {source}: {e}")))
}

fn load_pair(source: &str) -> Result<ArkPair, Error> {
    if let Some(name) = source.strip_prefix("builtin:") {
        return match builtin(name)? {
            Builtin::Pair(p) => Ok(p),
            Builtin::Tableau(_) => Err(Error::Validation(format!(
                "builtin:{name} is an NPRK tableau, not an additive pair"
            ))),
        };
    }
    let text = std::fs::read_to_string(source)
        .map_err(|e| Error::Validation(format!("cannot read pair {source}: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Validation(format!("invalid pair JSON in {source}: {e}")))
}

fn parse_state(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| Error::Validation(format!("bad state entry `{x}`: {e}")))
        })
        .collect()
}

enum AnyOde {
    Lv(nprk::LotkaVolterra),
    Burgers(nprk::Burgers),
}

impl AnyOde {
    fn as_dyn(&self) -> &dyn PartitionedOde {
        match self {
            AnyOde::Lv(p) => p,
            AnyOde::Burgers(p) => p,
        }
    }

    fn default_y0(&self) -> Vec<f64> {
        match self {
            AnyOde::Lv(_) => vec![1.0, 1.0],
            AnyOde::Burgers(b) => {
                let n = b.n_cells;
                (0..n)
                    .map(|i| 1.5 + (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
                    .collect()
            }
        }
    }
}

fn make_problem(
    problem: Problem,
    alpha: f64,
    epsilon: f64,
    cells: usize,
) -> Result<AnyOde, Error> {
    Ok(match problem {
        Problem::LotkaVolterra => AnyOde::Lv(nprk::lotka_volterra(alpha)),
        Problem::Burgers => AnyOde::Burgers(nprk::burgers(epsilon, cells)?),
    })
}

fn unsupported(format: Format, cmd: &str) -> Error {
    Error::Validation(format!("format {format:?} is not supported by {cmd}"))
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Enumerate {
            partitions,
            max_order,
            max_trees,
            format,
            out,
        } => {
            let mut rows = Vec::new();
            for order in 1..=max_order {
                let counts = count_conditions_capped(partitions, order, max_trees)?;
                let ark = count_ark_conditions(partitions, order)?;
                rows.push((counts, ark));
            }
            let text = match format {
                Format::Text => {
                    let mut t = format!(
                        "{:>5} {:>12} {:>12} {:>12} {:>10} {:>10}\n",
                        "order", "trees", "coupling", "underlying", "linear", "nonlinear"
                    );
                    for (c, _) in &rows {
                        t.push_str(&format!(
                            "{:>5} {:>12} {:>12} {:>12} {:>10} {:>10}\n",
                            c.order, c.total, c.coupling, c.underlying, c.linear, c.nonlinear
                        ));
                    }
                    t
                }
                Format::Csv => {
                    let mut t =
                        String::from("order,trees,coupling,underlying,linear,nonlinear\n");
                    for (c, _) in &rows {
                        t.push_str(&format!(
                            "{},{},{},{},{},{}\n",
                            c.order, c.total, c.coupling, c.underlying, c.linear, c.nonlinear
                        ));
                    }
                    t
                }
                Format::Json => {
                    let items: Vec<serde_json::Value> = rows
                        .iter()
                        .map(|(c, ark)| {
                            serde_json::json!({
                                "order": c.order,
                                "trees": c.total,
                                "coupling": c.coupling,
                                "underlying": c.underlying,
                                "linear": c.linear,
                                "nonlinear": c.nonlinear,
                                "ark_conditions_per_component": ark.to_string(),
                            })
                        })
                        .collect();
                    format!("{}\n", serde_json::to_string_pretty(&items).unwrap())
                }
                Format::Latex => return Err(unsupported(format, "enumerate")),
            };
            emit(&out, &text)
        }
        Command::Conditions {
            partitions,
            order,
            max_order,
            tableau,
            max_trees,
            format,
            out,
        } => {
            let tableau = tableau.map(|source| load_tableau(&source)).transpose()?;
            let m = match (&tableau, partitions) {
                (Some(t), _) => t.partitions(),
                (None, Some(m)) => m,
                (None, None) => {
                    return Err(Error::Validation(
                        "give --partitions or --tableau to fix the partition count".into(),
                    ))
                }
            };
            let orders: Vec<usize> = match (order, max_order) {
                (Some(o), None) => vec![o],
                (None, Some(n)) => (1..=n).collect(),
                (None, None) => vec![3],
                (Some(_), Some(_)) => {
                    return Err(Error::Validation(
                        "--order and --max-order are mutually exclusive".into(),
                    ))
                }
            };
            let mut text = String::new();
            for &o in &orders {
                let trees = generate_trees_capped(m, o, max_trees)?;
                match (&tableau, format) {
                    (_, Format::Text) => {
                        for tree in &trees {
                            text.push_str(&render_condition(tree));
                            text.push('\n');
                        }
                    }
                    (_, Format::Latex) => {
                        for tree in &trees {
                            text.push_str(&render_condition_latex(tree));
                            text.push('\n');
                        }
                    }
                    (Some(t), Format::Json) => {
                        for report in nprk::conditions_at_order(t, o, max_trees)? {
                            text.push_str(&serde_json::to_string(&report).unwrap());
                            text.push('\n');
                        }
                    }
                    (None, Format::Json) => {
                        for tree in &trees {
                            let value = serde_json::json!({
                                "order": o,
                                "tree": tree,
                                "rendered": render_condition(tree),
                                "target": 1.0 / tree.density() as f64,
                                "class": tree.classify(),
                            });
                            text.push_str(&value.to_string());
                            text.push('\n');
                        }
                    }
                    (Some(t), Format::Csv) => {
                        if text.is_empty() {
                            text.push_str("order,tree,weight,target,residual,class\n");
                        }
                        for report in nprk::conditions_at_order(t, o, max_trees)? {
                            text.push_str(&format!(
                                "{},\"{}\",{},{},{},{}\n",
                                o,
                                report.tree.to_compact(),
                                report.weight,
                                report.target,
                                report.residual,
                                report.class.as_str()
                            ));
                        }
                    }
                    (None, Format::Csv) => return Err(unsupported(format, "conditions")),
                }
            }
            emit(&out, &text)
        }
        Command::Check {
            tableau,
            max_order,
            tol,
            format,
            out,
        } => {
            let t = load_tableau(&tableau)?;
            let verdict = verify_order(&t, max_order, tol)?;
            let text = match format {
                Format::Json => format!("{}\n", serde_json::to_string_pretty(&verdict).unwrap()),
                Format::Text => {
                    let mut s = format!("detected order: {}\n", verdict.detected_order);
                    if !verdict.failing.is_empty() {
                        s.push_str(&format!(
                            "failing conditions at order {}:\n",
                            verdict.detected_order + 1
                        ));
                        for r in &verdict.failing {
                            s.push_str(&format!(
                                "  {}  [weight {:.12}, residual {:+.3e}]\n",
                                render_condition(&r.tree),
                                r.weight,
                                r.residual
                            ));
                        }
                    }
                    s
                }
                _ => return Err(unsupported(format, "check")),
            };
            emit(&out, &text)
        }
        Command::Convert {
            tableau,
            b_mode,
            underlying,
            underlying_pair,
            out,
        } => {
            let text = match underlying {
                _ if underlying_pair => {
                    let t = load_tableau(&tableau)?;
                    let pair = t.underlying_ark()?;
                    format!("{}\n", serde_json::to_string(&pair).unwrap())
                }
                Some(r) => {
                    let t = load_tableau(&tableau)?;
                    if r == 0 || r > t.partitions() {
                        return Err(Error::Validation(format!(
                            "--underlying must be in 1..={}",
                            t.partitions()
                        )));
                    }
                    format!("{}\n", serde_json::to_string(&t.underlying_rk(r)).unwrap())
                }
                None => {
                    let pair = load_pair(&tableau)?;
                    let mode = match b_mode {
                        BMode::Dense => BWeightMode::Dense,
                        BMode::Diagonal => BWeightMode::Diagonal,
                    };
                    let t = ark_to_nprk(&pair, mode)?;
                    format!("{}\n", serde_json::to_string(&t).unwrap())
                }
            };
            emit(&out, &text)
        }
        Command::Integrate {
            tableau,
            problem,
            alpha,
            epsilon,
            cells,
            y0,
            t0,
            t_end,
            h,
            tol,
            format,
            out,
            stats_out,
        } => {
            let t = load_tableau(&tableau)?;
            let ode = make_problem(problem, alpha, epsilon, cells)?;
            let y0 = match y0 {
                Some(s) => parse_state(&s)?,
                None => ode.default_y0(),
            };
            let cfg = StageSolverConfig {
                newton_tol: tol,
                ..Default::default()
            };
            let traj = integrate(&t, ode.as_dyn(), &y0, t0, t_end, h, &cfg)?;
            if let Some(path) = stats_out {
                let stats = serde_json::to_string_pretty(&traj.stats).unwrap();
                std::fs::write(&path, stats).map_err(|e| {
                    Error::Validation(format!("cannot write {}: {e}", path.display()))
                })?;
            }
            let text = match format {
                Format::Csv => traj.to_csv(),
                Format::Json => format!("{}\n", serde_json::to_string(&traj).unwrap()),
                _ => return Err(unsupported(format, "integrate")),
            };
            emit(&out, &text)
        }
        Command::Converge {
            tableau,
            problem,
            alpha,
            epsilon,
            cells,
            y0,
            t_end,
            h,
            reference_h,
            cache_dir,
            tol,
            format,
            out,
        } => {
            let t = load_tableau(&tableau)?;
            let ode = make_problem(problem, alpha, epsilon, cells)?;
            let y0 = match y0 {
                Some(s) => parse_state(&s)?,
                None => ode.default_y0(),
            };
            let h_values = if h.is_empty() {
                vec![1.0 / 40.0, 1.0 / 80.0, 1.0 / 160.0, 1.0 / 320.0, 1.0 / 640.0]
            } else {
                h
            };
            let cfg = StageSolverConfig {
                newton_tol: tol,
                ..Default::default()
            };
            let cache = ReferenceCache::new(cache_dir);
            let key = format!(
                "problem={problem:?} alpha={alpha} epsilon={epsilon} cells={cells} \
                 y0={y0:?} t_end={t_end} tableau={tableau} reference_h={reference_h}"
            );
            let reference = cache.get_or_compute(&key, || {
                Ok(integrate(&t, ode.as_dyn(), &y0, 0.0, t_end, reference_h, &cfg)?
                    .final_state()
                    .to_vec())
            })?;
            let study = convergence_study(
                &t,
                ode.as_dyn(),
                &y0,
                0.0,
                t_end,
                &h_values,
                Reference::FinalState(reference),
                &cfg,
            )?;
            let text = match format {
                Format::Csv => {
                    let mut s = String::from("alpha,h,error\n");
                    for (h, e) in study.h_values.iter().zip(&study.errors) {
                        s.push_str(&format!("{alpha},{h},{e}\n"));
                    }
                    s
                }
                Format::Json => format!("{}\n", serde_json::to_string_pretty(&study).unwrap()),
                Format::Text => {
                    let mut s = format!("{:>12} {:>14}\n", "h", "error");
                    for (h, e) in study.h_values.iter().zip(&study.errors) {
                        s.push_str(&format!("{h:>12.6e} {e:>14.6e}\n"));
                    }
                    match (study.slope, study.slope_stderr) {
                        (Some(sl), Some(se)) => {
                            s.push_str(&format!("slope: {sl:.4} (stderr {se:.4})\n"))
                        }
                        _ => s.push_str("slope: not-a-fit (errors at roundoff)\n"),
                    }
                    s
                }
                Format::Latex => return Err(unsupported(format, "converge")),
            };
            emit(&out, &text)
        }
        Command::CouplingScan {
            alpha_start,
            alpha_stop,
            alpha_step,
            h,
            y0,
            tol,
            format,
            out,
        } => {
            let grid: Vec<f64> = if alpha_step <= 0.0 {
                return Err(Error::Validation("alpha-step must be > 0".into()));
            } else if (alpha_start, alpha_stop, alpha_step) == (0.0, 3.0, 0.05) {
                default_alpha_grid()
            } else {
                let mut g = Vec::new();
                let mut a = alpha_start;
                while a <= alpha_stop + 1e-12 {
                    g.push(a);
                    a += alpha_step;
                }
                g
            };
            let h_values = if h.is_empty() {
                COUPLING_H_VALUES.to_vec()
            } else {
                h
            };
            let y0 = parse_state(&y0)?;
            let cfg = StageSolverConfig {
                newton_tol: tol,
                ..Default::default()
            };
            let rows = coupling_scan(&grid, &h_values, &y0, &cfg)?;
            let text = match format {
                Format::Csv => {
                    let mut s = String::from("alpha,h,estimate\n");
                    for r in &rows {
                        s.push_str(&format!("{},{},{}\n", r.alpha, r.h, r.estimate));
                    }
                    s
                }
                Format::Json => format!("{}\n", serde_json::to_string_pretty(&rows).unwrap()),
                Format::Text => {
                    let mut s = format!("{:>8} {:>12} {:>14}\n", "alpha", "h", "estimate");
                    for r in &rows {
                        s.push_str(&format!(
                            "{:>8.3} {:>12.6e} {:>14.6e}\n",
                            r.alpha, r.h, r.estimate
                        ));
                    }
                    s
                }
                Format::Latex => return Err(unsupported(format, "coupling-scan")),
            };
            emit(&out, &text)
        }
        Command::Witness {
            tree,
            tableau,
            format,
            out,
        } => {
            let tree: ColoredTree = tree.parse()?;
            let witness = witness_ode(&tree);
            let tableau = tableau.map(|source| load_tableau(&source)).transpose()?;
            let measured = tableau
                .as_ref()
                .map(|t| -> Result<(f64, f64), Error> {
                    Ok((
                        witness_taylor_coefficient(t, &tree)?,
                        witness_prediction(t, &tree)?,
                    ))
                })
                .transpose()?;
            let text = match format {
                Format::Text => {
                    let canon = witness.tree();
                    let mut s = format!(
                        "tree: {canon}\norder: {}\nsymmetry: {}\ndensity: {}\n",
                        canon.order(),
                        canon.symmetry(),
                        canon.density()
                    );
                    s.push_str(&format!("system dimension: {}\n", witness.dim()));
                    if let Some((measured, predicted)) = measured {
                        s.push_str(&format!(
                            "one-step coefficient: {measured:.12e}\npredicted:            {predicted:.12e}\n"
                        ));
                    }
                    s
                }
                Format::Json => {
                    let canon = witness.tree();
                    let mut value = serde_json::json!({
                        "tree": canon,
                        "order": canon.order(),
                        "symmetry": canon.symmetry().to_string(),
                        "density": canon.density().to_string(),
                        "dimension": witness.dim(),
                    });
                    if let Some((measured, predicted)) = measured {
                        value["coefficient"] = serde_json::json!(measured);
                        value["predicted"] = serde_json::json!(predicted);
                    }
                    format!("{}\n", serde_json::to_string_pretty(&value).unwrap())
                }
                _ => return Err(unsupported(format, "witness")),
            };
            emit(&out, &text)
        }
        Command::Selftest { seed, samples } => {
            let results = nprk::sampling::compare_weight_routes(seed, samples)?;
            let worst = results
                .iter()
                .map(|r| r.relative_deviation)
                .fold(0.0f64, f64::max);
            if worst > 1e-12 {
                return Err(Error::NonFinite {
                    context: format!(
                        "weight routes disagree: max relative deviation {worst:.3e}"
                    ),
                });
            }
            emit(
                &None,
                &format!(
                    "selftest passed: {} samples, max relative deviation {worst:.3e}\n",
                    results.len()
                ),
            )
        }
    }
}
