//! Command-line front end.
//!
//! ```text
//! swipt-ee solve|converge|sweep|validate --config <path> [--out <path>]
//!     [--seed <u64>] [--trials <n>] [--scheme <name>] [--debug-solver]
//! ```
//!
//! Every command writes CSV whose first line is a versioned `#` comment.
//! Exit status is 0 on success, 1 on usage or config errors and 2 when
//! `validate` finds a violated check.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::baselines::{solve_scheme, Scheme};
use crate::config::RunConfig;
use crate::dinkelbach::{self, parametric_value, CellOutcome, SolveOutcome, SolveSettings};
use crate::eh_model::EhCurve;
use crate::error::{Error, Result};
use crate::oracle::{feasibility_probe, grid_search};
use crate::par;
use crate::scenario::{draw_fading, realize_channel, trial_rng, ChannelRealization, SystemParams};
use crate::subproblem::{build, f1, f2};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

const CSV_VERSION: u32 = 1;

/// Relative tolerance of the dominance and consistency checks.
const SOLVER_TOL: f64 = 1e-6;
/// Allowed relative gap between the solver and the grid oracle.
const ORACLE_BAND: f64 = 0.02;
/// Curvature checks allow this much positive eigenvalue relative to the norm.
const NSD_TOL: f64 = 1e-8;
/// The root checks use the default stopping tolerance, not the configured
/// one, so that a loosened tolerance gets caught. The bracket offset is
/// `100 * BRACKET_EPS * q*`.
const BRACKET_EPS: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "swipt-ee", version, about = "Energy-efficient resource allocation for a SWIPT two-way relay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one channel realization, one row per segment pair.
    Solve(CommonArgs),
    /// Dinkelbach traces of every feasible segment pair.
    Converge(CommonArgs),
    /// Mean energy efficiency against the transmit power cap.
    Sweep(CommonArgs),
    /// Check the solver against the grid oracle and the model invariants.
    Validate(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// proposed, equal_power, equal_ps, equal_both, throughput_max or all
    #[arg(long)]
    scheme: Option<String>,
    /// Write per-Newton-step solver records to stderr.
    #[arg(long)]
    debug_solver: bool,
}

/// Runs the CLI; returns the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let (command, common) = match &cli.command {
        Command::Solve(a) => ("solve", a),
        Command::Converge(a) => ("converge", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Validate(a) => ("validate", a),
    };
    let cfg = match load_config(common) {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let out_path = common.out.clone().or_else(|| cfg.output.clone());

    let result = match command {
        "solve" => solve_command(&cfg, common.debug_solver, stderr),
        "converge" => checked_curve(&cfg).and_then(|()| converge_csv(&cfg)),
        "sweep" => checked_curve(&cfg).and_then(|()| sweep_csv(&cfg)),
        _ => {
            let report = match validate(&cfg, stderr) {
                Ok(r) => r,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    return EXIT_USAGE;
                }
            };
            let csv = report.to_csv();
            if let Err(e) = emit(&csv, out_path.as_ref(), stdout) {
                let _ = writeln!(stderr, "error: {e}");
                return EXIT_USAGE;
            }
            return match &report.failure {
                None => EXIT_OK,
                Some(f) => {
                    let _ = writeln!(stderr, "validation failed: {f}");
                    EXIT_VALIDATION
                }
            };
        }
    };
    match result.and_then(|csv| emit(&csv, out_path.as_ref(), stdout)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        if trials == 0 {
            return Err(Error::InvalidParameter {
                name: "--trials",
                reason: "must be >= 1".into(),
            });
        }
        cfg.trials = trials;
    }
    if let Some(s) = &args.scheme {
        cfg.schemes = Some(if s == "all" {
            Scheme::ALL.to_vec()
        } else {
            vec![s.parse::<Scheme>().map_err(|reason| Error::InvalidParameter { name: "--scheme", reason })?]
        });
    }
    cfg.solver.barrier.record_trace = args.debug_solver;
    Ok(cfg)
}

fn emit(csv: &str, path: Option<&PathBuf>, stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, csv).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => stdout.write_all(csv.as_bytes()).map_err(Error::from),
    }
}

fn checked_curve(cfg: &RunConfig) -> Result<()> {
    match cfg.curve.invariant_violations().into_iter().next() {
        None => Ok(()),
        Some(v) => Err(Error::InvalidCurve(v)),
    }
}

/// Fading for trial `trial`: the configured gains if any, else a seeded draw.
pub fn channel_for(cfg: &RunConfig, params: &SystemParams, trial: u64) -> Result<ChannelRealization> {
    let (g_a, g_b) = match cfg.fading {
        Some(g) => g,
        None => draw_fading(&mut trial_rng(cfg.seed, trial)),
    };
    realize_channel(params, g_a, g_b)
}

fn header(kind: &str, columns: &str) -> String {
    format!("# swipt-ee {kind} v{CSV_VERSION}\n{columns}\n")
}

fn single_scheme(cfg: &RunConfig) -> Result<Scheme> {
    match cfg.schemes.as_deref() {
        None => Ok(Scheme::Proposed),
        Some([s]) => Ok(*s),
        Some(_) => Err(Error::InvalidParameter {
            name: "scheme",
            reason: "solve takes exactly one scheme".into(),
        }),
    }
}

fn solve_command(cfg: &RunConfig, debug: bool, stderr: &mut dyn Write) -> Result<String> {
    checked_curve(cfg)?;
    let outcome = solve_configured(cfg)?;
    if debug {
        let mut dbg = header("solver-trace", "j,k,stage,step,objective,decrement");
        for c in &outcome.cells {
            for r in &c.solver_trace {
                let _ = writeln!(dbg, "{},{},{},{},{},{}", c.j, c.k, r.stage, r.step, r.objective, r.decrement);
            }
        }
        stderr.write_all(dbg.as_bytes())?;
    }
    Ok(solve_csv(cfg, &outcome))
}

/// Runs the configured scheme on trial 0.
pub fn solve_configured(cfg: &RunConfig) -> Result<SolveOutcome> {
    let scheme = single_scheme(cfg)?;
    let channel = channel_for(cfg, &cfg.params, 0)?;
    solve_scheme(scheme, &cfg.params, &channel, &cfg.curve, &cfg.solver, cfg.grid_size)
}

fn cell_row(out: &mut String, j: &str, k: &str, status: &str, cell: Option<&CellOutcome>, t: f64) {
    match cell.and_then(|c| c.solution.as_ref().map(|s| (c, s))) {
        Some((c, s)) => {
            let a = &s.allocation;
            let _ = writeln!(
                out,
                "{j},{k},{status},{},{},{},{},{},{},{},{},{}",
                s.report.ee_bits_per_joule,
                a.p_a_w,
                a.p_b_w,
                a.beta,
                a.rho_a,
                a.rho_b,
                s.report.r_ab_bits / t,
                s.report.r_ba_bits / t,
                c.trace.len()
            );
        }
        None => {
            let iters = cell.map_or(0, |c| c.trace.len());
            let _ = writeln!(out, "{j},{k},{status},,,,,,,,,{iters}");
        }
    }
}

pub fn solve_csv(cfg: &RunConfig, outcome: &SolveOutcome) -> String {
    let t = cfg.params.block_duration_s;
    let mut out = header(
        "solve",
        "j,k,status,q_bits_per_joule,P_A_w,P_B_w,beta,rho_A,rho_B,R_AB_bps,R_BA_bps,iters",
    );
    for c in &outcome.cells {
        cell_row(&mut out, &c.j.to_string(), &c.k.to_string(), c.status.as_str(), Some(c), t);
    }
    match outcome.best_cell() {
        Some(c) => cell_row(&mut out, &c.j.to_string(), &c.k.to_string(), "winner", Some(c), t),
        None => cell_row(&mut out, "-", "-", "infeasible", None, t),
    }
    out
}

pub fn converge_csv(cfg: &RunConfig) -> Result<String> {
    let channel = channel_for(cfg, &cfg.params, 0)?;
    let outcome = dinkelbach::solve_p1(&cfg.params, &channel, &cfg.curve, &cfg.solver)?;
    let mut out = header("converge", "j,k,iter,q,F_q,status");
    for c in outcome.cells.iter().filter(|c| c.status.has_solution()) {
        for e in &c.trace {
            let _ = writeln!(out, "{},{},{},{},{},{}", c.j, c.k, e.iter, e.q, e.f_q, c.status.as_str());
        }
    }
    Ok(out)
}

/// Energy efficiency of the winner, 0 when nothing is feasible.
fn scheme_ee(
    scheme: Scheme,
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    settings: &SolveSettings,
    grid_size: usize,
) -> Result<Option<f64>> {
    Ok(solve_scheme(scheme, params, channel, curve, settings, grid_size)?.best_ee())
}

/// Per-trial energy efficiency of each scheme at one power cap, indexed
/// `[trial][scheme]`; `None` marks an infeasible realization.
pub fn sweep_point(cfg: &RunConfig, p_max_dbm: f64, schemes: &[Scheme]) -> Result<Vec<Vec<Option<f64>>>> {
    let params = cfg.params.clone().with_max_tx_power_dbm(p_max_dbm);
    params.validate()?;
    par::map_range(cfg.solver.exec, cfg.trials, |trial| {
        let channel = channel_for(cfg, &params, trial as u64)?;
        schemes
            .iter()
            .map(|&s| scheme_ee(s, &params, &channel, &cfg.curve, &cfg.solver, cfg.grid_size))
            .collect()
    })
    .into_iter()
    .collect()
}

pub fn sweep_csv(cfg: &RunConfig) -> Result<String> {
    let schemes = cfg.schemes.clone().unwrap_or_else(|| Scheme::ALL.to_vec());
    let mut out = header("sweep", "p_max_dbm,scheme,mean_ee,std_ee,n_feasible");
    for &p_dbm in &cfg.sweep_p_max_dbm {
        let per_trial = sweep_point(cfg, p_dbm, &schemes)?;
        for (si, scheme) in schemes.iter().enumerate() {
            // Infeasible realizations deliver no bits and count as zero.
            let ee: Vec<f64> = per_trial.iter().map(|row| row[si].unwrap_or(0.0)).collect();
            let n = ee.len() as f64;
            let mean = ee.iter().sum::<f64>() / n;
            let std = if ee.len() > 1 {
                (ee.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let feasible = per_trial.iter().filter(|row| row[si].is_some()).count();
            let _ = writeln!(out, "{p_dbm},{scheme},{mean},{std},{feasible}");
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSummary {
    pub trial: u64,
    pub feasible: bool,
    pub q: f64,
    pub oracle_ee: f64,
    pub winner: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub seed: u64,
    pub instances: Vec<InstanceSummary>,
    /// First violated check, with the offending seed and trial.
    pub failure: Option<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn to_csv(&self) -> String {
        let mut out = header("validate", "seed,trial,feasible,j,k,q,oracle_ee,gap");
        for i in &self.instances {
            let (j, k) = i.winner.map_or(("-".into(), "-".into()), |(j, k)| (j.to_string(), k.to_string()));
            let gap = if i.feasible { (i.q - i.oracle_ee) / i.q } else { 0.0 };
            let _ = writeln!(
                out,
                "{},{},{},{j},{k},{},{},{gap}",
                self.seed, i.trial, i.feasible, i.q, i.oracle_ee
            );
        }
        out
    }
}

/// Runs every check on `cfg.trials` instances and stops at the first failure.
pub fn validate(cfg: &RunConfig, log: &mut dyn Write) -> Result<ValidationReport> {
    let mut report = ValidationReport {
        seed: cfg.seed,
        instances: Vec::new(),
        failure: None,
    };
    if let Some(v) = cfg.curve.invariant_violations().into_iter().next() {
        report.failure = Some(format!("harvester curve invariant violated: {v}"));
        return Ok(report);
    }
    for trial in 0..cfg.trials as u64 {
        let channel = channel_for(cfg, &cfg.params, trial)?;
        let (summary, failure) = validate_instance(cfg, &channel, trial)?;
        let _ = writeln!(
            log,
            "trial {trial}: {} q={} oracle={}",
            if failure.is_none() { "ok" } else { "FAIL" },
            summary.q,
            summary.oracle_ee
        );
        report.instances.push(summary);
        if let Some(f) = failure {
            report.failure = Some(format!(
                "seed={} trial={trial} g2_a={} g2_b={}: {f}",
                cfg.seed, channel.g2_a, channel.g2_b
            ));
            break;
        }
    }
    Ok(report)
}

fn rel_le(a: f64, b: f64) -> bool {
    a <= b + SOLVER_TOL * b.abs().max(a.abs())
}

fn validate_instance(
    cfg: &RunConfig,
    channel: &ChannelRealization,
    trial: u64,
) -> Result<(InstanceSummary, Option<String>)> {
    let (params, curve, settings) = (&cfg.params, &cfg.curve, &cfg.solver);
    let outcome = dinkelbach::solve_p1(params, channel, curve, settings)?;
    let mut summary = InstanceSummary {
        trial,
        feasible: outcome.is_feasible(),
        q: 0.0,
        oracle_ee: 0.0,
        winner: outcome.best_cell().map(|c| (c.j, c.k)),
    };

    let Some(best) = outcome.best_cell() else {
        let probe = feasibility_probe(params, channel, curve, &cfg.oracle, settings.exec)?;
        let failure = probe.then(|| "solver reports infeasible but the grid found a feasible point".to_string());
        return Ok((summary, failure));
    };
    let sol = best.solution.as_ref().expect("winner has a solution");
    let q = sol.q;
    summary.q = q;

    let reference = SolveSettings::default();
    for c in outcome.cells.iter().filter(|c| c.status.has_solution()) {
        if let Some(w) = c.trace.windows(2).find(|w| w[1].q < w[0].q) {
            return Ok((summary, Some(format!("cell ({},{}) q decreased from {} to {}", c.j, c.k, w[0].q, w[1].q))));
        }
        if c.status != dinkelbach::CellStatus::Converged {
            return Ok((summary, Some(format!("cell ({},{}) hit the iteration cap", c.j, c.k))));
        }
        let cs = c.solution.as_ref().expect("solved cell");
        let spec = build(params, channel, curve, c.j, c.k, cs.q)?;
        let v = &cs.decision;
        let last = c.trace.last().expect("solved cell has a trace");
        let band = reference.tolerance(last.q, spec.denominator(v));
        if last.f_q.abs() > band {
            return Ok((
                summary,
                Some(format!(
                    "cell ({},{}) root property violated: |F| = {} at termination exceeds the reference band {band}",
                    c.j, c.k, last.f_q
                )),
            ));
        }
        let mut worst = f64::NEG_INFINITY;
        for (i, p, x) in [(0, v.p_a, v.x_a), (1, v.p_b, v.x_b)] {
            worst = worst.max(f1(p, x, spec.h2[i], params)?.curvature_ratio());
            worst = worst.max(f2(v.t, v.x_a, v.x_b, spec.harvest_coeffs[i])?.curvature_ratio());
        }
        if worst > NSD_TOL {
            return Ok((
                summary,
                Some(format!("cell ({},{}) Hessian not negative semidefinite: max eigenvalue ratio {worst}", c.j, c.k)),
            ));
        }
    }

    let ee = sol.report.ee_bits_per_joule;
    if (ee - q).abs() > SOLVER_TOL * q {
        return Ok((summary, Some(format!("link-model EE {ee} differs from q* {q}"))));
    }
    if (sol.report.segment_a, sol.report.segment_b) != (best.j, best.k) {
        return Ok((
            summary,
            Some(format!(
                "winner ({},{}) lands in segments ({},{})",
                best.j, best.k, sol.report.segment_a, sol.report.segment_b
            )),
        ));
    }

    let delta = 100.0 * BRACKET_EPS * q;
    let above = parametric_value(params, channel, curve, best.j, best.k, q + delta, settings);
    let below = parametric_value(params, channel, curve, best.j, best.k, q - delta, settings);
    match (below, above) {
        (Some(lo), Some(hi)) if lo > 0.0 && hi < 0.0 => {}
        (lo, hi) => {
            return Ok((
                summary,
                Some(format!("root not bracketed: F(q*-d) = {lo:?}, F(q*+d) = {hi:?} with q* = {q}, d = {delta}")),
            ))
        }
    }

    let Some(oracle) = grid_search(params, channel, curve, &cfg.oracle, settings.exec)? else {
        return Ok((summary, Some("grid oracle found no feasible point".into())));
    };
    summary.oracle_ee = oracle.ee;
    if !rel_le(oracle.ee, q) {
        return Ok((summary, Some(format!("oracle EE {} exceeds solver q* {q}", oracle.ee))));
    }
    if (q - oracle.ee) / q > ORACLE_BAND {
        return Ok((summary, Some(format!("oracle EE {} more than 2% below q* {q}", oracle.ee))));
    }

    let run = |s| solve_scheme(s, params, channel, curve, settings, cfg.grid_size);
    let eq_power = run(Scheme::EqualPower)?;
    let eq_ps = run(Scheme::EqualPs)?;
    let eq_both = run(Scheme::EqualBoth)?;
    let tmax = run(Scheme::ThroughputMax)?;
    let ee_of = |o: &SolveOutcome| o.best_ee().unwrap_or(0.0);
    let chain = [
        ("equal_power", ee_of(&eq_power), "proposed", ee),
        ("equal_ps", ee_of(&eq_ps), "proposed", ee),
        ("throughput_max", ee_of(&tmax), "proposed", ee),
        ("equal_both", ee_of(&eq_both), "equal_power", ee_of(&eq_power)),
        ("equal_both", ee_of(&eq_both), "equal_ps", ee_of(&eq_ps)),
    ];
    for (lo_name, lo, hi_name, hi) in chain {
        if !rel_le(lo, hi) {
            return Ok((summary, Some(format!("EE({lo_name}) = {lo} exceeds EE({hi_name}) = {hi}"))));
        }
    }
    let tp = |o: &SolveOutcome| o.best_solution().map_or(0.0, |s| s.report.throughput_bits());
    let t_max = tp(&tmax);
    for (name, o) in [("proposed", &outcome), ("equal_power", &eq_power), ("equal_ps", &eq_ps), ("equal_both", &eq_both)] {
        if !rel_le(tp(o), t_max) {
            return Ok((summary, Some(format!("throughput of {name} {} exceeds throughput_max {t_max}", tp(o)))));
        }
    }
    Ok((summary, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_args(&["swipt-ee"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["swipt-ee", "solve"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["swipt-ee", "solve", "--config", "/nonexistent/x.cfg"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["swipt-ee", "--help"]).0, EXIT_OK);
    }

    #[test]
    fn solve_csv_shape_on_fixed_gains() {
        let cfg = RunConfig {
            fading: Some((1.0571, 1.4131)),
            ..Default::default()
        };
        let csv = solve_csv(&cfg, &solve_configured(&cfg).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# swipt-ee solve v1"));
        assert_eq!(lines.len(), 2 + 19 + 1);
        assert!(lines.last().unwrap().contains(",winner,"));
        for l in &lines[1..] {
            assert_eq!(l.split(',').count(), 12, "{l}");
        }
    }

    #[test]
    fn infeasible_winner_row() {
        let cfg = RunConfig {
            fading: Some((0.0, 0.0)),
            ..Default::default()
        };
        let csv = solve_csv(&cfg, &solve_configured(&cfg).unwrap());
        assert!(csv.lines().last().unwrap().starts_with("-,-,infeasible,"));
    }

    #[test]
    fn multiple_schemes_rejected_by_solve() {
        let cfg = RunConfig {
            schemes: Some(vec![Scheme::Proposed, Scheme::EqualPs]),
            ..Default::default()
        };
        assert!(solve_configured(&cfg).is_err());
    }
}
