//! Dinkelbach iteration per segment pair and the enumeration over pairs.
//!
//! For a fixed `(j, k)` the energy efficiency `N(v) / D(v)` is maximized by
//! solving the parametric program `max N(v) - q D(v)` for an increasing
//! sequence of `q`, starting at `q = 0` and setting `q <- N(v') / D(v')` after
//! each solve, until the parametric optimum `F(q)` drops below tolerance.
//! The overall optimum is the best cell among all reachable pairs.

use crate::barrier::{self, IterationRecord, PhaseOne, SolveStatus, SolverSettings};
use crate::eh_model::EhCurve;
use crate::error::{Error, Result};
use crate::link_model::{self, Allocation, PerformanceReport};
use crate::par::{self, Exec};
use crate::scenario::{ChannelRealization, SystemParams};
use crate::subproblem::{
    build_with, recover_allocation, CellProgram, DecisionVector, Margins, Ratio, Restriction, SubproblemSpec,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveSettings {
    /// Relative stopping tolerance on `F(q) / (q D)`.
    pub eps_rel: f64,
    /// Absolute floor on `F(q)`, bits per second.
    pub eps_abs: f64,
    /// `L_max`.
    pub max_iter: usize,
    pub barrier: SolverSettings,
    pub margins: Margins,
    pub exec: Exec,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            eps_rel: 1e-6,
            eps_abs: 1e-9,
            max_iter: 30,
            barrier: SolverSettings::default(),
            margins: Margins::default(),
            exec: Exec::default(),
        }
    }
}

impl SolveSettings {
    /// Stopping threshold on `F(q)` given the current `q` and denominator.
    pub fn tolerance(&self, q: f64, denominator: f64) -> f64 {
        self.eps_abs.max(self.eps_rel * q.abs() * denominator.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub q: f64,
    pub f_q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Converged,
    /// `L_max` reached; the solution is the last iterate.
    MaxIterations,
    /// Phase I found no strictly feasible point.
    Infeasible,
    /// The segment box is unreachable; the solver was not run.
    Empty,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Converged => "converged",
            CellStatus::MaxIterations => "max_iter",
            CellStatus::Infeasible => "infeasible",
            CellStatus::Empty => "empty",
        }
    }

    pub fn has_solution(self) -> bool {
        matches!(self, CellStatus::Converged | CellStatus::MaxIterations)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSolution {
    pub decision: DecisionVector,
    pub allocation: Allocation,
    /// `N / D` at the final iterate.
    pub q: f64,
    /// Parametric optimum at the last `q` tried.
    pub f_final: f64,
    /// The allocation re-scored by the link model.
    pub report: PerformanceReport,
    pub barrier_status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub j: usize,
    pub k: usize,
    pub status: CellStatus,
    pub solution: Option<CellSolution>,
    pub trace: Vec<TraceEntry>,
    /// Newton-step records of every barrier solve, when requested.
    pub solver_trace: Vec<IterationRecord>,
}

impl CellOutcome {
    fn without_solution(j: usize, k: usize, status: CellStatus) -> Self {
        Self {
            j,
            k,
            status,
            solution: None,
            trace: Vec::new(),
            solver_trace: Vec::new(),
        }
    }

    pub fn q(&self) -> Option<f64> {
        self.solution.as_ref().map(|s| s.q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub s_a: usize,
    pub s_b: usize,
    /// Every candidate pair in lexicographic `(j, k)` order.
    pub cells: Vec<CellOutcome>,
    /// Index into `cells` of the winner.
    pub best: Option<usize>,
}

impl SolveOutcome {
    pub fn best_cell(&self) -> Option<&CellOutcome> {
        self.best.map(|i| &self.cells[i])
    }

    pub fn best_solution(&self) -> Option<&CellSolution> {
        self.best_cell().and_then(|c| c.solution.as_ref())
    }

    /// Best ratio value: energy efficiency, or throughput for the throughput
    /// maximizing scheme.
    pub fn best_q(&self) -> Option<f64> {
        self.best_solution().map(|s| s.q)
    }

    /// Energy efficiency of the winning allocation as scored by the link model.
    pub fn best_ee(&self) -> Option<f64> {
        self.best_solution().map(|s| s.report.ee_bits_per_joule)
    }

    pub fn is_feasible(&self) -> bool {
        self.best.is_some()
    }
}

/// Dinkelbach iteration for one pair of the proposed scheme.
pub fn solve_p2(
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    j: usize,
    k: usize,
    settings: &SolveSettings,
) -> CellOutcome {
    solve_cell(params, channel, curve, j, k, Ratio::EnergyEfficiency, Restriction::None, settings)
}

/// Dinkelbach iteration for one pair under any ratio and restriction.
#[allow(clippy::too_many_arguments)]
pub fn solve_cell(
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    j: usize,
    k: usize,
    ratio: Ratio,
    restriction: Restriction,
    settings: &SolveSettings,
) -> CellOutcome {
    let base = match build_with(params, channel, curve, j, k, 0.0, ratio, restriction, settings.margins) {
        Ok(spec) => spec,
        Err(_) => return CellOutcome::without_solution(j, k, CellStatus::Empty),
    };
    let start = {
        let prog = CellProgram::new(&base);
        match barrier::phase1(&prog, &prog.reduce(&base.initial_point()), &settings.barrier) {
            PhaseOne::Feasible(z) => z,
            PhaseOne::Infeasible { .. } => return CellOutcome::without_solution(j, k, CellStatus::Infeasible),
        }
    };

    let mut q = 0.0;
    let mut trace = Vec::new();
    let mut solver_trace = Vec::new();
    let mut status = CellStatus::MaxIterations;
    let mut last = None;
    for iter in 0..settings.max_iter.max(1) {
        let spec = SubproblemSpec { q, ..base.clone() };
        let prog = CellProgram::new(&spec);
        let sol = barrier::solve(&prog, &start, &settings.barrier);
        solver_trace.extend(sol.trace.iter().copied());
        let v = prog.expand(&sol.x);
        let f_q = spec.objective(&v).0;
        let num = spec.numerator(&v);
        let den = spec.denominator(&v);
        trace.push(TraceEntry { iter, q, f_q });
        let done = f_q < settings.tolerance(q, den);
        last = Some((v, num / den, f_q, sol.status));
        if done {
            status = CellStatus::Converged;
            break;
        }
        q = num / den;
    }

    let (decision, q_star, f_final, barrier_status) = last.expect("at least one iteration");
    let mut allocation = recover_allocation(&decision);
    if let Restriction::EqualPs(rho) | Restriction::EqualBoth(rho) = restriction {
        allocation.rho_a = rho;
        allocation.rho_b = rho;
    }
    let report = match link_model::evaluate(&allocation, channel, params, curve) {
        Ok(r) => r,
        Err(_) => return CellOutcome::without_solution(j, k, CellStatus::Infeasible),
    };
    CellOutcome {
        j,
        k,
        status,
        solution: Some(CellSolution {
            decision,
            allocation,
            q: q_star,
            f_final,
            report,
            barrier_status,
        }),
        trace,
        solver_trace,
    }
}

/// Optimal value `F(q)` of the parametric program of the proposed scheme in
/// cell `(j, k)`, or `None` when the cell has no strictly feasible point.
pub fn parametric_value(
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    j: usize,
    k: usize,
    q: f64,
    settings: &SolveSettings,
) -> Option<f64> {
    let spec = build_with(
        params,
        channel,
        curve,
        j,
        k,
        q,
        Ratio::EnergyEfficiency,
        Restriction::None,
        settings.margins,
    )
    .ok()?;
    let prog = CellProgram::new(&spec);
    let sol = barrier::solve_from(&prog, &prog.reduce(&spec.initial_point()), &settings.barrier)?;
    Some(spec.objective(&prog.expand(&sol.x)).0)
}

/// Highest reachable segments `(s_A, s_B)` at full transmit power.
pub fn segment_caps(params: &SystemParams, channel: &ChannelRealization, curve: &EhCurve) -> Result<(usize, usize)> {
    let p = params.max_tx_power_w;
    Ok((curve.max_segment(p * channel.h2_a)?, curve.max_segment(p * channel.h2_b)?))
}

/// Candidate pairs `j <= s_A`, `k <= s_B`, `(j, k) != (0, 0)` in lexicographic order.
pub fn candidate_cells(s_a: usize, s_b: usize) -> Vec<(usize, usize)> {
    (0..=s_a)
        .flat_map(|j| (0..=s_b).map(move |k| (j, k)))
        .filter(|&(j, k)| j + k > 0)
        .collect()
}

/// The three-step procedure for the proposed scheme.
pub fn solve_p1(
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    settings: &SolveSettings,
) -> Result<SolveOutcome> {
    solve_all_cells(params, channel, curve, Ratio::EnergyEfficiency, Restriction::None, settings)
}

/// Runs every candidate pair and keeps the one with the largest ratio value.
/// Ties go to the lexicographically smallest pair.
pub fn solve_all_cells(
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    ratio: Ratio,
    restriction: Restriction,
    settings: &SolveSettings,
) -> Result<SolveOutcome> {
    params.validate()?;
    settings.barrier.validate().map_err(|reason| Error::InvalidParameter {
        name: "solver settings",
        reason,
    })?;
    let (s_a, s_b) = segment_caps(params, channel, curve)?;
    let pairs = candidate_cells(s_a, s_b);
    let cells = par::map_slice(settings.exec, &pairs, |&(j, k)| {
        solve_cell(params, channel, curve, j, k, ratio, restriction, settings)
    });
    let best = pick_best(&cells);
    Ok(SolveOutcome { s_a, s_b, cells, best })
}

fn pick_best(cells: &[CellOutcome]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cells.iter().enumerate() {
        if let Some(q) = c.q() {
            if best.is_none_or(|(_, b)| q > b) {
                best = Some((i, q));
            }
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::realize_channel;

    fn fig2() -> (SystemParams, ChannelRealization, EhCurve) {
        let p = SystemParams::default();
        let ch = realize_channel(&p, 1.0571, 1.4131).unwrap();
        (p, ch, EhCurve::reference())
    }

    #[test]
    fn candidate_count_for_fig2_caps() {
        let (p, ch, c) = fig2();
        assert_eq!(segment_caps(&p, &ch, &c).unwrap(), (4, 3));
        assert_eq!(candidate_cells(4, 3).len(), 19);
        assert_eq!(candidate_cells(0, 0).len(), 0);
    }

    #[test]
    fn first_parametric_optimum_is_positive() {
        let (p, ch, c) = fig2();
        let out = solve_p2(&p, &ch, &c, 2, 1, &SolveSettings::default());
        assert_eq!(out.status, CellStatus::Converged);
        assert_eq!(out.trace[0].q, 0.0);
        assert!(out.trace[0].f_q > 0.0);
    }

    #[test]
    fn q_is_nondecreasing_and_matches_link_model() {
        let (p, ch, c) = fig2();
        let settings = SolveSettings::default();
        for (j, k) in [(1, 1), (4, 0), (3, 3), (0, 2)] {
            let out = solve_p2(&p, &ch, &c, j, k, &settings);
            let Some(sol) = &out.solution else { continue };
            for w in out.trace.windows(2) {
                assert!(w[1].q >= w[0].q, "({j},{k}) {:?}", out.trace);
            }
            let ee = sol.report.ee_bits_per_joule;
            assert!(((ee - sol.q) / sol.q).abs() < 1e-6, "({j},{k}) ee={ee} q={}", sol.q);
            assert_eq!((sol.report.segment_a, sol.report.segment_b), (j, k));
        }
    }

    #[test]
    fn zero_channel_is_globally_infeasible() {
        let p = SystemParams::default();
        let ch = realize_channel(&p, 0.0, 0.0).unwrap();
        let out = solve_p1(&p, &ch, &EhCurve::reference(), &SolveSettings::default()).unwrap();
        assert!(!out.is_feasible());
        assert!(out.cells.is_empty());
    }

    #[test]
    fn winner_dominates_every_cell() {
        let (p, ch, c) = fig2();
        let out = solve_p1(&p, &ch, &c, &SolveSettings::default()).unwrap();
        assert_eq!(out.cells.len(), 19);
        let best = out.best_q().unwrap();
        for cell in &out.cells {
            if let Some(q) = cell.q() {
                assert!(q <= best);
            }
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let (p, ch, c) = fig2();
        let par = solve_p1(&p, &ch, &c, &SolveSettings { exec: Exec::Parallel, ..Default::default() }).unwrap();
        let seq = solve_p1(&p, &ch, &c, &SolveSettings { exec: Exec::Sequential, ..Default::default() }).unwrap();
        assert_eq!(par, seq);
    }
}
