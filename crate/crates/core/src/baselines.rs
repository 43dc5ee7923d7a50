//! Comparison schemes, all solved under the same constraints and the same
//! segment-pair enumeration as the proposed scheme.
//!
//! Tying the two splitting ratios together is bilinear in `(x, P)`, so for
//! the equal-ratio schemes the common ratio is searched on a grid with a
//! golden-section polish, and the inner problem for a fixed ratio stays convex.

use std::fmt;
use std::str::FromStr;

use crate::dinkelbach::{solve_all_cells, solve_p1, SolveOutcome, SolveSettings};
use crate::eh_model::EhCurve;
use crate::error::{Error, Result};
use crate::par;
use crate::scenario::{ChannelRealization, SystemParams};
use crate::subproblem::{Ratio, Restriction};

pub const DEFAULT_GRID_SIZE: usize = 33;

/// Smallest bracket width of the golden-section polish on the common ratio.
const RHO_TOL: f64 = 1e-9;
/// Grid local maxima within this fraction of the best are polished.
const REFINE_BAND: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    Proposed,
    EqualPower,
    EqualPs,
    EqualBoth,
    ThroughputMax,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Proposed,
        Scheme::EqualPower,
        Scheme::EqualPs,
        Scheme::EqualBoth,
        Scheme::ThroughputMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::EqualPower => "equal_power",
            Scheme::EqualPs => "equal_ps",
            Scheme::EqualBoth => "equal_both",
            Scheme::ThroughputMax => "throughput_max",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

pub fn solve_scheme(
    scheme: Scheme,
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    settings: &SolveSettings,
    grid_size: usize,
) -> Result<SolveOutcome> {
    match scheme {
        Scheme::Proposed => solve_p1(params, channel, curve, settings),
        Scheme::EqualPower => solve_equal_power(params, channel, curve, settings),
        Scheme::EqualPs => solve_equal_ps(params, channel, curve, settings, grid_size),
        Scheme::EqualBoth => solve_equal_both(params, channel, curve, settings, grid_size),
        Scheme::ThroughputMax => solve_throughput_max(params, channel, curve, settings),
    }
}

pub fn solve_equal_power(
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    settings: &SolveSettings,
) -> Result<SolveOutcome> {
    solve_all_cells(params, channel, curve, Ratio::EnergyEfficiency, Restriction::EqualPower, settings)
}

pub fn solve_equal_ps(
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    settings: &SolveSettings,
    grid_size: usize,
) -> Result<SolveOutcome> {
    search_common_ratio(grid_size, settings, |rho| {
        solve_all_cells(params, channel, curve, Ratio::EnergyEfficiency, Restriction::EqualPs(rho), settings)
    })
}

pub fn solve_equal_both(
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    settings: &SolveSettings,
    grid_size: usize,
) -> Result<SolveOutcome> {
    search_common_ratio(grid_size, settings, |rho| {
        solve_all_cells(params, channel, curve, Ratio::EnergyEfficiency, Restriction::EqualBoth(rho), settings)
    })
}

/// Maximizes delivered bits per block; the winner's energy efficiency is
/// available through [`SolveOutcome::best_ee`].
pub fn solve_throughput_max(
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    settings: &SolveSettings,
) -> Result<SolveOutcome> {
    solve_all_cells(params, channel, curve, Ratio::Throughput, Restriction::None, settings)
}

fn score(o: &SolveOutcome) -> f64 {
    o.best_q().unwrap_or(f64::NEG_INFINITY)
}

/// Grid over `m / (grid_size + 1)`, then golden-section on the neighbouring
/// bracket of every grid local maximum close to the best one.
fn search_common_ratio<F>(grid_size: usize, settings: &SolveSettings, eval: F) -> Result<SolveOutcome>
where
    F: Fn(f64) -> Result<SolveOutcome> + Sync + Send,
{
    if grid_size < 2 {
        return Err(Error::InvalidParameter {
            name: "grid_size",
            reason: format!("need at least 2 points, got {grid_size}"),
        });
    }
    let step = 1.0 / (grid_size + 1) as f64;
    let rho_at = |m: usize| m as f64 * step;
    let grid: Vec<SolveOutcome> = par::map_range(settings.exec, grid_size, |i| eval(rho_at(i + 1)))
        .into_iter()
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = grid.iter().map(score).collect();
    let best_grid = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best_grid == f64::NEG_INFINITY {
        return Ok(grid.into_iter().next().expect("grid_size >= 2"));
    }

    let candidates: Vec<usize> = (0..grid_size)
        .filter(|&i| {
            let left = if i > 0 { scores[i - 1] } else { f64::NEG_INFINITY };
            let right = scores.get(i + 1).copied().unwrap_or(f64::NEG_INFINITY);
            scores[i] >= left && scores[i] >= right && scores[i] >= best_grid - REFINE_BAND * best_grid.abs()
        })
        .collect();
    let polished: Vec<SolveOutcome> = par::map_slice(settings.exec, &candidates, |&i| {
        golden_max(rho_at(i), rho_at(i + 2), &grid[i], &eval)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    // Ties keep the earliest: grid order first, then polished points.
    let mut best: Option<SolveOutcome> = None;
    for o in grid.into_iter().chain(polished) {
        if best.as_ref().is_none_or(|b| score(&o) > score(b)) {
            best = Some(o);
        }
    }
    Ok(best.expect("nonempty grid"))
}

fn golden_max<F>(lo: f64, hi: f64, incumbent: &SolveOutcome, eval: &F) -> Result<SolveOutcome>
where
    F: Fn(f64) -> Result<SolveOutcome>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    let mut best = incumbent.clone();
    while b - a > RHO_TOL {
        if score(&fc) >= score(&fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d)?;
        }
        for o in [&fc, &fd] {
            if score(o) > score(&best) {
                best = o.clone();
            }
        }
    }
    Ok(best)
}
