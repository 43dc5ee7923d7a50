//! Brute-force grid search over the original variables.
//!
//! Evaluates the link model on a five-dimensional tensor grid over
//! `(P_A, P_B, beta, rho_A, rho_B)`, keeps the best point that passes the
//! exact constraint check, then shrinks the box around it and repeats. Nothing
//! here knows about segments, convexity or the change of variables, which is
//! what makes it useful as an independent check on the solver.

use crate::eh_model::EhCurve;
use crate::error::{Error, Result};
use crate::link_model::{check_constraints, evaluate, Allocation};
use crate::par::{self, Exec};
use crate::scenario::{ChannelRealization, SystemParams};

/// Lower end of the power axes as a fraction of `P_max`.
const POWER_FLOOR: f64 = 1e-4;
/// Distance kept from the open ends of the `beta` and `rho` ranges.
const OPEN_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Points per dimension.
    pub points: usize,
    /// Refinement rounds after the first full-range scan.
    pub rounds: usize,
    /// Box width multiplier between rounds.
    pub shrink: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 17,
            rounds: 3,
            shrink: 0.35,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 3 {
            return Err(Error::InvalidParameter {
                name: "oracle_points",
                reason: format!("need at least 3, got {}", self.points),
            });
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidParameter {
                name: "oracle_shrink",
                reason: format!("must lie in (0, 1), got {}", self.shrink),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub allocation: Allocation,
    pub ee: f64,
    /// Incumbent value after the full scan and after each refinement.
    pub round_best: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Spacing {
    Linear,
    /// Uniform in `ln v`.
    Log,
    /// Uniform in `ln(v / (1 - v))`.
    Logit,
}

impl Spacing {
    fn axis_at(self, v: f64) -> f64 {
        match self {
            Spacing::Linear => v,
            Spacing::Log => v.ln(),
            Spacing::Logit => (v / (1.0 - v)).ln(),
        }
    }

    fn value_at(self, u: f64) -> f64 {
        match self {
            Spacing::Linear => u,
            Spacing::Log => u.exp(),
            Spacing::Logit => 1.0 / (1.0 + (-u).exp()),
        }
    }
}

/// One axis of the search box, stored in transformed coordinates.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    min: f64,
    max: f64,
    spacing: Spacing,
}

impl Axis {
    fn new(spacing: Spacing, min: f64, max: f64) -> Self {
        let (min, max) = (spacing.axis_at(min), spacing.axis_at(max));
        Self { lo: min, hi: max, min, max, spacing }
    }

    fn values(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| self.spacing.value_at(self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64))
            .collect()
    }

    fn recenter(&self, value: f64, shrink: f64) -> Self {
        let c = self.spacing.axis_at(value);
        let half = 0.5 * shrink * (self.hi - self.lo);
        let (mut lo, mut hi) = (c - half, c + half);
        if lo < self.min {
            hi += self.min - lo;
            lo = self.min;
        }
        if hi > self.max {
            lo -= hi - self.max;
            hi = self.max;
        }
        Self {
            lo: lo.max(self.min),
            hi,
            ..*self
        }
    }
}

fn initial_box(params: &SystemParams) -> [Axis; 5] {
    let p_max = params.max_tx_power_w;
    let power = Axis::new(Spacing::Log, POWER_FLOOR * p_max, p_max);
    let ratio = Axis::new(Spacing::Logit, OPEN_MARGIN, 1.0 - OPEN_MARGIN);
    [power, power, Axis::new(Spacing::Linear, OPEN_MARGIN, 0.5 - OPEN_MARGIN), ratio, ratio]
}

/// Best feasible point of one grid, ties to the smallest flat index.
fn scan(
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    axes: &[Axis; 5],
    n: usize,
    exec: Exec,
    stop_at_first: bool,
) -> Result<Option<(f64, Allocation)>> {
    let vals: Vec<Vec<f64>> = axes.iter().map(|a| a.values(n)).collect();
    let rows = par::map_range(exec, n * n, |outer| -> Result<Option<(f64, Allocation)>> {
        let (p_a, p_b) = (vals[0][outer / n], vals[1][outer % n]);
        let mut best: Option<(f64, Allocation)> = None;
        for &beta in &vals[2] {
            for &rho_a in &vals[3] {
                for &rho_b in &vals[4] {
                    let alloc = Allocation { p_a_w: p_a, p_b_w: p_b, beta, rho_a, rho_b };
                    if !check_constraints(&alloc, channel, params, curve, params.min_rate_bps)?.all() {
                        continue;
                    }
                    let ee = evaluate(&alloc, channel, params, curve)?.ee_bits_per_joule;
                    if best.is_none_or(|(b, _)| ee > b) {
                        best = Some((ee, alloc));
                        if stop_at_first {
                            return Ok(best);
                        }
                    }
                }
            }
        }
        Ok(best)
    });
    let mut best: Option<(f64, Allocation)> = None;
    for row in rows {
        if let Some((ee, alloc)) = row? {
            if best.is_none_or(|(b, _)| ee > b) {
                best = Some((ee, alloc));
            }
        }
    }
    Ok(best)
}

pub fn grid_search(
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    grid: &GridSpec,
    exec: Exec,
) -> Result<Option<OracleResult>> {
    params.validate()?;
    grid.validate()?;
    let mut axes = initial_box(params);
    let mut incumbent: Option<(f64, Allocation)> = None;
    let mut round_best = Vec::with_capacity(grid.rounds + 1);
    for _ in 0..=grid.rounds {
        if let Some((ee, alloc)) = scan(params, channel, curve, &axes, grid.points, exec, false)? {
            if incumbent.is_none_or(|(b, _)| ee > b) {
                incumbent = Some((ee, alloc));
            }
        }
        let Some((ee, a)) = incumbent else {
            return Ok(None);
        };
        round_best.push(ee);
        let centre = [a.p_a_w, a.p_b_w, a.beta, a.rho_a, a.rho_b];
        for (axis, c) in axes.iter_mut().zip(centre) {
            *axis = axis.recenter(c, grid.shrink);
        }
    }
    Ok(incumbent.map(|(ee, allocation)| OracleResult {
        allocation,
        ee,
        round_best,
    }))
}

/// Whether any point of the full-range grid satisfies every constraint.
pub fn feasibility_probe(
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    grid: &GridSpec,
    exec: Exec,
) -> Result<bool> {
    params.validate()?;
    grid.validate()?;
    Ok(scan(params, channel, curve, &initial_box(params), grid.points, exec, true)?.is_some())
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

    const SMALL: GridSpec = GridSpec {
        points: 7,
        rounds: 3,
        shrink: 0.35,
    };

    #[test]
    fn axes_cover_their_range() {
        let a = Axis::new(Spacing::Log, 1e-4, 1.0);
        let v = a.values(5);
        assert!((v[0] - 1e-4).abs() < 1e-16 && (v[4] - 1.0).abs() < 1e-12);
        assert!((v[2] - 1e-2).abs() < 1e-12);
        let r = Axis::new(Spacing::Linear, 0.0, 1.0).recenter(0.95, 0.5);
        assert_eq!((r.lo, r.hi), (0.5, 1.0));
    }

    #[test]
    fn zero_channel_has_no_feasible_point() {
        let p = SystemParams::default();
        let ch = realize_channel(&p, 0.0, 0.0).unwrap();
        let c = EhCurve::reference();
        assert!(grid_search(&p, &ch, &c, &SMALL, Exec::default()).unwrap().is_none());
        assert!(!feasibility_probe(&p, &ch, &c, &SMALL, Exec::default()).unwrap());
    }

    #[test]
    fn incumbent_improves_and_is_exactly_feasible() {
        let (p, ch, c) = fig2();
        let r = grid_search(&p, &ch, &c, &SMALL, Exec::default()).unwrap().unwrap();
        assert_eq!(r.round_best.len(), 4);
        assert!(r.round_best.windows(2).all(|w| w[1] >= w[0]));
        assert!(check_constraints(&r.allocation, &ch, &p, &c, p.min_rate_bps).unwrap().all());
    }

    #[test]
    fn tiny_rate_floor_is_feasible_and_huge_one_is_not() {
        let (p, ch, c) = fig2();
        let easy = SystemParams { min_rate_bps: 1e-9, ..p };
        assert!(feasibility_probe(&easy, &ch, &c, &SMALL, Exec::default()).unwrap());
        // above what the stronger hop supports at full power with no splitting
        let cap = 0.5 * p.bandwidth_hz * (1.0 + p.max_tx_power_w * ch.h2_a / p.noise_power()).log2();
        let hard = SystemParams { min_rate_bps: 2.0 * cap, ..p };
        assert!(!feasibility_probe(&hard, &ch, &c, &SMALL, Exec::default()).unwrap());
    }

    #[test]
    fn bad_grid_is_rejected() {
        assert!(GridSpec { points: 2, ..Default::default() }.validate().is_err());
        assert!(GridSpec { shrink: 1.0, ..Default::default() }.validate().is_err());
        assert!(GridSpec { rounds: 0, ..Default::default() }.validate().is_ok());
    }
}
