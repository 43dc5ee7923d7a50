//! Physical evaluation of an allocation: per-hop rates, harvested energy,
//! relay power, end-to-end rates, consumed energy and energy efficiency.
//!
//! Every solver result is re-scored here, so this module is written directly
//! from the system model and shares no code with the convex reformulation.

use crate::eh_model::EhCurve;
use crate::error::Result;
use crate::scenario::{ChannelRealization, SystemParams};

/// Transmit powers, time fraction and power-splitting ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub p_a_w: f64,
    pub p_b_w: f64,
    /// Share of the block used by each source-to-relay slot.
    pub beta: f64,
    /// Fraction of the received power sent to the harvester.
    pub rho_a: f64,
    pub rho_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceReport {
    pub tau_ar_bits: f64,
    pub tau_br_bits: f64,
    pub e_total_j: f64,
    pub p_r_w: f64,
    pub tau_ra_bits: f64,
    pub tau_rb_bits: f64,
    pub r_ab_bits: f64,
    pub r_ba_bits: f64,
    pub energy_j: f64,
    pub ee_bits_per_joule: f64,
    pub segment_a: usize,
    pub segment_b: usize,
}

impl PerformanceReport {
    /// Bits delivered per block in both directions.
    pub fn throughput_bits(&self) -> f64 {
        self.r_ab_bits + self.r_ba_bits
    }
}

/// Received RF powers at the harvester, `rho_i * P_i * |h_i|^2`.
pub fn received_rf_powers(alloc: &Allocation, channel: &ChannelRealization) -> (f64, f64) {
    (
        alloc.rho_a * alloc.p_a_w * channel.h2_a,
        alloc.rho_b * alloc.p_b_w * channel.h2_b,
    )
}

/// Energy collected at the relay over both source slots.
pub fn harvested_energy(
    alloc: &Allocation,
    channel: &ChannelRealization,
    params: &SystemParams,
    curve: &EhCurve,
) -> Result<f64> {
    let (rf_a, rf_b) = received_rf_powers(alloc, channel);
    let slot = alloc.beta * params.block_duration_s;
    Ok(slot * (curve.harvested_power(rf_a)? + curve.harvested_power(rf_b)?))
}

pub fn evaluate(
    alloc: &Allocation,
    channel: &ChannelRealization,
    params: &SystemParams,
    curve: &EhCurve,
) -> Result<PerformanceReport> {
    let t = params.block_duration_s;
    let w = params.bandwidth_hz;
    let noise = params.noise_power();
    let beta = alloc.beta;
    let relay_time = (1.0 - 2.0 * beta) * t;

    let info_snr = |p: f64, h2: f64, rho: f64| p * h2 * (1.0 - rho) / noise;
    let tau_ar = beta * t * w * (1.0 + info_snr(alloc.p_a_w, channel.h2_a, alloc.rho_a)).log2();
    let tau_br = beta * t * w * (1.0 + info_snr(alloc.p_b_w, channel.h2_b, alloc.rho_b)).log2();

    let (rf_a, rf_b) = received_rf_powers(alloc, channel);
    let segment_a = curve.segment_of(rf_a)?;
    let segment_b = curve.segment_of(rf_b)?;
    let e_total = harvested_energy(alloc, channel, params, curve)?;
    let p_r = e_total / relay_time;

    // The relay splits P_R evenly over the two decoded messages; each
    // destination cancels its own message before decoding the other.
    let tau_ra = relay_time * w * (1.0 + p_r * channel.h2_a / (2.0 * noise)).log2();
    let tau_rb = relay_time * w * (1.0 + p_r * channel.h2_b / (2.0 * noise)).log2();

    let r_ab = tau_ar.min(tau_rb);
    let r_ba = tau_br.min(tau_ra);

    let eps = params.amp_efficiency;
    let energy = beta * t * (alloc.p_a_w / eps + alloc.p_b_w / eps + params.circuit_tx_power_w)
        + 2.0 * params.circuit_rx_power_w * relay_time;

    Ok(PerformanceReport {
        tau_ar_bits: tau_ar,
        tau_br_bits: tau_br,
        e_total_j: e_total,
        p_r_w: p_r,
        tau_ra_bits: tau_ra,
        tau_rb_bits: tau_rb,
        r_ab_bits: r_ab,
        r_ba_bits: r_ba,
        energy_j: energy,
        ee_bits_per_joule: (r_ab + r_ba) / energy,
        segment_a,
        segment_b,
    })
}

/// Pass/fail of each original constraint for one allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    /// `R_AB >= R_min * T`
    pub c1: bool,
    /// `R_BA >= R_min * T`
    pub c2: bool,
    /// `0 < P_i <= P_max`
    pub c3: bool,
    /// `0 < beta < 0.5`
    pub c4: bool,
    /// `0 < rho_i < 1`
    pub c5: bool,
    pub segment_a: usize,
    pub segment_b: usize,
}

impl FeasibilityReport {
    pub fn all(&self) -> bool {
        self.c1 && self.c2 && self.c3 && self.c4 && self.c5
    }
}

/// Exact constraint check (no tolerance).
pub fn check_constraints(
    alloc: &Allocation,
    channel: &ChannelRealization,
    params: &SystemParams,
    curve: &EhCurve,
    r_min: f64,
) -> Result<FeasibilityReport> {
    check_constraints_within(alloc, channel, params, curve, r_min, 0.0)
}

/// Constraint check allowing a relative slack `rel_tol` on the rate floors
/// and the power cap.
pub fn check_constraints_within(
    alloc: &Allocation,
    channel: &ChannelRealization,
    params: &SystemParams,
    curve: &EhCurve,
    r_min: f64,
    rel_tol: f64,
) -> Result<FeasibilityReport> {
    let c3 = [alloc.p_a_w, alloc.p_b_w]
        .iter()
        .all(|&p| p > 0.0 && p <= params.max_tx_power_w * (1.0 + rel_tol));
    let c4 = alloc.beta > 0.0 && alloc.beta < 0.5;
    let c5 = [alloc.rho_a, alloc.rho_b].iter().all(|&r| r > 0.0 && r < 1.0);
    // Rates are undefined outside the C3-C5 box.
    if !(c3 && c4 && c5) {
        return Ok(FeasibilityReport {
            c1: false,
            c2: false,
            c3,
            c4,
            c5,
            segment_a: 0,
            segment_b: 0,
        });
    }
    let rep = evaluate(alloc, channel, params, curve)?;
    let floor = r_min * params.block_duration_s * (1.0 - rel_tol);
    Ok(FeasibilityReport {
        c1: rep.r_ab_bits >= floor,
        c2: rep.r_ba_bits >= floor,
        c3,
        c4,
        c5,
        segment_a: rep.segment_a,
        segment_b: rep.segment_b,
    })
}
