//! System parameters, unit conversions and channel realizations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Link-budget and energy-model constants, all in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub bandwidth_hz: f64,
    pub noise_psd_w_per_hz: f64,
    /// Block duration `T`. Rates and per-block bit counts coincide at `T = 1`.
    pub block_duration_s: f64,
    pub amp_efficiency: f64,
    pub circuit_tx_power_w: f64,
    pub circuit_rx_power_w: f64,
    pub max_tx_power_w: f64,
    pub min_rate_bps: f64,
    pub pathloss_exponent: f64,
    pub dist_a_m: f64,
    pub dist_b_m: f64,
}

impl Default for SystemParams {
    /// The simulation setup: 10 kHz, -120 dBm/Hz, 35 % amplifiers,
    /// 10 dBm circuit powers, 30 dBm cap, 30 kbps floor, alpha = 3, 5 m / 15 m.
    fn default() -> Self {
        Self {
            bandwidth_hz: 10e3,
            noise_psd_w_per_hz: dbm_to_watts(-120.0),
            block_duration_s: 1.0,
            amp_efficiency: 0.35,
            circuit_tx_power_w: dbm_to_watts(10.0),
            circuit_rx_power_w: dbm_to_watts(10.0),
            max_tx_power_w: dbm_to_watts(30.0),
            min_rate_bps: 30e3,
            pathloss_exponent: 3.0,
            dist_a_m: 5.0,
            dist_b_m: 15.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, f64); 11] = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_psd", self.noise_psd_w_per_hz),
            ("block_duration_s", self.block_duration_s),
            ("amp_efficiency", self.amp_efficiency),
            ("p_ct", self.circuit_tx_power_w),
            ("p_cr", self.circuit_rx_power_w),
            ("p_max", self.max_tx_power_w),
            ("r_min_bps", self.min_rate_bps),
            ("alpha", self.pathloss_exponent),
            ("d_a_m", self.dist_a_m),
            ("d_b_m", self.dist_b_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        if self.amp_efficiency > 1.0 {
            return Err(Error::InvalidParameter {
                name: "amp_efficiency",
                reason: format!("must be <= 1, got {}", self.amp_efficiency),
            });
        }
        Ok(())
    }

    /// `W * sigma^2`, the noise power in every SNR denominator.
    pub fn noise_power(&self) -> f64 {
        self.bandwidth_hz * self.noise_psd_w_per_hz
    }

    pub fn with_max_tx_power_dbm(mut self, dbm: f64) -> Self {
        self.max_tx_power_w = dbm_to_watts(dbm);
        self
    }
}

/// Small-scale gains and the resulting composite channel power gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    pub g2_a: f64,
    pub g2_b: f64,
    pub h2_a: f64,
    pub h2_b: f64,
}

/// Applies `d^-alpha` pathloss to the small-scale power gains.
pub fn realize_channel(params: &SystemParams, g2_a: f64, g2_b: f64) -> Result<ChannelRealization> {
    for (name, g) in [("g2_a", g2_a), ("g2_b", g2_b)] {
        if !(g.is_finite() && g >= 0.0) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("gain must be finite and >= 0, got {g}"),
            });
        }
    }
    let pl = |d: f64| d.powf(-params.pathloss_exponent);
    Ok(ChannelRealization {
        g2_a,
        g2_b,
        h2_a: g2_a * pl(params.dist_a_m),
        h2_b: g2_b * pl(params.dist_b_m),
    })
}

/// Deterministic generator for trial `trial` of a run seeded with `master_seed`.
///
/// Each trial gets its own ChaCha stream so results do not depend on the order
/// in which trials are scheduled.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Unit-mean exponential power gains for both links (Rayleigh amplitudes).
pub fn draw_fading<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let a: f64 = Exp1.sample(rng);
    let b: f64 = Exp1.sample(rng);
    (a, b)
}
