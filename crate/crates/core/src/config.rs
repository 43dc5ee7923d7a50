//! Run configuration: flat `key = value` text, `#` comments, comma lists.
//!
//! Powers are given in dBm and converted to watts on load. Harvester
//! thresholds and intercepts are in microwatts; `inf` closes the threshold list.
//!
//! ```text
//! # default network, two sweep points
//! p_max_dbm = 30
//! sweep_p_max_dbm = 20, 30
//! scheme = proposed, equal_power
//! ```

use std::collections::HashSet;
use std::path::PathBuf;

use crate::baselines::{Scheme, DEFAULT_GRID_SIZE};
use crate::dinkelbach::SolveSettings;
use crate::eh_model::{EhCurve, UW};
use crate::error::{Error, Result};
use crate::oracle::GridSpec;
use crate::scenario::{dbm_to_watts, SystemParams};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: SystemParams,
    /// Only the structural checks have been run; see
    /// [`EhCurve::invariant_violations`].
    pub curve: EhCurve,
    /// `None` lets each command pick its own default.
    pub schemes: Option<Vec<Scheme>>,
    pub sweep_p_max_dbm: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Fixed small-scale gains; otherwise drawn from the seed.
    pub fading: Option<(f64, f64)>,
    pub solver: SolveSettings,
    pub oracle: GridSpec,
    pub grid_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: SystemParams::default(),
            curve: EhCurve::reference(),
            schemes: None,
            sweep_p_max_dbm: vec![20.0, 25.0, 30.0],
            trials: 100,
            seed: 1,
            output: None,
            fading: None,
            solver: SolveSettings::default(),
            oracle: GridSpec::default(),
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Entry<'_> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Config {
            line: self.line,
            key: self.key.to_string(),
            reason: reason.into(),
        }
    }

    fn number(&self) -> Result<f64> {
        parse_f64(self.value).map_err(|r| self.err(r))
    }

    fn finite(&self) -> Result<f64> {
        let v = self.number()?;
        if v.is_finite() { Ok(v) } else { Err(self.err("must be finite")) }
    }

    fn positive(&self) -> Result<f64> {
        let v = self.finite()?;
        if v > 0.0 { Ok(v) } else { Err(self.err(format!("must be > 0, got {v}"))) }
    }

    fn nonneg(&self) -> Result<f64> {
        let v = self.finite()?;
        if v >= 0.0 { Ok(v) } else { Err(self.err(format!("must be >= 0, got {v}"))) }
    }

    fn count(&self) -> Result<usize> {
        self.value
            .parse::<usize>()
            .map_err(|e| self.err(format!("expected a nonnegative integer: {e}")))
    }

    fn list(&self) -> Result<Vec<f64>> {
        self.value
            .split(',')
            .map(|s| parse_f64(s.trim()).map_err(|r| self.err(r)))
            .collect()
    }
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    match s {
        "inf" | "+inf" => Ok(f64::INFINITY),
        _ => s
            .parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| format!("`{s}` is not a number")),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        let mut eh_thresholds: Option<(usize, Vec<f64>)> = None;
        let mut eh_slopes: Option<Vec<f64>> = None;
        let mut eh_intercepts: Option<Vec<f64>> = None;
        let mut eh_saturation: Option<f64> = None;
        let mut g2_a = None;
        let mut g2_b = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(Error::Config {
                    line,
                    key: body.to_string(),
                    reason: "expected `key = value`".into(),
                });
            };
            let e = Entry { line, key: key.trim(), value: value.trim() };
            if e.value.is_empty() {
                return Err(e.err("missing value"));
            }
            if !seen.insert(e.key.to_string()) {
                return Err(e.err("duplicate key"));
            }
            let p = &mut cfg.params;
            match e.key {
                "bandwidth_hz" => p.bandwidth_hz = e.positive()?,
                "noise_psd_dbm_hz" => p.noise_psd_w_per_hz = dbm_to_watts(e.finite()?),
                "block_duration_s" => p.block_duration_s = e.positive()?,
                "amp_efficiency" => {
                    let v = e.positive()?;
                    if v > 1.0 {
                        return Err(e.err(format!("must be <= 1, got {v}")));
                    }
                    p.amp_efficiency = v;
                }
                "p_ct_dbm" => p.circuit_tx_power_w = dbm_to_watts(e.finite()?),
                "p_cr_dbm" => p.circuit_rx_power_w = dbm_to_watts(e.finite()?),
                "p_max_dbm" => p.max_tx_power_w = dbm_to_watts(e.finite()?),
                "r_min_bps" => p.min_rate_bps = e.positive()?,
                "alpha" => p.pathloss_exponent = e.positive()?,
                "d_a_m" => p.dist_a_m = e.positive()?,
                "d_b_m" => p.dist_b_m = e.positive()?,
                "eh_thresholds_uw" => eh_thresholds = Some((line, e.list()?)),
                "eh_slopes" => eh_slopes = Some(e.list()?),
                "eh_intercepts_uw" => eh_intercepts = Some(e.list()?),
                "eh_saturation_uw" => eh_saturation = Some(e.positive()?),
                "scheme" => {
                    let mut out = Vec::new();
                    for name in e.value.split(',').map(str::trim) {
                        if name == "all" {
                            out.extend(Scheme::ALL);
                        } else {
                            out.push(name.parse::<Scheme>().map_err(|r| e.err(r))?);
                        }
                    }
                    out.sort();
                    out.dedup();
                    cfg.schemes = Some(out);
                }
                "sweep_p_max_dbm" => {
                    let v = e.list()?;
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(e.err("sweep points must be finite"));
                    }
                    cfg.sweep_p_max_dbm = v;
                }
                "trials" => {
                    cfg.trials = e.count()?;
                    if cfg.trials == 0 {
                        return Err(e.err("must be >= 1"));
                    }
                }
                "seed" => {
                    cfg.seed = e
                        .value
                        .parse::<u64>()
                        .map_err(|err| e.err(format!("expected an unsigned integer: {err}")))?
                }
                "output" => cfg.output = Some(PathBuf::from(e.value)),
                "g2_a" => g2_a = Some(e.nonneg()?),
                "g2_b" => g2_b = Some(e.nonneg()?),
                "dinkelbach_eps" => cfg.solver.eps_rel = e.positive()?,
                "dinkelbach_max_iter" => {
                    cfg.solver.max_iter = e.count()?;
                    if cfg.solver.max_iter == 0 {
                        return Err(e.err("must be >= 1"));
                    }
                }
                "oracle_points" => cfg.oracle.points = e.count()?,
                "oracle_rounds" => cfg.oracle.rounds = e.count()?,
                "oracle_shrink" => cfg.oracle.shrink = e.finite()?,
                "grid_size" => {
                    cfg.grid_size = e.count()?;
                    if cfg.grid_size < 2 {
                        return Err(e.err("must be >= 2"));
                    }
                }
                _ => return Err(e.err("unknown key")),
            }
        }

        cfg.fading = match (g2_a, g2_b) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => {
                return Err(Error::Config {
                    line: 0,
                    key: "g2_a/g2_b".into(),
                    reason: "give both gains or neither".into(),
                })
            }
        };

        if eh_thresholds.is_some() || eh_slopes.is_some() || eh_intercepts.is_some() || eh_saturation.is_some() {
            let reference = EhCurve::reference();
            let (line, thresholds) = eh_thresholds
                .unwrap_or_else(|| (0, reference.thresholds().iter().map(|t| t / UW).collect()));
            let slopes = eh_slopes.unwrap_or_else(|| reference.slopes().to_vec());
            let intercepts = eh_intercepts.unwrap_or_else(|| reference.intercepts().iter().map(|b| b / UW).collect());
            let saturation = eh_saturation.unwrap_or(reference.saturation_power() / UW);
            cfg.curve = EhCurve::from_parts(
                thresholds.iter().map(|t| t * UW).collect(),
                slopes,
                intercepts.iter().map(|b| b * UW).collect(),
                saturation * UW,
            )
            .map_err(|err| Error::Config {
                line,
                key: "eh_*".into(),
                reason: err.to_string(),
            })?;
        }

        cfg.params.validate().map_err(|err| Error::Config {
            line: 0,
            key: "params".into(),
            reason: err.to_string(),
        })?;
        cfg.oracle.validate().map_err(|err| Error::Config {
            line: 0,
            key: "oracle_*".into(),
            reason: err.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
