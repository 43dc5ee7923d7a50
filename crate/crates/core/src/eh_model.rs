//! Piecewise-linear energy-harvesting curve.
//!
//! The harvester maps received RF power `P_rf` to harvested DC power through
//! `N + 1` linear pieces `a_j * P_rf + b_j`, selected by the thresholds
//! `0 = P_th^0 < P_th^1 < ... < P_th^N < P_th^{N+1} = +inf`. Segment 0 is the
//! dead zone (`a_0 = b_0 = 0`) and segment `N` is saturation (`a_N = 0`,
//! `b_N = P_m`).
//!
//! Everything is stored in watts. A power that sits exactly on an interior
//! threshold belongs to the higher-indexed segment.

use crate::error::{Error, Result};

/// Microwatts to watts.
pub const UW: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EhCurve {
    thresholds: Vec<f64>,
    slopes: Vec<f64>,
    intercepts: Vec<f64>,
    saturation_power: f64,
}

impl EhCurve {
    /// Builds a curve and checks every invariant of the model.
    ///
    /// `thresholds` holds `N + 2` values in watts with a trailing `+inf`;
    /// `slopes` and `intercepts` (watts) hold `N + 1` values.
    pub fn new(
        thresholds: Vec<f64>,
        slopes: Vec<f64>,
        intercepts: Vec<f64>,
        saturation_power: f64,
    ) -> Result<Self> {
        let curve = Self::from_parts(thresholds, slopes, intercepts, saturation_power)?;
        if let Some(first) = curve.invariant_violations().into_iter().next() {
            return Err(Error::InvalidCurve(first));
        }
        Ok(curve)
    }

    /// Builds a curve with only the structural checks (lengths, ordering,
    /// sentinels). Used by validation tooling that wants to report invariant
    /// violations instead of refusing the input.
    pub fn from_parts(
        thresholds: Vec<f64>,
        slopes: Vec<f64>,
        intercepts: Vec<f64>,
        saturation_power: f64,
    ) -> Result<Self> {
        if slopes.len() < 2 {
            return Err(Error::InvalidCurve("need at least two segments".into()));
        }
        if slopes.len() != intercepts.len() {
            return Err(Error::InvalidCurve(format!(
                "{} slopes but {} intercepts",
                slopes.len(),
                intercepts.len()
            )));
        }
        if thresholds.len() != slopes.len() + 1 {
            return Err(Error::InvalidCurve(format!(
                "{} thresholds for {} segments, expected {}",
                thresholds.len(),
                slopes.len(),
                slopes.len() + 1
            )));
        }
        if thresholds[0] != 0.0 {
            return Err(Error::InvalidCurve("first threshold must be 0".into()));
        }
        if thresholds[thresholds.len() - 1] != f64::INFINITY {
            return Err(Error::InvalidCurve("last threshold must be +inf".into()));
        }
        if thresholds[..thresholds.len() - 1].iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidCurve("interior thresholds must be finite".into()));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidCurve("thresholds must be strictly increasing".into()));
        }
        if slopes.iter().chain(&intercepts).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve("coefficients must be finite".into()));
        }
        if !(saturation_power.is_finite() && saturation_power > 0.0) {
            return Err(Error::InvalidCurve("saturation power must be positive".into()));
        }
        Ok(Self {
            thresholds,
            slopes,
            intercepts,
            saturation_power,
        })
    }

    /// Same as [`EhCurve::new`] with thresholds, intercepts and saturation in
    /// microwatts. A threshold of `+inf` is passed through unchanged.
    pub fn from_microwatts(
        thresholds_uw: &[f64],
        slopes: &[f64],
        intercepts_uw: &[f64],
        saturation_uw: f64,
    ) -> Result<Self> {
        Self::new(
            thresholds_uw.iter().map(|t| t * UW).collect(),
            slopes.to_vec(),
            intercepts_uw.iter().map(|b| b * UW).collect(),
            saturation_uw * UW,
        )
    }

    /// The measured four-knot harvester used throughout the simulations.
    pub fn reference() -> Self {
        Self::from_microwatts(
            &[0.0, 10.0, 57.68, 230.06, 1000.0, f64::INFINITY],
            &[0.0, 0.3899, 0.6967, 0.1427, 0.0],
            &[0.0, -1.6613, -19.1737, 108.2778, 250.0],
            250.0,
        )
        .expect("reference curve is valid")
    }

    /// Every model invariant this curve breaks, as human-readable messages.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.last_segment();
        for (j, &a) in self.slopes.iter().enumerate() {
            if a < 0.0 {
                out.push(format!("slope a_{j} = {a} is negative; harvest would decrease with input power"));
            }
        }
        if self.slopes[0] != 0.0 || self.intercepts[0] != 0.0 {
            out.push("dead-zone segment must have a_0 = b_0 = 0".into());
        }
        if self.slopes[n] != 0.0 {
            out.push(format!("saturation segment must have a_{n} = 0"));
        }
        if self.intercepts[n] != self.saturation_power {
            out.push(format!("saturation segment must have b_{n} = P_m"));
        }
        for j in 1..n {
            let at_knot = self.slopes[j] * self.thresholds[j] + self.intercepts[j];
            if at_knot < 0.0 {
                out.push(format!("segment {j} is negative at its lower threshold ({at_knot:e} W)"));
            }
        }
        out
    }

    /// Index `N` of the saturation segment.
    pub fn last_segment(&self) -> usize {
        self.slopes.len() - 1
    }

    pub fn segment_count(&self) -> usize {
        self.slopes.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn saturation_power(&self) -> f64 {
        self.saturation_power
    }

    pub fn slope(&self, j: usize) -> f64 {
        self.slopes[j]
    }

    pub fn intercept(&self, j: usize) -> f64 {
        self.intercepts[j]
    }

    /// `[P_th^j, P_th^{j+1})` in watts.
    pub fn segment_bounds(&self, j: usize) -> (f64, f64) {
        (self.thresholds[j], self.thresholds[j + 1])
    }

    /// The segment `j` with `p_rf` in `[P_th^j, P_th^{j+1})`.
    pub fn segment_of(&self, p_rf: f64) -> Result<usize> {
        check_power(p_rf, "received power")?;
        Ok(self.count_reached(p_rf) - 1)
    }

    /// Harvested DC power for a received RF power, in watts.
    pub fn harvested_power(&self, p_rf: f64) -> Result<f64> {
        let j = self.segment_of(p_rf)?;
        Ok(self.segment_output(j, p_rf).max(0.0))
    }

    /// Largest `s` with `p_cap >= P_th^s`, i.e. the highest segment reachable
    /// when the received power can be at most `p_cap`.
    pub fn max_segment(&self, p_cap: f64) -> Result<usize> {
        check_power(p_cap, "power cap")?;
        Ok(self.count_reached(p_cap) - 1)
    }

    /// `a_j * p + b_j` without segment selection.
    pub fn segment_output(&self, j: usize, p: f64) -> f64 {
        if self.slopes[j] == 0.0 {
            self.intercepts[j]
        } else {
            self.slopes[j] * p + self.intercepts[j]
        }
    }

    /// Jump between segments `j` and `j + 1` at their shared knot `P_th^{j+1}`.
    pub fn knot_mismatch(&self, j: usize) -> f64 {
        let knot = self.thresholds[j + 1];
        (self.segment_output(j, knot) - self.segment_output(j + 1, knot)).abs()
    }

    fn count_reached(&self, p: f64) -> usize {
        let finite = &self.thresholds[..self.thresholds.len() - 1];
        finite.partition_point(|&t| t <= p)
    }
}

fn check_power(p: f64, what: &str) -> Result<()> {
    if p.is_nan() || p < 0.0 {
        return Err(Error::Domain(format!("{what} must be >= 0, got {p}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_of_examples() {
        let c = EhCurve::reference();
        assert_eq!(c.segment_of(0.0).unwrap(), 0);
        assert_eq!(c.segment_of(57.68 * UW).unwrap(), 2);
        assert_eq!(c.segment_of(1500.0 * UW).unwrap(), 4);
        assert_eq!(c.segment_of(f64::INFINITY).unwrap(), 4);
    }

    #[test]
    fn negative_and_nan_inputs_are_domain_errors() {
        let c = EhCurve::reference();
        assert!(matches!(c.segment_of(-1e-9), Err(Error::Domain(_))));
        assert!(matches!(c.harvested_power(-1.0), Err(Error::Domain(_))));
        assert!(matches!(c.max_segment(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn harvested_power_examples() {
        let c = EhCurve::reference();
        assert_eq!(c.harvested_power(5.0 * UW).unwrap(), 0.0);
        assert_eq!(c.harvested_power(2000.0 * UW).unwrap(), 250.0 * UW);
        let expected = 0.6967 * 100.0 * UW - 19.1737 * UW;
        let got = c.harvested_power(100.0 * UW).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-12);
        assert!(((got - 50.4963 * UW) / (50.4963 * UW)).abs() < 1e-9);
    }

    #[test]
    fn max_segment_examples() {
        let c = EhCurve::reference();
        assert_eq!(c.max_segment(8456.8 * UW).unwrap(), 4);
        assert_eq!(c.max_segment(418.70 * UW).unwrap(), 3);
        assert_eq!(c.max_segment(0.0).unwrap(), 0);
    }

    #[test]
    fn threshold_midpoints_map_to_their_segment() {
        let c = EhCurve::reference();
        let th = c.thresholds();
        for j in 0..c.last_segment() {
            let mid = 0.5 * (th[j] + th[j + 1]);
            assert_eq!(c.segment_of(mid).unwrap(), j);
        }
        assert_eq!(c.segment_of(2.0 * th[c.last_segment()]).unwrap(), c.last_segment());
    }

    #[test]
    fn interior_knots_nearly_continuous() {
        let c = EhCurve::reference();
        for j in 1..c.last_segment() {
            assert!(c.knot_mismatch(j) <= 1.1 * UW, "knot {j}: {}", c.knot_mismatch(j));
        }
        // the first knot is a genuine jump out of the dead zone
        assert!(c.knot_mismatch(0) > 1.0 * UW);
    }

    #[test]
    fn output_bounded_with_overshoot_tolerance() {
        let c = EhCurve::reference();
        let pm = c.saturation_power();
        for i in 0..20_000 {
            let p = i as f64 * 0.1 * UW;
            let h = c.harvested_power(p).unwrap();
            assert!(h >= 0.0 && h <= pm * 1.005, "p={p} h={h}");
        }
    }

    #[test]
    fn structural_errors() {
        let inf = f64::INFINITY;
        assert!(EhCurve::new(vec![0.0, 1.0, inf], vec![0.0], vec![0.0], 1.0).is_err());
        assert!(EhCurve::new(vec![0.1, 1.0, inf], vec![0.0, 0.0], vec![0.0, 1.0], 1.0).is_err());
        assert!(EhCurve::new(vec![0.0, 1.0, 2.0], vec![0.0, 0.0], vec![0.0, 1.0], 1.0).is_err());
        assert!(EhCurve::new(vec![0.0, 2.0, 1.0, inf], vec![0.0, 0.5, 0.0], vec![0.0, 0.0, 1.0], 1.0).is_err());
        assert!(EhCurve::new(vec![0.0, 1.0, inf], vec![0.0, 0.0], vec![0.0, 1.0], 1.0).is_ok());
    }

    #[test]
    fn negative_slope_is_reported() {
        let c = EhCurve::reference();
        let mut slopes = c.slopes().to_vec();
        slopes[2] = -slopes[2];
        let bad = EhCurve::from_parts(
            c.thresholds().to_vec(),
            slopes.clone(),
            c.intercepts().to_vec(),
            c.saturation_power(),
        )
        .unwrap();
        assert!(bad.invariant_violations().iter().any(|m| m.contains("a_2")));
        assert!(EhCurve::new(c.thresholds().to_vec(), slopes, c.intercepts().to_vec(), c.saturation_power()).is_err());
    }
}
