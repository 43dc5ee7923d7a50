//! The convex per-cell program solved inside each Dinkelbach iteration.
//!
//! For a fixed segment pair `(j, k)` and parameter `q`, the fractional
//! problem is rewritten with
//!
//! * `t = (1 - 2 beta) / beta` to decouple the slot lengths from the powers,
//! * `x_i = P_i rho_i`, the power routed to the harvester,
//! * `r_i`, the per-slot-normalized end-to-end rate of the stream from `i`,
//!
//! which leaves a linear objective and constraints that are either linear or
//! of the form `r_i <= W f(...)` with `f` concave:
//!
//! ```text
//! f1(P, x)      = log2(1 + |h|^2 (P - x) / (W sigma^2))
//! f2(t, xA, xB) = t log2(1 + (c_A xA + c_B xB + c_1) / t)
//! ```
//!
//! All constraints are returned in `g(v) <= 0` form with analytic gradients and,
//! for the two nonlinear families, Hessians.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use crate::barrier::{ConvexProgram, Evaluation};
use crate::eh_model::EhCurve;
use crate::error::{Error, Result};
use crate::link_model::Allocation;
use crate::scenario::{ChannelRealization, SystemParams};

pub const NUM_VARS: usize = 7;
pub const NUM_CONSTRAINTS: usize = 16;

/// Index of each variable in the flat vector layout.
pub mod var {
    pub const P_A: usize = 0;
    pub const P_B: usize = 1;
    pub const T: usize = 2;
    pub const X_A: usize = 3;
    pub const X_B: usize = 4;
    pub const R_A: usize = 5;
    pub const R_B: usize = 6;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    A,
    B,
}

impl Node {
    pub fn other(self) -> Node {
        match self {
            Node::A => Node::B,
            Node::B => Node::A,
        }
    }

    fn idx(self) -> usize {
        match self {
            Node::A => 0,
            Node::B => 1,
        }
    }

    fn p(self) -> usize {
        [var::P_A, var::P_B][self.idx()]
    }

    fn x(self) -> usize {
        [var::X_A, var::X_B][self.idx()]
    }

    fn r(self) -> usize {
        [var::R_A, var::R_B][self.idx()]
    }
}

/// `(i, i_bar)`: the stream sourced at `i` is delivered to `i_bar`, so its
/// relay hop is limited by the channel of `i_bar`.
pub const STREAM_PAIRS: [(Node, Node); 2] = [(Node::A, Node::B), (Node::B, Node::A)];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecisionVector {
    pub p_a: f64,
    pub p_b: f64,
    pub t: f64,
    pub x_a: f64,
    pub x_b: f64,
    pub r_a: f64,
    pub r_b: f64,
}

impl DecisionVector {
    pub fn to_array(&self) -> [f64; NUM_VARS] {
        [self.p_a, self.p_b, self.t, self.x_a, self.x_b, self.r_a, self.r_b]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            p_a: v[0],
            p_b: v[1],
            t: v[2],
            x_a: v[3],
            x_b: v[4],
            r_a: v[5],
            r_b: v[6],
        }
    }
}

/// What the Dinkelbach ratio divides the delivered rate by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ratio {
    /// Consumed energy: `(P_A + P_B)/eps + P_ct + 2 P_cr t`.
    EnergyEfficiency,
    /// Block share: `t + 2`, so the ratio is the delivered throughput.
    Throughput,
}

/// Extra structure imposed by the comparison schemes. The restricted
/// programs are the same program over an affine slice of the variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Restriction {
    None,
    /// `P_A = P_B`
    EqualPower,
    /// `rho_A = rho_B = rho`, i.e. `x_i = rho P_i`.
    EqualPs(f64),
    EqualBoth(f64),
}

/// Margins that turn the open constraints into closed ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    /// Absolute margin for `t > 0`, `x > 0` and `x < P` (natural units).
    pub delta: f64,
    /// Smallest admissible `beta`; bounds `t <= 1/beta_min - 2`.
    pub beta_min: f64,
    /// Relative pull-in of each finite segment upper threshold, so that the
    /// recovered received power classifies into the same segment.
    pub segment_rel: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Self {
            delta: 1e-9,
            beta_min: 1e-4,
            segment_rel: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSpec {
    pub q: f64,
    pub j: usize,
    pub k: usize,
    pub ratio: Ratio,
    pub restriction: Restriction,
    pub h2: [f64; 2],
    /// `|h_i|^2 / (W sigma^2)`, per watt.
    pub snr_per_watt: [f64; 2],
    /// `K_i = |h_i|^2 / (2 W sigma^2)`, per watt.
    pub relay_gain: [f64; 2],
    /// `K_1 = b_j + b_k`, watts.
    pub k1: f64,
    /// `harvest_coeffs[i_bar] = [c_{i_bar A}, c_{i_bar B}, c_{i_bar 1}]`.
    pub harvest_coeffs: [[f64; 3]; 2],
    /// Closed box for `x_i` from the segment thresholds, `x_i > 0` and `x_i < P_max`.
    pub x_bounds: [(f64, f64); 2],
    pub p_max: f64,
    pub r_min: f64,
    pub bandwidth: f64,
    pub amp_efficiency: f64,
    pub p_ct: f64,
    pub p_cr: f64,
    pub delta: f64,
    pub t_max: f64,
}

/// Builds the proposed-scheme program for cell `(j, k)` at parameter `q`.
pub fn build(
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    j: usize,
    k: usize,
    q: f64,
) -> Result<SubproblemSpec> {
    build_with(
        params,
        channel,
        curve,
        j,
        k,
        q,
        Ratio::EnergyEfficiency,
        Restriction::None,
        Margins::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn build_with(
    params: &SystemParams,
    channel: &ChannelRealization,
    curve: &EhCurve,
    j: usize,
    k: usize,
    q: f64,
    ratio: Ratio,
    restriction: Restriction,
    margins: Margins,
) -> Result<SubproblemSpec> {
    let infeasible = |reason: String| Error::InfeasibleSegment { j, k, reason };
    if j + k == 0 {
        return Err(infeasible("nothing is harvested in the dead zone on both links".into()));
    }
    let n = curve.last_segment();
    if j > n || k > n {
        return Err(infeasible(format!("segment index above {n}")));
    }
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::Domain(format!("q must be finite and >= 0, got {q}")));
    }

    let noise = params.noise_power();
    let h2 = [channel.h2_a, channel.h2_b];
    let snr_per_watt = h2.map(|h| h / noise);
    let relay_gain = h2.map(|h| h / (2.0 * noise));
    let (a_j, a_k) = (curve.slope(j), curve.slope(k));
    let k1 = curve.intercept(j) + curve.intercept(k);
    let mut harvest_coeffs = [[0.0; 3]; 2];
    for (_, ibar) in STREAM_PAIRS {
        let kk = relay_gain[ibar.idx()];
        harvest_coeffs[ibar.idx()] = [kk * a_j * h2[0], kk * a_k * h2[1], kk * k1];
    }

    let p_max = params.max_tx_power_w;
    let delta = margins.delta;
    let mut x_bounds = [(0.0, 0.0); 2];
    for (node, seg) in [(Node::A, j), (Node::B, k)] {
        let h = h2[node.idx()];
        let (lo_th, hi_th) = curve.segment_bounds(seg);
        let (lo, hi) = if h > 0.0 {
            let hi = if hi_th.is_finite() {
                (hi_th * (1.0 - margins.segment_rel) / h).min(p_max)
            } else {
                p_max
            };
            ((lo_th / h).max(delta), hi)
        } else if seg == 0 {
            (delta, p_max)
        } else {
            (f64::INFINITY, p_max)
        };
        // x must also leave room for x < P <= P_max.
        if !(lo < hi && lo + delta < p_max) {
            return Err(infeasible(format!(
                "segment {seg} of link {node:?} is unreachable with P_max = {p_max} W"
            )));
        }
        x_bounds[node.idx()] = (lo, hi);
    }

    let spec = SubproblemSpec {
        q,
        j,
        k,
        ratio,
        restriction,
        h2,
        snr_per_watt,
        relay_gain,
        k1,
        harvest_coeffs,
        x_bounds,
        p_max,
        r_min: params.min_rate_bps,
        bandwidth: params.bandwidth_hz,
        amp_efficiency: params.amp_efficiency,
        p_ct: params.circuit_tx_power_w,
        p_cr: params.circuit_rx_power_w,
        delta,
        t_max: 1.0 / margins.beta_min - 2.0,
    };
    if spec.power_range(restriction).is_none() {
        return Err(infeasible(format!("restriction {restriction:?} leaves no admissible transmit power")));
    }
    Ok(spec)
}

/// Value and derivatives of a scalar function of a few variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eval<const N: usize> {
    pub value: f64,
    pub grad: [f64; N],
    pub hess: [[f64; N]; N],
}

impl<const N: usize> Eval<N> {
    /// Largest Hessian eigenvalue divided by the Hessian's spectral norm
    /// (0 for a zero Hessian). Nonpositive up to rounding for a concave function.
    pub fn curvature_ratio(&self) -> f64 {
        let m = DMatrix::from_fn(N, N, |r, c| self.hess[r][c]);
        let eig = m.symmetric_eigen().eigenvalues;
        let norm = eig.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        if norm == 0.0 {
            return 0.0;
        }
        eig.max() / norm
    }
}

/// `log2(1 + |h|^2 (p - x) / (W sigma^2))` over `(p, x)`.
pub fn f1(p: f64, x: f64, h2: f64, params: &SystemParams) -> Result<Eval<2>> {
    if !(p > x) {
        return Err(Error::Domain(format!("f1 needs p > x, got p = {p}, x = {x}")));
    }
    Ok(f1_raw(p, x, h2 / params.noise_power()))
}

/// `snr_per_watt` is `|h|^2 / (W sigma^2)`. Only requires `1 + snr (p - x) > 0`.
pub(crate) fn f1_raw(p: f64, x: f64, snr_per_watt: f64) -> Eval<2> {
    let a = snr_per_watt;
    let arg = 1.0 + a * (p - x);
    let value = arg.log2();
    let d = a / (arg * LN_2);
    let h = a * a / (arg * arg * LN_2);
    Eval {
        value,
        grad: [d, -d],
        hess: [[-h, h], [h, -h]],
    }
}

/// `t log2(1 + (c_A xA + c_B xB + c_1) / t)` over `(t, xA, xB)`;
/// `coeffs = [c_A, c_B, c_1]`.
pub fn f2(t: f64, x_a: f64, x_b: f64, coeffs: [f64; 3]) -> Result<Eval<3>> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("f2 needs t > 0, got {t}")));
    }
    Ok(f2_raw(t, x_a, x_b, coeffs))
}

pub(crate) fn f2_raw(t: f64, x_a: f64, x_b: f64, coeffs: [f64; 3]) -> Eval<3> {
    let [ca, cb, c1] = coeffs;
    let u = ca * x_a + cb * x_b + c1;
    let s = u + t;
    let value = t * (s / t).log2();
    let den = s * s * LN_2;
    let gt = (s / t).log2() - u / (s * LN_2);
    let gx = t / (s * LN_2);
    let hess = [
        [-u * u / (t * den), ca * u / den, cb * u / den],
        [ca * u / den, -ca * ca * t / den, -ca * cb * t / den],
        [cb * u / den, -ca * cb * t / den, -cb * cb * t / den],
    ];
    Eval {
        value,
        grad: [gt, ca * gx, cb * gx],
        hess,
    }
}

/// Names the 16 scalar constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintId {
    /// `r_i >= R_min (t + 2)`
    MinRate(Node),
    /// `P_i <= P_max`
    PowerCap(Node),
    /// `t >= delta`
    TimeLower,
    /// `t <= t_max`
    TimeUpper,
    /// `x_i <= P_i - delta`
    SplitBelowPower(Node),
    /// `x_i |h_i|^2 >= P_th^seg` (and `x_i >= delta`)
    SegmentLower(Node),
    /// `x_i |h_i|^2 <= P_th^{seg+1}` (and `x_i <= P_max`)
    SegmentUpper(Node),
    /// `r_i <= W f1(P_i, x_i)`
    SourceRate(Node),
    /// `r_i <= W f2_{i_bar}(t, x_A, x_B)`
    RelayRate(Node),
}

impl ConstraintId {
    pub fn is_nonlinear(self) -> bool {
        matches!(self, ConstraintId::SourceRate(_) | ConstraintId::RelayRate(_))
    }
}

pub const CONSTRAINT_ORDER: [ConstraintId; NUM_CONSTRAINTS] = [
    ConstraintId::MinRate(Node::A),
    ConstraintId::MinRate(Node::B),
    ConstraintId::PowerCap(Node::A),
    ConstraintId::PowerCap(Node::B),
    ConstraintId::TimeLower,
    ConstraintId::TimeUpper,
    ConstraintId::SplitBelowPower(Node::A),
    ConstraintId::SplitBelowPower(Node::B),
    ConstraintId::SegmentLower(Node::A),
    ConstraintId::SegmentLower(Node::B),
    ConstraintId::SegmentUpper(Node::A),
    ConstraintId::SegmentUpper(Node::B),
    ConstraintId::SourceRate(Node::A),
    ConstraintId::SourceRate(Node::B),
    ConstraintId::RelayRate(Node::A),
    ConstraintId::RelayRate(Node::B),
];

/// One constraint `g(v) <= 0` evaluated at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintValue {
    pub id: ConstraintId,
    pub value: f64,
    pub grad: [f64; NUM_VARS],
    /// `None` for affine constraints.
    pub hess: Option<[[f64; NUM_VARS]; NUM_VARS]>,
}

impl SubproblemSpec {
    /// `r_A + r_B`, the per-slot delivered rate.
    pub fn numerator(&self, v: &DecisionVector) -> f64 {
        v.r_a + v.r_b
    }

    pub fn denominator(&self, v: &DecisionVector) -> f64 {
        match self.ratio {
            Ratio::EnergyEfficiency => {
                (v.p_a + v.p_b) / self.amp_efficiency + self.p_ct + 2.0 * self.p_cr * v.t
            }
            Ratio::Throughput => v.t + 2.0,
        }
    }

    fn denominator_grad(&self) -> [f64; NUM_VARS] {
        let mut g = [0.0; NUM_VARS];
        match self.ratio {
            Ratio::EnergyEfficiency => {
                g[var::P_A] = 1.0 / self.amp_efficiency;
                g[var::P_B] = 1.0 / self.amp_efficiency;
                g[var::T] = 2.0 * self.p_cr;
            }
            Ratio::Throughput => g[var::T] = 1.0,
        }
        g
    }

    /// The parametric objective `numerator - q * denominator` (to maximize) and
    /// its constant gradient.
    pub fn objective(&self, v: &DecisionVector) -> (f64, [f64; NUM_VARS]) {
        let value = self.numerator(v) - self.q * self.denominator(v);
        let mut grad = self.denominator_grad().map(|d| -self.q * d);
        grad[var::R_A] += 1.0;
        grad[var::R_B] += 1.0;
        (value, grad)
    }

    /// All 16 constraints at `v`, in [`CONSTRAINT_ORDER`].
    pub fn constraints(&self, v: &DecisionVector) -> Vec<ConstraintValue> {
        CONSTRAINT_ORDER.iter().map(|&id| self.constraint(id, v, true)).collect()
    }

    /// Constraint values only; the line search needs nothing else.
    pub fn constraint_values(&self, v: &DecisionVector, out: &mut [f64; NUM_CONSTRAINTS]) {
        for (slot, &id) in out.iter_mut().zip(CONSTRAINT_ORDER.iter()) {
            *slot = self.constraint(id, v, false).value;
        }
    }

    pub fn constraint(&self, id: ConstraintId, v: &DecisionVector, derivatives: bool) -> ConstraintValue {
        let a = v.to_array();
        let mut grad = [0.0; NUM_VARS];
        let mut hess = None;
        let value = match id {
            ConstraintId::MinRate(i) => {
                grad[var::T] = self.r_min;
                grad[i.r()] = -1.0;
                self.r_min * (v.t + 2.0) - a[i.r()]
            }
            ConstraintId::PowerCap(i) => {
                grad[i.p()] = 1.0;
                a[i.p()] - self.p_max
            }
            ConstraintId::TimeLower => {
                grad[var::T] = -1.0;
                self.delta - v.t
            }
            ConstraintId::TimeUpper => {
                grad[var::T] = 1.0;
                v.t - self.t_max
            }
            ConstraintId::SplitBelowPower(i) => {
                grad[i.x()] = 1.0;
                grad[i.p()] = -1.0;
                a[i.x()] - a[i.p()] + self.delta
            }
            ConstraintId::SegmentLower(i) => {
                grad[i.x()] = -1.0;
                self.x_bounds[i.idx()].0 - a[i.x()]
            }
            ConstraintId::SegmentUpper(i) => {
                grad[i.x()] = 1.0;
                a[i.x()] - self.x_bounds[i.idx()].1
            }
            ConstraintId::SourceRate(i) => {
                let w = self.bandwidth;
                let e = f1_raw(a[i.p()], a[i.x()], self.snr_per_watt[i.idx()]);
                grad[i.r()] = 1.0;
                if derivatives {
                    let idx = [i.p(), i.x()];
                    let mut h = [[0.0; NUM_VARS]; NUM_VARS];
                    for (m, &vm) in idx.iter().enumerate() {
                        grad[vm] = -w * e.grad[m];
                        for (n, &vn) in idx.iter().enumerate() {
                            h[vm][vn] = -w * e.hess[m][n];
                        }
                    }
                    hess = Some(h);
                }
                a[i.r()] - w * e.value
            }
            ConstraintId::RelayRate(i) => {
                let w = self.bandwidth;
                let ibar = i.other();
                let e = f2_raw(v.t, v.x_a, v.x_b, self.harvest_coeffs[ibar.idx()]);
                grad[i.r()] = 1.0;
                if derivatives {
                    let idx = [var::T, var::X_A, var::X_B];
                    let mut h = [[0.0; NUM_VARS]; NUM_VARS];
                    for (m, &vm) in idx.iter().enumerate() {
                        grad[vm] = -w * e.grad[m];
                        for (n, &vn) in idx.iter().enumerate() {
                            h[vm][vn] = -w * e.hess[m][n];
                        }
                    }
                    hess = Some(h);
                }
                // The perspective is only defined for t > 0 and u + t > 0;
                // outside that it must read as violated, never as -inf.
                if v.t > 0.0 && e.value.is_finite() {
                    a[i.r()] - w * e.value
                } else {
                    f64::INFINITY
                }
            }
        };
        ConstraintValue { id, value, grad, hess }
    }

    /// Natural magnitude of each constraint, used to normalize it.
    pub fn constraint_scale(&self, id: ConstraintId) -> f64 {
        match id {
            ConstraintId::MinRate(_) | ConstraintId::SourceRate(_) | ConstraintId::RelayRate(_) => self.bandwidth,
            ConstraintId::TimeLower | ConstraintId::TimeUpper => 10.0,
            _ => self.p_max,
        }
    }

    /// Natural magnitude of each variable: powers by `P_max`, `t` by 10,
    /// rates by `W`.
    pub fn variable_scale(&self) -> [f64; NUM_VARS] {
        let (p, w) = (self.p_max, self.bandwidth);
        [p, p, 10.0, p, p, w, w]
    }

    /// Admissible transmit-power interval(s) under the restriction, given the
    /// segment boxes on `x`. `None` when empty.
    fn power_range(&self, restriction: Restriction) -> Option<[(f64, f64); 2]> {
        let d = self.delta;
        let per_node = |i: usize, rho: Option<f64>| -> (f64, f64) {
            let (lo, hi) = self.x_bounds[i];
            match rho {
                None => (lo + d, self.p_max),
                Some(rho) => ((lo / rho).max(d / (1.0 - rho)), (hi / rho).min(self.p_max)),
            }
        };
        let ranges = match restriction {
            Restriction::None | Restriction::EqualPower => [per_node(0, None), per_node(1, None)],
            Restriction::EqualPs(rho) | Restriction::EqualBoth(rho) => {
                if !(rho > 0.0 && rho < 1.0) {
                    return None;
                }
                [per_node(0, Some(rho)), per_node(1, Some(rho))]
            }
        };
        let ranges = match restriction {
            Restriction::EqualPower | Restriction::EqualBoth(_) => {
                let both = (ranges[0].0.max(ranges[1].0), ranges[0].1.min(ranges[1].1));
                [both, both]
            }
            _ => ranges,
        };
        ranges.iter().all(|(lo, hi)| lo < hi).then_some(ranges)
    }

    /// A point inside the domain of every constraint function and inside the
    /// linear box constraints; the rate floors may still be violated.
    pub fn initial_point(&self) -> DecisionVector {
        let ranges = self.power_range(self.restriction).expect("checked at build");
        let mid = |(lo, hi): (f64, f64)| 0.5 * (lo + hi);
        let (p_a, p_b, x_a, x_b) = match self.restriction {
            Restriction::None | Restriction::EqualPower => {
                let x_a = mid(self.x_bounds[0]);
                let x_b = mid(self.x_bounds[1]);
                let (p_a, p_b) = if self.restriction == Restriction::EqualPower {
                    let p = 0.5 * (x_a.max(x_b) + self.p_max);
                    (p, p)
                } else {
                    (0.5 * (x_a + self.p_max), 0.5 * (x_b + self.p_max))
                };
                (p_a, p_b, x_a, x_b)
            }
            Restriction::EqualPs(rho) | Restriction::EqualBoth(rho) => {
                let p_a = mid(ranges[0]);
                let p_b = mid(ranges[1]);
                (p_a, p_b, rho * p_a, rho * p_b)
            }
        };
        let t = 1.0f64.clamp(self.delta, self.t_max);
        let mut v = DecisionVector { p_a, p_b, t, x_a, x_b, r_a: 0.0, r_b: 0.0 };
        for (i, _) in STREAM_PAIRS {
            let src = self.constraint(ConstraintId::SourceRate(i), &v, false).value;
            let relay = self.constraint(ConstraintId::RelayRate(i), &v, false).value;
            // with r = 0 both values are -W f(...)
            let cap = (-src).min(-relay).max(0.0);
            match i {
                Node::A => v.r_a = 0.5 * cap,
                Node::B => v.r_b = 0.5 * cap,
            }
        }
        v
    }
}

/// The program over the free coordinates left by a [`Restriction`], in the
/// form the barrier solver consumes (minimize the negated objective).
pub struct CellProgram<'a> {
    spec: &'a SubproblemSpec,
    /// `v[full] = coeff * z[reduced]` for every full-space variable.
    expand: [(usize, f64); NUM_VARS],
    dim: usize,
}

impl<'a> CellProgram<'a> {
    pub fn new(spec: &'a SubproblemSpec) -> Self {
        use var::*;
        let (expand, dim) = match spec.restriction {
            Restriction::None => (std::array::from_fn(|i| (i, 1.0)), NUM_VARS),
            Restriction::EqualPower => {
                let mut e = [(0, 1.0); NUM_VARS];
                for (full, red) in [(P_A, 0), (P_B, 0), (T, 1), (X_A, 2), (X_B, 3), (R_A, 4), (R_B, 5)] {
                    e[full] = (red, 1.0);
                }
                (e, 6)
            }
            Restriction::EqualPs(rho) => {
                let mut e = [(0, 1.0); NUM_VARS];
                for (full, red, c) in [(P_A, 0, 1.0), (P_B, 1, 1.0), (T, 2, 1.0), (X_A, 0, rho), (X_B, 1, rho), (R_A, 3, 1.0), (R_B, 4, 1.0)] {
                    e[full] = (red, c);
                }
                (e, 5)
            }
            Restriction::EqualBoth(rho) => {
                let mut e = [(0, 1.0); NUM_VARS];
                for (full, red, c) in [(P_A, 0, 1.0), (P_B, 0, 1.0), (T, 1, 1.0), (X_A, 0, rho), (X_B, 0, rho), (R_A, 2, 1.0), (R_B, 3, 1.0)] {
                    e[full] = (red, c);
                }
                (e, 4)
            }
        };
        Self { spec, expand, dim }
    }

    pub fn spec(&self) -> &SubproblemSpec {
        self.spec
    }

    pub fn expand(&self, z: &[f64]) -> DecisionVector {
        let v: [f64; NUM_VARS] = std::array::from_fn(|i| {
            let (r, c) = self.expand[i];
            c * z[r]
        });
        DecisionVector::from_slice(&v)
    }

    /// Free coordinates of a point that already satisfies the restriction.
    pub fn reduce(&self, v: &DecisionVector) -> Vec<f64> {
        let full = v.to_array();
        let mut z = vec![f64::NAN; self.dim];
        for (i, &(r, c)) in self.expand.iter().enumerate() {
            if c == 1.0 && z[r].is_nan() {
                z[r] = full[i];
            }
        }
        z
    }

    fn pull_grad(&self, g: &[f64; NUM_VARS]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (i, &(r, c)) in self.expand.iter().enumerate() {
            out[r] += c * g[i];
        }
        out
    }

    fn pull_hess(&self, h: &[[f64; NUM_VARS]; NUM_VARS]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (i, &(ri, ci)) in self.expand.iter().enumerate() {
            for (j, &(rj, cj)) in self.expand.iter().enumerate() {
                if h[i][j] != 0.0 {
                    out[(ri, rj)] += ci * cj * h[i][j];
                }
            }
        }
        out
    }
}

impl ConvexProgram for CellProgram<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_constraints(&self) -> usize {
        NUM_CONSTRAINTS
    }

    fn objective(&self, z: &[f64]) -> Evaluation {
        let (value, grad) = self.spec.objective(&self.expand(z));
        Evaluation {
            value: -value,
            grad: -self.pull_grad(&grad),
            hess: None,
        }
    }

    fn constraint_values(&self, z: &[f64], out: &mut [f64]) {
        let mut vals = [0.0; NUM_CONSTRAINTS];
        self.spec.constraint_values(&self.expand(z), &mut vals);
        for (o, v) in out.iter_mut().zip(vals) {
            *o = if v.is_nan() { f64::INFINITY } else { v };
        }
    }

    fn constraints(&self, z: &[f64]) -> Vec<Evaluation> {
        self.spec
            .constraints(&self.expand(z))
            .iter()
            .map(|c| Evaluation {
                value: c.value,
                grad: self.pull_grad(&c.grad),
                hess: c.hess.as_ref().map(|h| self.pull_hess(h)),
            })
            .collect()
    }

    fn variable_scale(&self) -> Vec<f64> {
        let full = self.spec.variable_scale();
        let mut out = vec![1.0; self.dim];
        let mut seen = vec![false; self.dim];
        for (i, &(r, c)) in self.expand.iter().enumerate() {
            if c == 1.0 && !seen[r] {
                out[r] = full[i];
                seen[r] = true;
            }
        }
        out
    }

    fn constraint_scale(&self) -> Vec<f64> {
        CONSTRAINT_ORDER.iter().map(|&id| self.spec.constraint_scale(id)).collect()
    }

    fn objective_scale(&self) -> f64 {
        self.spec.bandwidth
    }
}

/// Maps the program's optimum back to powers, time fraction and PS ratios.
pub fn recover_allocation(v: &DecisionVector) -> Allocation {
    Allocation {
        p_a_w: v.p_a,
        p_b_w: v.p_b,
        beta: 1.0 / (v.t + 2.0),
        rho_a: v.x_a / v.p_a,
        rho_b: v.x_b / v.p_b,
    }
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
    fn dead_zone_pair_is_rejected() {
        let (p, ch, c) = fig2();
        let err = build(&p, &ch, &c, 0, 0, 0.0).unwrap_err();
        assert!(matches!(err, Error::InfeasibleSegment { j: 0, k: 0, .. }));
    }

    #[test]
    fn unreachable_segment_is_rejected() {
        let (p, ch, c) = fig2();
        // |h_B|^2 P_max ~ 419 uW never reaches the 1000 uW knot
        assert!(matches!(build(&p, &ch, &c, 1, 4, 0.0), Err(Error::InfeasibleSegment { .. })));
        assert!(build(&p, &ch, &c, 1, 3, 0.0).is_ok());
    }

    #[test]
    fn coefficients_for_cell_2_1() {
        let (p, ch, c) = fig2();
        let s = build(&p, &ch, &c, 2, 1, 0.0).unwrap();
        let noise = 1e4 * 1e-15;
        for ibar in [0usize, 1] {
            let kk = [ch.h2_a, ch.h2_b][ibar] / (2.0 * noise);
            let expect = [kk * 0.6967 * ch.h2_a, kk * 0.3899 * ch.h2_b, kk * (-19.1737e-6 - 1.6613e-6)];
            for (m, e) in expect.into_iter().enumerate() {
                let rel = ((s.harvest_coeffs[ibar][m] - e) / e).abs();
                assert!(rel < 1e-9, "ibar={ibar} m={m}");
            }
        }
        assert!((s.k1 - (-19.1737e-6 - 1.6613e-6)).abs() < 1e-15);
    }

    #[test]
    fn saturated_pair_has_no_x_dependence() {
        let p = SystemParams::default();
        let ch = realize_channel(&p, 1.0, 40.0).unwrap();
        let c = EhCurve::reference();
        let s = build(&p, &ch, &c, 4, 4, 0.0).unwrap();
        assert!((s.k1 - 500e-6).abs() < 1e-15);
        for ibar in 0..2 {
            assert_eq!(s.harvest_coeffs[ibar][0], 0.0);
            assert_eq!(s.harvest_coeffs[ibar][1], 0.0);
        }
        let mut v = s.initial_point();
        let before = s.constraint(ConstraintId::RelayRate(Node::A), &v, true);
        v.x_a *= 1.1;
        v.x_b *= 0.9;
        let after = s.constraint(ConstraintId::RelayRate(Node::A), &v, true);
        assert_eq!(before.value, after.value);
        assert_eq!(before.grad[var::X_A], 0.0);
    }

    #[test]
    fn relay_rate_outside_its_domain_reads_as_violated() {
        let (p, ch, c) = fig2();
        let s = build(&p, &ch, &c, 2, 1, 0.0).unwrap();
        let v = s.initial_point();
        let [ca, cb, c1] = s.harvest_coeffs[1];
        let u = ca * v.x_a + cb * v.x_b + c1;
        for t in [0.0, -1.0, -u] {
            let w = DecisionVector { t, ..v };
            assert_eq!(s.constraint(ConstraintId::RelayRate(Node::A), &w, false).value, f64::INFINITY, "t = {t}");
        }
    }

    #[test]
    fn objective_examples() {
        let (p, ch, c) = fig2();
        let s0 = build(&p, &ch, &c, 2, 1, 0.0).unwrap();
        let v = s0.initial_point();
        assert_eq!(s0.objective(&v).0, v.r_a + v.r_b);

        let s = build(&p, &ch, &c, 2, 1, 3e6).unwrap();
        let (val, g) = s.objective(&v);
        let den = (v.p_a + v.p_b) / 0.35 + 0.01 + 2.0 * 0.01 * v.t;
        assert!((val - (v.r_a + v.r_b - 3e6 * den)).abs() < 1e-6 * val.abs());
        let w = DecisionVector { p_a: 0.3, t: 4.0, r_b: 1.0, ..v };
        assert_eq!(g, s.objective(&w).1);
        let expected = [-3e6 / 0.35, -3e6 / 0.35, -2.0 * 3e6 * 0.01, 0.0, 0.0, 1.0, 1.0];
        for m in 0..NUM_VARS {
            assert!((g[m] - expected[m]).abs() <= 1e-9 * expected[m].abs().max(1.0));
        }
    }

    #[test]
    fn f1_limits_and_domain() {
        let p = SystemParams::default();
        let e = f1(0.5 + 1e-15, 0.5, 1e-2, &p).unwrap();
        assert!(e.value.abs() < 1e-3);
        assert!(f1(0.5, 0.5, 1e-2, &p).is_err());
        assert!(f1(0.4, 0.5, 1e-2, &p).is_err());
    }

    #[test]
    fn f2_zero_and_domain() {
        assert_eq!(f2(1.0, 0.0, 0.0, [3.0, 4.0, 0.0]).unwrap().value, 0.0);
        assert!(f2(0.0, 1.0, 1.0, [1.0, 1.0, 1.0]).is_err());
        assert!(f2(-1.0, 1.0, 1.0, [1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn f2_is_homogeneous_without_offset() {
        let c = [2.5, 0.7, 0.0];
        let base = f2(1.3, 0.4, 0.9, c).unwrap().value;
        for lambda in [0.25, 2.0, 7.5] {
            let scaled = f2(1.3 * lambda, 0.4 * lambda, 0.9 * lambda, c).unwrap().value;
            assert!((scaled - lambda * base).abs() <= 1e-12 * scaled.abs());
        }
    }

    #[test]
    fn there_are_sixteen_constraints() {
        let (p, ch, c) = fig2();
        let s = build(&p, &ch, &c, 1, 2, 0.0).unwrap();
        assert_eq!(s.constraints(&s.initial_point()).len(), 16);
        assert_eq!(CONSTRAINT_ORDER.iter().filter(|c| c.is_nonlinear()).count(), 4);
    }

    #[test]
    fn boundary_point_makes_min_rate_active() {
        let (p, ch, c) = fig2();
        let s = build(&p, &ch, &c, 1, 2, 0.0).unwrap();
        let mut v = s.initial_point();
        v.r_a = s.r_min * (v.t + 2.0);
        assert_eq!(s.constraint(ConstraintId::MinRate(Node::A), &v, false).value, 0.0);
    }

    #[test]
    fn recovery_examples() {
        let v = DecisionVector { p_a: 0.6, p_b: 0.8, t: 2.0, x_a: 0.3, x_b: 0.2, r_a: 1.0, r_b: 1.0 };
        let a = recover_allocation(&v);
        assert_eq!(a.beta, 0.25);
        assert_eq!(a.rho_a, 0.5);
        assert_eq!(a.rho_b, 0.25);
        assert_eq!(a.p_a_w, 0.6);
    }

    #[test]
    fn initial_point_respects_linear_constraints() {
        let (p, ch, c) = fig2();
        for restriction in [
            Restriction::None,
            Restriction::EqualPower,
            Restriction::EqualPs(0.5),
            Restriction::EqualBoth(0.3),
        ] {
            for (j, k) in [(0, 1), (1, 0), (2, 2), (4, 3)] {
                let Ok(s) = build_with(&p, &ch, &c, j, k, 0.0, Ratio::EnergyEfficiency, restriction, Margins::default())
                else {
                    continue;
                };
                let v = s.initial_point();
                for cv in s.constraints(&v) {
                    if !matches!(cv.id, ConstraintId::MinRate(_)) {
                        assert!(cv.value < 0.0, "{restriction:?} ({j},{k}) {:?} = {}", cv.id, cv.value);
                    }
                }
                match restriction {
                    Restriction::EqualPower => assert_eq!(v.p_a, v.p_b),
                    Restriction::EqualPs(rho) => assert_eq!((v.x_a, v.x_b), (rho * v.p_a, rho * v.p_b)),
                    Restriction::EqualBoth(_) => assert_eq!(v.p_a, v.p_b),
                    Restriction::None => {}
                }
            }
        }
    }
}
