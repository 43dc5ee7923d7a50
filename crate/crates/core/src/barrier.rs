//! Dense log-barrier interior-point method for small smooth convex programs
//!
//! ```text
//!     minimize f(x)   subject to   g_i(x) <= 0,  i = 1..m
//! ```
//!
//! Each barrier stage minimizes `f(x) - mu * sum_i ln(-g_i(x))` with damped
//! Newton steps and a backtracking line search, then shrinks `mu`. The
//! returned point is strictly feasible and `m * mu` bounds its suboptimality.
//! A phase-I program (minimize a common slack `s` with `g_i(x) <= s`) supplies
//! the strictly feasible start.
//!
//! Variables, constraints and the objective are divided by the scales the
//! program reports before anything else happens, so the Newton systems stay
//! well conditioned when the natural units span many decades.

use nalgebra::{Cholesky, DMatrix, DVector};

/// Value, gradient and optional Hessian (`None` means affine).
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: Option<DMatrix<f64>>,
}

pub trait ConvexProgram {
    fn dim(&self) -> usize;

    fn num_constraints(&self) -> usize;

    /// The objective to minimize.
    fn objective(&self, x: &[f64]) -> Evaluation;

    /// Constraint values `g_i(x)`. Points outside a function's domain must
    /// produce NaN or `+inf`.
    fn constraint_values(&self, x: &[f64], out: &mut [f64]);

    fn constraints(&self, x: &[f64]) -> Vec<Evaluation>;

    fn variable_scale(&self) -> Vec<f64> {
        vec![1.0; self.dim()]
    }

    fn constraint_scale(&self) -> Vec<f64> {
        vec![1.0; self.num_constraints()]
    }

    fn objective_scale(&self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// `mu` of the first barrier stage.
    pub barrier_initial: f64,
    pub barrier_decrease_factor: f64,
    /// Centering stops once `lambda^2 / 2` falls below this.
    pub newton_tolerance: f64,
    pub max_newton_steps: usize,
    pub max_barrier_stages: usize,
    pub line_search_backtrack_factor: f64,
    pub line_search_slope_fraction: f64,
    /// Stop once `m * mu` (in scaled objective units) is below this.
    pub duality_gap_target: f64,
    /// Phase I stops as soon as the scaled common slack drops below `-margin`.
    pub phase1_margin: f64,
    /// Keep one [`IterationRecord`] per Newton step.
    pub record_trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            barrier_initial: 1.0,
            barrier_decrease_factor: 10.0,
            newton_tolerance: 1e-10,
            max_newton_steps: 100,
            max_barrier_stages: 40,
            line_search_backtrack_factor: 0.5,
            line_search_slope_fraction: 0.01,
            duality_gap_target: 1e-8,
            phase1_margin: 1e-4,
            record_trace: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), String> {
        let s = self;
        if !(s.barrier_initial > 0.0 && s.newton_tolerance > 0.0 && s.duality_gap_target > 0.0) {
            return Err("barrier_initial, newton_tolerance and duality_gap_target must be > 0".into());
        }
        if !(s.barrier_decrease_factor > 1.0) {
            return Err("barrier_decrease_factor must be > 1".into());
        }
        if !(s.line_search_backtrack_factor > 0.0 && s.line_search_backtrack_factor < 1.0) {
            return Err("line_search_backtrack_factor must be in (0, 1)".into());
        }
        if !(s.line_search_slope_fraction > 0.0 && s.line_search_slope_fraction < 0.5) {
            return Err("line_search_slope_fraction must be in (0, 0.5)".into());
        }
        if s.max_newton_steps == 0 || s.max_barrier_stages == 0 {
            return Err("iteration budgets must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Budgets exhausted; the point is feasible but not certified optimal.
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub stage: usize,
    pub step: usize,
    /// Unscaled objective after the step.
    pub objective: f64,
    /// Newton decrement `lambda^2 / 2` before the step.
    pub decrement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSolution {
    pub x: Vec<f64>,
    /// Unscaled objective at `x`.
    pub value: f64,
    pub status: SolveStatus,
    /// `m * mu` of the last stage, in unscaled objective units.
    pub duality_gap: f64,
    /// `lambda^2 / 2` at the end of the last centering.
    pub final_decrement: f64,
    pub newton_steps: usize,
    /// Unscaled objective at the end of each stage.
    pub stage_values: Vec<f64>,
    pub trace: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhaseOne {
    /// Every constraint holds strictly at `x`.
    Feasible(Vec<f64>),
    /// The smallest common slack found is `min_slack >= 0` (scaled units):
    /// there is no strictly feasible point.
    Infeasible { min_slack: f64 },
}

/// Finds a strictly feasible point, starting from `x0` (which only needs to be
/// inside every constraint function's domain).
pub fn phase1<P: ConvexProgram>(prob: &P, x0: &[f64], settings: &SolverSettings) -> PhaseOne {
    let scaled = Scaled::new(prob);
    let m = prob.num_constraints();
    let mut g = vec![0.0; m];
    let u0 = scaled.to_scaled(x0);
    scaled.values(&u0, &mut g);
    let worst = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !worst.is_finite() {
        return PhaseOne::Infeasible { min_slack: f64::INFINITY };
    }
    if worst < -settings.phase1_margin {
        return PhaseOne::Feasible(x0.to_vec());
    }

    let aux = SlackProgram { inner: &scaled };
    let mut start = u0.clone();
    start.push(worst.max(0.0) + 1.0);
    let margin = settings.phase1_margin;
    let n = prob.dim();
    let stop = |u: &[f64]| u[n] < -margin;
    let sol = minimize(&aux, &start, settings, &stop);
    let s = sol.x[n];
    let x = scaled.unscale(&sol.x[..n]);
    if s < 0.0 {
        // the slack bounds the scaled constraints; recheck in original units
        let mut vals = vec![0.0; m];
        prob.constraint_values(&x, &mut vals);
        if vals.iter().all(|v| *v < 0.0) {
            return PhaseOne::Feasible(x);
        }
    }
    PhaseOne::Infeasible { min_slack: s.max(0.0) }
}

/// Barrier method from a strictly feasible `x0`.
pub fn solve<P: ConvexProgram>(prob: &P, x0: &[f64], settings: &SolverSettings) -> BarrierSolution {
    let scaled = Scaled::new(prob);
    let u0 = scaled.to_scaled(x0);
    let mut sol = minimize(&scaled, &u0, settings, &|_| false);
    let c = scaled.obj_scale;
    sol.x = scaled.unscale(&sol.x);
    sol.value *= c;
    sol.duality_gap *= c;
    for v in sol.stage_values.iter_mut() {
        *v *= c;
    }
    for r in sol.trace.iter_mut() {
        r.objective *= c;
    }
    sol
}

/// Phase I followed by the barrier method. `None` if phase I proves the
/// interior empty.
pub fn solve_from<P: ConvexProgram>(
    prob: &P,
    x0: &[f64],
    settings: &SolverSettings,
) -> Option<BarrierSolution> {
    match phase1(prob, x0, settings) {
        PhaseOne::Feasible(x) => Some(solve(prob, &x, settings)),
        PhaseOne::Infeasible { .. } => None,
    }
}

/// Program viewed in scaled coordinates `u = x / scale`.
struct Scaled<'a, P> {
    prob: &'a P,
    var_scale: Vec<f64>,
    con_scale: Vec<f64>,
    obj_scale: f64,
}

impl<'a, P: ConvexProgram> Scaled<'a, P> {
    fn new(prob: &'a P) -> Self {
        Self {
            var_scale: prob.variable_scale(),
            con_scale: prob.constraint_scale(),
            obj_scale: prob.objective_scale(),
            prob,
        }
    }

    fn to_scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.var_scale).map(|(x, s)| x / s).collect()
    }

    fn unscale(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.var_scale).map(|(u, s)| u * s).collect()
    }

    fn rescale(&self, e: Evaluation, c: f64) -> Evaluation {
        let s = &self.var_scale;
        let grad = DVector::from_iterator(s.len(), e.grad.iter().zip(s).map(|(g, s)| g * s / c));
        let hess = e.hess.map(|h| DMatrix::from_fn(s.len(), s.len(), |i, j| h[(i, j)] * s[i] * s[j] / c));
        Evaluation {
            value: e.value / c,
            grad,
            hess,
        }
    }
}

/// The minimal view the Newton loop needs.
trait Smooth {
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn objective(&self, u: &[f64]) -> Evaluation;
    fn values(&self, u: &[f64], out: &mut [f64]);
    fn constraints(&self, u: &[f64]) -> Vec<Evaluation>;
}

impl<P: ConvexProgram> Smooth for Scaled<'_, P> {
    fn dim(&self) -> usize {
        self.prob.dim()
    }

    fn num_constraints(&self) -> usize {
        self.prob.num_constraints()
    }

    fn objective(&self, u: &[f64]) -> Evaluation {
        let e = self.prob.objective(&self.unscale(u));
        self.rescale(e, self.obj_scale)
    }

    fn values(&self, u: &[f64], out: &mut [f64]) {
        self.prob.constraint_values(&self.unscale(u), out);
        for (v, c) in out.iter_mut().zip(&self.con_scale) {
            *v /= c;
        }
    }

    fn constraints(&self, u: &[f64]) -> Vec<Evaluation> {
        self.prob
            .constraints(&self.unscale(u))
            .into_iter()
            .zip(&self.con_scale)
            .map(|(e, &c)| self.rescale(e, c))
            .collect()
    }
}

/// Phase-I program over `(u, s)`: minimize `s` subject to `g_i(u) <= s` and
/// `s >= -1`.
struct SlackProgram<'a, S> {
    inner: &'a S,
}

impl<S: Smooth> Smooth for SlackProgram<'_, S> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn num_constraints(&self) -> usize {
        self.inner.num_constraints() + 1
    }

    fn objective(&self, u: &[f64]) -> Evaluation {
        let n = self.dim();
        let mut grad = DVector::zeros(n);
        grad[n - 1] = 1.0;
        Evaluation {
            value: u[n - 1],
            grad,
            hess: None,
        }
    }

    fn values(&self, u: &[f64], out: &mut [f64]) {
        let n = self.inner.dim();
        let m = self.inner.num_constraints();
        self.inner.values(&u[..n], &mut out[..m]);
        for v in out[..m].iter_mut() {
            *v -= u[n];
        }
        out[m] = -u[n] - 1.0;
    }

    fn constraints(&self, u: &[f64]) -> Vec<Evaluation> {
        let n = self.inner.dim();
        let mut out: Vec<Evaluation> = self
            .inner
            .constraints(&u[..n])
            .into_iter()
            .map(|e| {
                let grad = DVector::from_iterator(n + 1, e.grad.iter().copied().chain(std::iter::once(-1.0)));
                let hess = e.hess.map(|h| h.resize(n + 1, n + 1, 0.0));
                Evaluation {
                    value: e.value - u[n],
                    grad,
                    hess,
                }
            })
            .collect();
        let mut grad = DVector::zeros(n + 1);
        grad[n] = -1.0;
        out.push(Evaluation {
            value: -u[n] - 1.0,
            grad,
            hess: None,
        });
        out
    }
}

/// `f(u) - mu * sum ln(-g_i(u))`, or `+inf` outside the strict interior.
fn barrier_value<S: Smooth>(prob: &S, u: &[f64], mu: f64, g: &mut [f64]) -> f64 {
    prob.values(u, g);
    let mut log_sum = 0.0;
    for &v in g.iter() {
        if !(v < 0.0) {
            return f64::INFINITY;
        }
        log_sum += (-v).ln();
    }
    let f = prob.objective(u).value;
    if !f.is_finite() {
        return f64::INFINITY;
    }
    f - mu * log_sum
}

fn minimize<S: Smooth>(
    prob: &S,
    u0: &[f64],
    settings: &SolverSettings,
    early_stop: &dyn Fn(&[f64]) -> bool,
) -> BarrierSolution {
    let n = prob.dim();
    let m = prob.num_constraints();
    let mut u = u0.to_vec();
    let mut g = vec![0.0; m];
    let mut trial = vec![0.0; n];
    let mut mu = settings.barrier_initial;
    let mut newton_steps = 0;
    let mut stage_values = Vec::new();
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut final_decrement = f64::INFINITY;

    'stages: for stage in 0..settings.max_barrier_stages {
        let mut phi = barrier_value(prob, &u, mu, &mut g);
        debug_assert!(phi.is_finite(), "barrier stage started outside the interior");
        for step in 0..settings.max_newton_steps {
            let (grad, hess) = barrier_derivatives(prob, &u, mu);
            let dir = newton_direction(&hess, &grad);
            let slope = grad.dot(&dir);
            let decrement = -0.5 * slope;
            final_decrement = decrement;
            if !(decrement > settings.newton_tolerance) {
                break;
            }
            newton_steps += 1;

            // backtracking with an Armijo condition
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-16 {
                for i in 0..n {
                    trial[i] = u[i] + alpha * dir[i];
                }
                let phi_new = barrier_value(prob, &trial, mu, &mut g);
                if phi_new <= phi + settings.line_search_slope_fraction * alpha * slope {
                    debug_assert!(phi_new <= phi);
                    u.copy_from_slice(&trial);
                    phi = phi_new;
                    accepted = true;
                    break;
                }
                alpha *= settings.line_search_backtrack_factor;
            }
            if settings.record_trace {
                trace.push(IterationRecord {
                    stage,
                    step,
                    objective: prob.objective(&u).value,
                    decrement,
                });
            }
            if early_stop(&u) {
                stage_values.push(prob.objective(&u).value);
                break 'stages;
            }
            // no representable progress along the Newton direction: centered
            // to working precision
            if !accepted {
                break;
            }
        }
        stage_values.push(prob.objective(&u).value);
        if early_stop(&u) {
            break;
        }
        if m as f64 * mu <= settings.duality_gap_target {
            status = SolveStatus::Optimal;
            break;
        }
        mu /= settings.barrier_decrease_factor;
    }

    BarrierSolution {
        value: prob.objective(&u).value,
        x: u,
        status,
        duality_gap: m as f64 * mu,
        final_decrement,
        newton_steps,
        stage_values,
        trace,
    }
}

fn barrier_derivatives<S: Smooth>(prob: &S, u: &[f64], mu: f64) -> (DVector<f64>, DMatrix<f64>) {
    let obj = prob.objective(u);
    let mut grad = obj.grad;
    let mut hess = obj.hess.unwrap_or_else(|| DMatrix::zeros(u.len(), u.len()));
    for c in prob.constraints(u) {
        let inv = 1.0 / -c.value;
        grad.axpy(mu * inv, &c.grad, 1.0);
        hess.ger(mu * inv * inv, &c.grad, &c.grad, 1.0);
        if let Some(h) = c.hess {
            hess += h * (mu * inv);
        }
    }
    (grad, hess)
}

/// Solves `H d = -g`, regularizing `H` with a growing multiple of the
/// identity when it is not numerically positive definite.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let rhs = -grad;
    if let Some(ch) = Cholesky::new(hess.clone()) {
        return ch.solve(&rhs);
    }
    let n = hess.nrows();
    let mut lambda = 1e-12 * hess.trace().abs().max(f64::MIN_POSITIVE);
    loop {
        let reg = hess + DMatrix::identity(n, n) * lambda;
        if let Some(ch) = Cholesky::new(reg) {
            return ch.solve(&rhs);
        }
        lambda *= 10.0;
        if !lambda.is_finite() {
            // steepest descent as a last resort
            return rhs;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// minimize (x - a)^T (x - a) over the box `lo <= x <= hi`, optionally
    /// with per-variable scales.
    struct BoxQp {
        a: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        scale: Vec<f64>,
    }

    impl ConvexProgram for BoxQp {
        fn dim(&self) -> usize {
            self.a.len()
        }
        fn num_constraints(&self) -> usize {
            2 * self.a.len()
        }
        fn objective(&self, x: &[f64]) -> Evaluation {
            let n = self.dim();
            let d: Vec<f64> = x.iter().zip(&self.a).map(|(x, a)| x - a).collect();
            Evaluation {
                value: d.iter().map(|v| v * v).sum(),
                grad: DVector::from_iterator(n, d.iter().map(|v| 2.0 * v)),
                hess: Some(DMatrix::identity(n, n) * 2.0),
            }
        }
        fn constraint_values(&self, x: &[f64], out: &mut [f64]) {
            for i in 0..self.dim() {
                out[2 * i] = self.lo[i] - x[i];
                out[2 * i + 1] = x[i] - self.hi[i];
            }
        }
        fn constraints(&self, x: &[f64]) -> Vec<Evaluation> {
            let n = self.dim();
            let mut out = Vec::new();
            for i in 0..n {
                let mut g = DVector::zeros(n);
                g[i] = -1.0;
                out.push(Evaluation { value: self.lo[i] - x[i], grad: g.clone(), hess: None });
                g[i] = 1.0;
                out.push(Evaluation { value: x[i] - self.hi[i], grad: g, hess: None });
            }
            out
        }
        fn variable_scale(&self) -> Vec<f64> {
            self.scale.clone()
        }
    }

    fn qp() -> BoxQp {
        BoxQp {
            a: vec![2.0, -3.0, 0.25],
            lo: vec![-1.0, -1.0, -1.0],
            hi: vec![1.0, 1.0, 1.0],
            scale: vec![1.0; 3],
        }
    }

    #[test]
    fn box_qp_matches_projection() {
        let p = qp();
        let sol = solve_from(&p, &[0.0, 0.0, 0.0], &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let expect = [1.0, -1.0, 0.25];
        for (x, e) in sol.x.iter().zip(expect) {
            assert!((x - e).abs() < 1e-6, "{:?}", sol.x);
        }
        // optimal value 1 + 4
        assert!((sol.value - 5.0).abs() < 1e-6);
        assert!(sol.duality_gap <= 1e-8);
    }

    #[test]
    fn scaling_does_not_change_the_answer() {
        let mut p = qp();
        p.scale = vec![1e3, 1e-2, 7.0];
        let a = solve_from(&p, &[0.5, 0.5, 0.5], &SolverSettings::default()).unwrap();
        let b = solve_from(&qp(), &[0.5, 0.5, 0.5], &SolverSettings::default()).unwrap();
        assert!((a.value - b.value).abs() < 1e-7);
    }

    #[test]
    fn phase1_finds_interior_from_infeasible_start() {
        let p = qp();
        match phase1(&p, &[5.0, -7.0, 0.0], &SolverSettings::default()) {
            PhaseOne::Feasible(x) => {
                let mut g = vec![0.0; 6];
                p.constraint_values(&x, &mut g);
                assert!(g.iter().all(|v| *v < 0.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn phase1_detects_empty_box() {
        let mut p = qp();
        p.lo[1] = 2.0;
        assert!(matches!(
            phase1(&p, &[0.0, 0.0, 0.0], &SolverSettings::default()),
            PhaseOne::Infeasible { min_slack } if min_slack > 0.0
        ));
    }

    #[test]
    fn stage_values_are_nonincreasing() {
        let p = qp();
        let sol = solve(&p, &[0.0, 0.0, 0.0], &SolverSettings::default());
        for w in sol.stage_values.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", sol.stage_values);
        }
    }

    #[test]
    fn trace_is_recorded_on_request() {
        let p = qp();
        let settings = SolverSettings { record_trace: true, ..Default::default() };
        let sol = solve(&p, &[0.0, 0.0, 0.0], &settings);
        assert_eq!(sol.trace.len(), sol.newton_steps);
        assert!(solve(&p, &[0.0, 0.0, 0.0], &SolverSettings::default()).trace.is_empty());
    }

    #[test]
    fn settings_validation() {
        assert!(SolverSettings::default().validate().is_ok());
        let bad = SolverSettings { barrier_decrease_factor: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverSettings { line_search_slope_fraction: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
