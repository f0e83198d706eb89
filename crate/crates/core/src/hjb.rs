//! Backward implicit Euler stepping for a fixed control and for the
//! worst/best case over a control set via Howard policy iteration.
//!
//! With `τ = T - t` each step solves
//! `(M/Δt + A(λ)) w^n = (M/Δt) w^{n+1} + g`, where `M` is the lumped mass
//! (one on dynamic rows, zero on algebraic boundary rows). For a control
//! set the nodal residual `r_i(λ) = (M/Δt w^{n+1} + g)_i - (S(λ) w)_i` is
//! maximized (upper envelope) or minimized (lower envelope) node by node.

use crate::assembly::DiscreteOperator;
use crate::error::{invalid, Error, Result};
use crate::linalg::{bicgstab, inf_norm, residual_inf, BandedLu, Ilu0, SparseMatrix};
use crate::model::ControlInterval;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extremum {
    Sup,
    Inf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Sup,
    Inf,
    Fixed(f64),
}

impl From<Extremum> for Mode {
    fn from(e: Extremum) -> Self {
        match e {
            Extremum::Sup => Mode::Sup,
            Extremum::Inf => Mode::Inf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub steps: usize,
    /// Howard stops once the nonlinear residual is below
    /// `howard_tol * max(1, ‖rhs‖∞)`, or the policy repeats.
    pub howard_tol: f64,
    pub max_howard: usize,
    /// Accepted linear residual relative to `max(1, ‖rhs‖∞)`.
    pub linear_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            steps: 100,
            howard_tol: 1e-10,
            max_howard: 100,
            linear_tol: 1e-11,
        }
    }
}

impl SolverConfig {
    pub fn with_steps(steps: usize) -> Self {
        SolverConfig {
            steps,
            ..Self::default()
        }
    }
}

/// Nodal values and controls on the uniform time grid `t_n = n T / N`.
#[derive(Debug, Clone)]
pub struct ValueSurface {
    mode: Mode,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    controls: Vec<Vec<f64>>,
    howard_iterations: Vec<usize>,
}

impl ValueSurface {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.values[0].len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Control used on `(t_n, t_{n+1}]`; at `t = T` the one of the last interval.
    pub fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }

    /// Howard iterations per backward step, indexed like `times[..N]`.
    pub fn howard_iterations(&self) -> &[usize] {
        &self.howard_iterations
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        let horizon = *self.times.last().unwrap();
        let tol = 1e-9 * horizon.max(1.0);
        let n = self.steps();
        let k = (t / horizon * n as f64).round();
        if !(k >= 0.0 && k <= n as f64) || (self.times[k as usize] - t).abs() > tol {
            return Err(Error::TimeNotFound(t));
        }
        Ok(k as usize)
    }

    pub fn at_time(&self, t: f64) -> Result<&[f64]> {
        Ok(&self.values[self.time_index(t)?])
    }

    pub fn controls_at(&self, t: f64) -> Result<&[f64]> {
        Ok(&self.controls[self.time_index(t)?])
    }

    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }
}

/// Per-node argmax (`Sup`) or argmin (`Inf`) of `residuals[i * n_controls + k]`.
/// Ties go to the smallest index.
pub fn howard_select(residuals: &[f64], n_controls: usize, mode: Extremum) -> Vec<usize> {
    assert!(n_controls > 0 && residuals.len() % n_controls == 0);
    residuals
        .chunks_exact(n_controls)
        .map(|r| {
            let mut best = 0;
            for k in 1..n_controls {
                let better = match mode {
                    Extremum::Sup => r[k] > r[best],
                    Extremum::Inf => r[k] < r[best],
                };
                if better {
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn check_config(op: &DiscreteOperator, cfg: &SolverConfig) -> Result<f64> {
    if cfg.steps == 0 {
        return invalid("steps must be at least 1");
    }
    if !(cfg.linear_tol > 0.0) || !(cfg.howard_tol > 0.0) || cfg.max_howard == 0 {
        return invalid("solver tolerances must be positive");
    }
    Ok(op.maturity() / cfg.steps as f64)
}

/// `M/Δt w + g`.
fn step_rhs(op: &DiscreteOperator, w: &[f64], dt: f64) -> Vec<f64> {
    op.mass().iter().zip(w).zip(op.rhs()).map(|((m, w), g)| m / dt * w + g).collect()
}

fn scale(b: &[f64]) -> f64 {
    inf_norm(b).max(1.0)
}

/// Direct solve with up to three steps of iterative refinement.
fn lu_solve(a: &SparseMatrix, lu: &BandedLu, b: &[f64], tol: f64, step: usize) -> Result<Vec<f64>> {
    let mut x = lu.solve(b);
    for _ in 0..3 {
        let mut r = a.apply(&x);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let res = inf_norm(&r);
        if !res.is_finite() {
            break;
        }
        if res <= tol {
            return Ok(x);
        }
        for (xi, di) in x.iter_mut().zip(lu.solve(&r)) {
            *xi += di;
        }
    }
    let residual = residual_inf(a, &x, b);
    if residual <= tol {
        Ok(x)
    } else {
        Err(Error::LinearSolve { step, residual })
    }
}

fn factor(a: &SparseMatrix, order: &[usize], step: usize) -> Result<BandedLu> {
    BandedLu::factor(a, order).ok_or(Error::LinearSolve {
        step,
        residual: f64::INFINITY,
    })
}

pub fn solve_fixed(op: &DiscreteOperator, lambda: f64, steps: usize) -> Result<ValueSurface> {
    solve_fixed_with(op, lambda, &SolverConfig::with_steps(steps))
}

/// Linear pricing problem for a constant control.
pub fn solve_fixed_with(op: &DiscreteOperator, lambda: f64, cfg: &SolverConfig) -> Result<ValueSurface> {
    if !op.stabilization().contains(lambda) {
        return invalid(format!("control {lambda} lies outside the stabilization interval"));
    }
    march_constant(op, lambda, cfg, Mode::Fixed(lambda))
}

fn march_constant(op: &DiscreteOperator, lambda: f64, cfg: &SolverConfig, mode: Mode) -> Result<ValueSurface> {
    let dt = check_config(op, cfg)?;
    let n = op.n();
    let steps = cfg.steps;
    let a = op.system_matrix(&vec![lambda; n], dt);
    let lu = factor(&a, op.ordering(), steps - 1)?;
    let mut values = vec![Vec::new(); steps + 1];
    values[steps] = op.final_values().to_vec();
    for k in (0..steps).rev() {
        let b = step_rhs(op, &values[k + 1], dt);
        values[k] = lu_solve(&a, &lu, &b, cfg.linear_tol * scale(&b), k)?;
    }
    Ok(ValueSurface {
        mode,
        times: time_grid(op.maturity(), steps),
        values,
        controls: vec![vec![lambda; n]; steps + 1],
        howard_iterations: vec![1; steps],
    })
}

fn time_grid(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|k| if k == steps { horizon } else { horizon * k as f64 / steps as f64 })
        .collect()
}

pub fn solve_hjb(op: &DiscreteOperator, control: &ControlInterval, steps: usize, mode: Extremum) -> Result<ValueSurface> {
    solve_hjb_with(op, control, mode, &SolverConfig::with_steps(steps))
}

/// Upper (`Sup`) or lower (`Inf`) value envelope over the controls
/// `control.points()`. A single-point set reduces to the linear solve.
pub fn solve_hjb_with(
    op: &DiscreteOperator,
    control: &ControlInterval,
    mode: Extremum,
    cfg: &SolverConfig,
) -> Result<ValueSurface> {
    if !op.stabilization().covers(control) {
        return invalid("control set is not covered by the stabilization interval");
    }
    let points = control.points();
    if points.len() == 1 {
        return march_constant(op, points[0], cfg, mode.into());
    }
    let dt = check_config(op, cfg)?;
    let n = op.n();
    let steps = cfg.steps;
    let mut stepper = HowardStep::new(op, points, mode, dt, cfg);
    let mut values = vec![Vec::new(); steps + 1];
    let mut controls = vec![Vec::new(); steps + 1];
    let mut iterations = vec![0; steps];
    values[steps] = op.final_values().to_vec();
    for k in (0..steps).rev() {
        let (w, lambda, its) = stepper.step(&values[k + 1], k)?;
        values[k] = w;
        controls[k] = lambda;
        iterations[k] = its;
    }
    controls[steps] = controls[steps - 1].clone();
    debug_assert_eq!(values[0].len(), n);
    Ok(ValueSurface {
        mode: mode.into(),
        times: time_grid(op.maturity(), steps),
        values,
        controls,
        howard_iterations: iterations,
    })
}

struct HowardStep<'a> {
    op: &'a DiscreteOperator,
    points: Vec<f64>,
    mode: Extremum,
    dt: f64,
    cfg: SolverConfig,
    /// `base + M/Δt`, shared by every policy.
    shifted: SparseMatrix,
}

impl<'a> HowardStep<'a> {
    fn new(op: &'a DiscreteOperator, points: Vec<f64>, mode: Extremum, dt: f64, cfg: &SolverConfig) -> Self {
        let shifted = op.system_matrix(&vec![0.0; op.n()], dt);
        HowardStep {
            op,
            points,
            mode,
            dt,
            cfg: *cfg,
            shifted,
        }
    }

    /// Candidate residuals for every node and control, and the resulting
    /// policy and nonlinear residual norm.
    fn improve(&self, b: &[f64], w: &[f64]) -> (Vec<usize>, f64) {
        let k = self.points.len();
        let s0 = self.shifted.apply(w);
        let s1 = self.op.lambda_matrix().apply(w);
        let mut res = Vec::with_capacity(w.len() * k);
        for i in 0..w.len() {
            let r0 = b[i] - s0[i];
            res.extend(self.points.iter().map(|&l| r0 - l * s1[i]));
        }
        let policy = howard_select(&res, k, self.mode);
        let norm = policy
            .iter()
            .enumerate()
            .map(|(i, &p)| res[i * k + p].abs())
            .fold(0.0, f64::max);
        (policy, norm)
    }

    fn solve_policy(&self, policy: &[usize], b: &[f64], guess: &[f64], step: usize) -> Result<Vec<f64>> {
        let row_lambda: Vec<f64> = policy.iter().map(|&p| self.points[p]).collect();
        let a = self.op.system_matrix(&row_lambda, self.dt);
        let accept = self.cfg.linear_tol * scale(b);
        // a tighter inner target keeps envelopes from different control
        // grids consistent far below the acceptance tolerance
        let target = (1e-13 * scale(b)).min(accept);
        let mut x = guess.to_vec();
        if let Some(ilu) = Ilu0::factor(&a) {
            let converged = bicgstab(&a, &ilu, b, &mut x, target, 500);
            if converged || residual_inf(&a, &x, b) <= accept {
                return Ok(x);
            }
        }
        log::debug!("iterative solve stalled at step {step}; falling back to LU");
        let lu = factor(&a, self.op.ordering(), step)?;
        lu_solve(&a, &lu, b, target.max(f64::MIN_POSITIVE), step).or_else(|_| lu_solve(&a, &lu, b, accept, step))
    }

    fn step(&mut self, w_next: &[f64], step: usize) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let b = step_rhs(self.op, w_next, self.dt);
        let tol = self.cfg.howard_tol * scale(&b);
        let (mut policy, _) = self.improve(&b, w_next);
        let mut w = w_next.to_vec();
        for it in 1..=self.cfg.max_howard {
            w = self.solve_policy(&policy, &b, &w, step)?;
            let (next, residual) = self.improve(&b, &w);
            if next == policy || residual <= tol {
                let lambda = policy.iter().map(|&p| self.points[p]).collect();
                return Ok((w, lambda, it));
            }
            if it == self.cfg.max_howard {
                return Err(Error::HowardNonConvergence {
                    step,
                    iterations: it,
                    residual,
                });
            }
            policy = next;
        }
        unreachable!()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::mesh::structured_triangulation;
    use crate::model::{HestonParams, TruncatedDomain};
    use crate::payoff::Payoff;
    use crate::transform::{build_trapezoid, CoordinateMap};

    fn operator(payoff: Payoff, stab: ControlInterval, n_y: usize, n_z: usize) -> DiscreteOperator {
        let params = HestonParams::case_study();
        let map = CoordinateMap::from_params(&params).unwrap();
        let trap = build_trapezoid(&TruncatedDomain::case_study(), &map).unwrap();
        let mesh = structured_triangulation(&trap, n_y, n_z).unwrap();
        assemble(&mesh, &params, &payoff, &map, &stab).unwrap()
    }

    #[test]
    fn selection_breaks_ties_low() {
        let r = [1.0, 1.0, 0.5, 2.0, 3.0, 3.0];
        assert_eq!(howard_select(&r, 2, Extremum::Sup), vec![0, 1, 0]);
        assert_eq!(howard_select(&r, 2, Extremum::Inf), vec![0, 0, 0]);
        assert_eq!(howard_select(&[0.0, -1.0, 4.0], 3, Extremum::Sup), vec![2]);
        assert_eq!(howard_select(&[0.0, -1.0, 4.0], 3, Extremum::Inf), vec![1]);
    }

    #[test]
    fn time_lookup() {
        let op = operator(Payoff::butterfly(50.0, 20.0).unwrap(), ControlInterval::singleton(0.0), 8, 6);
        let s = solve_fixed(&op, 0.0, 10).unwrap();
        assert_eq!(s.steps(), 10);
        assert_eq!(s.time_index(0.0).unwrap(), 0);
        assert_eq!(s.time_index(0.5).unwrap(), 10);
        assert_eq!(s.time_index(0.25).unwrap(), 5);
        assert!(matches!(s.at_time(0.26), Err(Error::TimeNotFound(_))));
        assert!(s.at_time(-0.05).is_err());
        assert_eq!(s.at_time(0.5).unwrap(), op.final_values());
    }

    #[test]
    fn rejects_controls_outside_stabilization() {
        let op = operator(Payoff::butterfly(50.0, 20.0).unwrap(), ControlInterval::new(-2.4, -1.6), 8, 6);
        assert!(solve_fixed(&op, 0.0, 5).is_err());
        assert!(solve_hjb(&op, &ControlInterval::new(-2.5, -1.6), 5, Extremum::Sup).is_err());
        assert!(solve_fixed(&op, -2.0, 0).is_err());
    }

    #[test]
    fn values_stay_within_payoff_range() {
        let op = operator(Payoff::butterfly(50.0, 20.0).unwrap(), ControlInterval::new(-2.4, -1.6), 16, 12);
        for mode in [Extremum::Sup, Extremum::Inf] {
            let s = solve_hjb(&op, &ControlInterval::new(-2.4, -1.6), 20, mode).unwrap();
            for v in s.values() {
                assert!(v.iter().all(|&x| (-1e-12..=20.0 + 1e-12).contains(&x)));
            }
        }
    }

    #[test]
    fn singleton_set_matches_fixed_solve_exactly() {
        let op = operator(Payoff::butterfly(50.0, 20.0).unwrap(), ControlInterval::new(-2.4, -1.6), 16, 12);
        let fixed = solve_fixed(&op, -2.0, 20).unwrap();
        for mode in [Extremum::Sup, Extremum::Inf] {
            let h = solve_hjb(&op, &ControlInterval::singleton(-2.0), 20, mode).unwrap();
            for (a, b) in h.values().iter().zip(fixed.values()) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn envelopes_bracket_linear_prices() {
        let stab = ControlInterval::new(-2.4, -1.6);
        let op = operator(Payoff::butterfly(50.0, 20.0).unwrap(), stab, 20, 15);
        let sup = solve_hjb(&op, &stab, 20, Extremum::Sup).unwrap();
        let inf = solve_hjb(&op, &stab, 20, Extremum::Inf).unwrap();
        for lambda in [-2.4, -2.0, -1.6] {
            let lin = solve_fixed(&op, lambda, 20).unwrap();
            for k in 0..=20 {
                for i in 0..op.n() {
                    let (lo, mid, hi) = (inf.values()[k][i], lin.values()[k][i], sup.values()[k][i]);
                    assert!(lo <= mid + 1e-10 && mid <= hi + 1e-10, "{lo} {mid} {hi}");
                }
            }
        }
        assert!(sup.howard_iterations().iter().all(|&k| k <= 100));
    }

    #[test]
    fn controls_are_bang_bang_and_grid_independent() {
        let stab = ControlInterval::new(-2.4, -1.6);
        let op = operator(Payoff::butterfly(50.0, 20.0).unwrap(), stab, 16, 12);
        for mode in [Extremum::Sup, Extremum::Inf] {
            let two = solve_hjb(&op, &stab, 10, mode).unwrap();
            let five = solve_hjb(&op, &stab.with_points(5), 10, mode).unwrap();
            for c in two.controls() {
                assert!(c.iter().all(|&l| l == -2.4 || l == -1.6));
            }
            for (a, b) in two.values().iter().zip(five.values()) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() <= 1e-10, "{x} {y}");
                }
            }
        }
    }
}
