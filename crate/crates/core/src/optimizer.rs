//! Projected-gradient minimization of the reduced cost over the control box.
//!
//! The search direction is the `L2(0, T)` gradient `Lambda`; the trial step
//! is the Barzilai–Borwein quotient of the previous iterate pair (or
//! `initial_step` when unavailable) and is backtracked until the Armijo
//! condition holds, so the accepted costs never increase.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::check_first_order;
use crate::dynamics::{propagate_forward, Control};
use crate::error::{Error, Result};
use crate::objective::{complete_evaluation, evaluate, evaluate_cost, switching_scale, Evaluation};
use crate::problem::{Bounds, ProblemSpec};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions<T> {
    pub max_iters: usize,
    /// Tolerance on `||u - P(u - g)||_2` with `g = dt * Lambda`. `None`
    /// selects `1e-8 * sqrt(n_t) * dt`.
    pub grad_tol: Option<T>,
    pub armijo_c: T,
    pub backtrack_factor: T,
    pub initial_step: T,
    pub max_backtracks: usize,
    /// Use the Barzilai–Borwein trial step after the first iteration.
    pub barzilai_borwein: bool,
    /// Starting control; `None` starts from the middle of the box.
    pub initial: Option<Vec<T>>,
    /// Seed of the multistart stream.
    pub seed: u64,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: None,
            armijo_c: T::lit(1e-4),
            backtrack_factor: T::lit(0.5),
            initial_step: T::one(),
            max_backtracks: 60,
            barzilai_borwein: true,
            initial: None,
            seed: 0,
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: T| x > T::zero() && x < T::one();
        if !unit(self.armijo_c) || !unit(self.backtrack_factor) {
            return Err(Error::InvalidProblem(
                "armijo_c and backtrack_factor must lie in (0, 1)".into(),
            ));
        }
        if !(self.initial_step > T::zero()) || !self.initial_step.is_finite() {
            return Err(Error::InvalidProblem("initial_step must be positive".into()));
        }
        if let Some(tol) = self.grad_tol {
            if !(tol > T::zero()) {
                return Err(Error::InvalidProblem("grad_tol must be positive".into()));
            }
        }
        if self.max_backtracks == 0 {
            return Err(Error::InvalidProblem("max_backtracks must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_grad_tol(&self, n_t: usize, dt: T) -> T {
        self.grad_tol
            .unwrap_or_else(|| T::lit(1e-8) * T::count(n_t).sqrt() * dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// No step satisfied the Armijo condition; the last accepted iterate is
    /// returned.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SolveResult<T> {
    #[serde(skip)]
    pub u_opt: Control<T>,
    /// Cost at the initial control followed by every accepted iterate.
    pub cost_history: Vec<T>,
    /// Projected-gradient norm at the same points.
    pub projected_grad_norms: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub status: SolveStatus,
    pub final_cost: T,
    /// `Lambda` at `u_opt`.
    #[serde(skip)]
    pub lambda: Vec<T>,
    /// Measure of intervals violating the sign conditions, see
    /// [`check_first_order`].
    pub first_order_violation: T,
    /// Step length of the last accepted iteration, for diagnostics.
    pub last_step: T,
}

/// Componentwise clamp onto `[lower, upper]`.
pub fn project_box<T: Real>(u: &[T], bounds: &Bounds<T>) -> Vec<T> {
    u.iter().map(|&x| bounds.clamp(x)).collect()
}

fn projected_grad_norm<T: Real>(u: &[T], g: &[T], bounds: &Bounds<T>) -> T {
    u.iter()
        .zip(g)
        .map(|(&x, &gk)| {
            let d = x - bounds.clamp(x - gk);
            d * d
        })
        .sum::<T>()
        .sqrt()
}

fn initial_control<T: Real>(spec: &ProblemSpec<T>, opts: &SolverOptions<T>) -> Result<Vec<T>> {
    match &opts.initial {
        Some(u0) if u0.len() != spec.n_t() => Err(Error::dim(format!(
            "initial control has {} values for {} time steps",
            u0.len(),
            spec.n_t()
        ))),
        Some(u0) => Ok(project_box(u0, &spec.bounds)),
        None => {
            let mid = (spec.bounds.lower + spec.bounds.upper) * T::lit(0.5);
            Ok(vec![mid; spec.n_t()])
        }
    }
}

/// Projected gradient with Armijo backtracking from the configured start.
pub fn solve<T: Real>(spec: &ProblemSpec<T>, opts: &SolverOptions<T>) -> Result<SolveResult<T>> {
    spec.validate()?;
    opts.validate()?;
    let u0 = initial_control(spec, opts)?;
    run(spec, opts, u0)
}

fn run<T: Real>(spec: &ProblemSpec<T>, opts: &SolverOptions<T>, u0: Vec<T>) -> Result<SolveResult<T>> {
    let bounds = spec.bounds;
    let dt = spec.dt();
    let tol = opts.effective_grad_tol(spec.n_t(), dt);
    let min_step = T::lit(1e-12);
    let max_step = T::lit(1e12);

    let mut u = u0;
    let mut ev: Evaluation<T> = evaluate(spec, &Control::new(u.clone()))?;
    let mut grad = ev.gradient();
    let mut pg = projected_grad_norm(&u, &grad, &bounds);
    let mut cost_history = vec![ev.cost.total];
    let mut projected_grad_norms = vec![pg];
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut step = opts.initial_step;
    let mut last_step = T::zero();
    let mut previous: Option<(Vec<T>, Vec<T>)> = None;

    while iterations < opts.max_iters {
        if pg <= tol {
            status = SolveStatus::Converged;
            break;
        }
        if opts.barzilai_borwein {
            if let Some((u_prev, lam_prev)) = &previous {
                let mut ss = T::zero();
                let mut sy = T::zero();
                for k in 0..u.len() {
                    let s = u[k] - u_prev[k];
                    let y = ev.lambda[k] - lam_prev[k];
                    ss = ss + s * s;
                    sy = sy + s * y;
                }
                step = if sy > T::zero() {
                    (ss / sy).max(min_step).min(max_step)
                } else {
                    opts.initial_step
                };
            }
        }

        let mut accepted = None;
        let mut s = step;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<T> = u
                .iter()
                .zip(&ev.lambda)
                .map(|(&x, &l)| bounds.clamp(x - s * l))
                .collect();
            let decrease: T = trial
                .iter()
                .zip(&u)
                .zip(&grad)
                .map(|((&a, &b), &g)| g * (a - b))
                .sum();
            if decrease >= T::zero() {
                s = s * opts.backtrack_factor;
                continue;
            }
            let trial_u = Control::new(trial);
            let psi = propagate_forward(spec, &trial_u)?;
            let cost = evaluate_cost(spec, &trial_u, &psi)?;
            if cost.total <= ev.cost.total + opts.armijo_c * decrease {
                let trial_ev = complete_evaluation(spec, &trial_u, psi, cost)?;
                accepted = Some((trial_u.into_values(), trial_ev, s));
                break;
            }
            s = s * opts.backtrack_factor;
        }
        let Some((trial, trial_ev, s)) = accepted else {
            status = SolveStatus::LineSearchFailed;
            break;
        };
        previous = Some((std::mem::replace(&mut u, trial), std::mem::take(&mut ev.lambda)));
        ev = trial_ev;
        grad = ev.gradient();
        pg = projected_grad_norm(&u, &grad, &bounds);
        cost_history.push(ev.cost.total);
        projected_grad_norms.push(pg);
        last_step = s;
        step = s;
        iterations += 1;
    }
    if status == SolveStatus::MaxIterations && pg <= tol {
        status = SolveStatus::Converged;
    }
    let u_opt = Control::bounded(u, bounds)?;
    let scale = switching_scale(spec, &u_opt, &ev.psi, &ev.costate)?;
    let first_order_violation = check_first_order(
        u_opt.values(),
        &bounds,
        &ev.lambda,
        lambda_tol(T::lit(1e-4), &ev.lambda, scale),
        default_u_tol(&bounds),
        dt,
    )?;
    Ok(SolveResult {
        u_opt,
        cost_history,
        projected_grad_norms,
        iterations,
        converged: status == SolveStatus::Converged,
        status,
        final_cost: ev.cost.total,
        lambda: ev.lambda,
        first_order_violation,
        last_step,
    })
}

/// `rel * max|Lambda|`, floored at `sqrt(eps) * scale` so that a switching
/// function vanishing to round-off does not produce a round-off threshold.
pub(crate) fn lambda_tol<T: Real>(rel: T, lambda: &[T], scale: T) -> T {
    let max = lambda.iter().fold(T::zero(), |m, &l| m.max(l.abs()));
    (rel * max).max(T::epsilon().sqrt() * scale)
}

pub(crate) fn default_u_tol<T: Real>(bounds: &Bounds<T>) -> T {
    T::lit(1e-6) * bounds.width()
}

/// Outcome of [`multistart`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MultistartResult<T> {
    pub best: SolveResult<T>,
    pub best_index: usize,
    /// Final cost per start, `None` for failed starts.
    pub final_costs: Vec<Option<T>>,
    pub failures: Vec<String>,
}

/// Starting controls: the configured start, then seeded smooth random
/// profiles inside the box.
pub fn multistart_initial_controls<T: Real>(
    spec: &ProblemSpec<T>,
    opts: &SolverOptions<T>,
    n_starts: usize,
) -> Result<Vec<Vec<T>>> {
    let mut starts = vec![initial_control(spec, opts)?];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = spec.n_t();
    let b = spec.bounds;
    for _ in 1..n_starts {
        let level: f64 = rng.random_range(0.1..0.9);
        let amp: f64 = rng.random_range(0.0..0.4);
        let freq: f64 = rng.random_range(0.5..4.0);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let u: Vec<T> = (0..n)
            .map(|k| {
                let s = (k as f64 + 0.5) / n as f64;
                let frac = (level + amp * (std::f64::consts::TAU * freq * s + phase).sin()).clamp(0.0, 1.0);
                b.lower + b.width() * T::lit(frac)
            })
            .collect();
        starts.push(u);
    }
    Ok(starts)
}

/// Runs [`solve`] from `n_starts` deterministic starts (concurrently) and
/// keeps the lowest final cost. Fails only when every start fails.
pub fn multistart<T: Real>(
    spec: &ProblemSpec<T>,
    opts: &SolverOptions<T>,
    n_starts: usize,
) -> Result<MultistartResult<T>> {
    if n_starts == 0 {
        return Err(Error::InvalidProblem("n_starts must be at least 1".into()));
    }
    spec.validate()?;
    opts.validate()?;
    let starts = multistart_initial_controls(spec, opts, n_starts)?;
    let outcomes: Vec<Result<SolveResult<T>>> =
        starts.into_par_iter().map(|u0| run(spec, opts, u0)).collect();

    let mut best: Option<(usize, SolveResult<T>)> = None;
    let mut final_costs = Vec::with_capacity(n_starts);
    let mut failures = Vec::new();
    for (i, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => {
                final_costs.push(Some(r.final_cost));
                if best.as_ref().is_none_or(|(_, b)| r.final_cost < b.final_cost) {
                    best = Some((i, r));
                }
            }
            Err(e) => {
                final_costs.push(None);
                failures.push(format!("start {i}: {e}"));
            }
        }
    }
    match best {
        Some((best_index, best)) => Ok(MultistartResult {
            best,
            best_index,
            final_costs,
            failures,
        }),
        None => Err(Error::AllStartsFailed(failures)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TimeGrid;
    use crate::field::{dirichlet_mode, Potential, SpatialGrid};
    use crate::problem::{SourceTerm, TargetTerm};
    use proptest::prelude::*;

    fn tracking_free(alpha1: f64, alpha2: f64, lower: f64, upper: f64) -> ProblemSpec<f64> {
        let grid = SpatialGrid::unit(10).unwrap();
        let psi0 = dirichlet_mode(grid, 1);
        ProblemSpec {
            grid,
            time: TimeGrid::new(1.0, 20).unwrap(),
            alpha1,
            alpha2,
            bounds: Bounds::new(lower, upper).unwrap(),
            potential: Potential::zero(grid),
            source: SourceTerm::Zero,
            psi_d: TargetTerm::Static(psi0.clone()),
            psi_dt: psi0.clone(),
            psi0,
        }
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(u in proptest::collection::vec(-5.0f64..5.0, 1..30)) {
            let b = Bounds::new(-1.0, 2.0).unwrap();
            let p = project_box(&u, &b);
            prop_assert_eq!(project_box(&p, &b), p.clone());
            prop_assert!(p.iter().all(|&x| b.contains(x)));
            for (a, q) in u.iter().zip(&p) {
                if b.contains(*a) {
                    prop_assert_eq!(a, q);
                }
            }
        }
    }

    #[test]
    fn projection_examples() {
        let b = Bounds::new(0.0, 1.0).unwrap();
        assert_eq!(project_box(&[2.0, 2.0], &b), vec![1.0, 1.0]);
        assert_eq!(project_box(&[0.3, 0.7], &b), vec![0.3, 0.7]);
    }

    #[test]
    fn quadratic_control_cost_goes_to_zero() {
        let s = tracking_free(0.0, 0.5, -1.0, 1.0);
        let opts = SolverOptions {
            initial: Some((0..20).map(|k| 0.9 * (k as f64 * 0.7).sin()).collect()),
            ..SolverOptions::default()
        };
        let r = solve(&s, &opts).unwrap();
        assert!(r.converged);
        assert!(r.u_opt.values().iter().all(|x| x.abs() < 1e-8));
        assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn linear_cost_drives_to_lower_bound() {
        let s = tracking_free(0.3, 0.0, -0.5, 1.0);
        let r = solve(&s, &SolverOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.u_opt.values().iter().all(|&x| x == -0.5));
        assert_eq!(r.first_order_violation, 0.0);
    }

    #[test]
    fn options_validation() {
        let bad = SolverOptions::<f64> {
            armijo_c: 1.0,
            ..SolverOptions::default()
        };
        assert!(bad.validate().is_err());
        let s = tracking_free(0.0, 0.5, -1.0, 1.0);
        let wrong = SolverOptions {
            initial: Some(vec![0.0; 3]),
            ..SolverOptions::default()
        };
        assert!(matches!(solve(&s, &wrong), Err(Error::Dimension(_))));
    }

    #[test]
    fn single_start_matches_solve() {
        let s = tracking_free(0.1, 0.5, -1.0, 1.0);
        let opts = SolverOptions::default();
        let a = solve(&s, &opts).unwrap();
        let m = multistart(&s, &opts, 1).unwrap();
        assert_eq!(m.best, a);
        assert_eq!(m.best_index, 0);
    }

    #[test]
    fn convex_starts_agree() {
        let s = tracking_free(0.1, 0.5, -1.0, 1.0);
        let m = multistart(&s, &SolverOptions::default(), 4).unwrap();
        let costs: Vec<f64> = m.final_costs.iter().map(|c| c.unwrap()).collect();
        for c in &costs {
            assert!((c - costs[0]).abs() < 1e-8);
            assert!(m.best.final_cost <= *c);
        }
        assert!(multistart(&s, &SolverOptions::default(), 0).is_err());
    }
}
