//! Reduced cost, switching function and the discrete reduced gradient.
//!
//! All interval integrals use the midpoint rule on node averages. With that
//! quadrature the costate of [`crate::adjoint`] is the exact adjoint of the
//! discrete forward map, so the gradient of the discrete cost is
//! `dt * Lambda_k` to round-off.

use crate::adjoint::{costate_sources, propagate_costate, CostateTrajectory};
use crate::dynamics::{propagate_forward, Control, CrankNicolson, Trajectory};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::problem::ProblemSpec;
use crate::scalar::Real;

/// The four summands of the cost.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CostBreakdown<T> {
    pub total: T,
    /// `1/2 int ||Psi - Psi_d||^2`.
    pub tracking_running: T,
    /// `1/2 ||Psi(T) - Psi_dT||^2`.
    pub tracking_final: T,
    /// `int alpha1 u`.
    pub control_linear: T,
    /// `1/2 int alpha2 u^2`.
    pub control_quadratic: T,
}

fn check_consistent<T: Real>(spec: &ProblemSpec<T>, u: &Control<T>, psi: &Trajectory<T>) -> Result<()> {
    if u.len() != spec.n_t() || psi.states().len() != spec.n_t() + 1 {
        return Err(Error::dim("control/trajectory lengths do not match the time grid"));
    }
    spec.grid.ensure_same(psi.initial().grid(), "trajectory")
}

pub fn evaluate_cost<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    psi: &Trajectory<T>,
) -> Result<CostBreakdown<T>> {
    check_consistent(spec, u, psi)?;
    let dt = spec.dt();
    let half = T::lit(0.5);
    let control_linear = u.values().iter().map(|&v| spec.alpha1 * v).sum::<T>() * dt;
    let control_quadratic = u.values().iter().map(|&v| spec.alpha2 * v * v).sum::<T>() * dt * half;
    let tracking_running = (0..spec.n_t())
        .map(|k| spec.tracking_residual_mid(k, &psi.midpoint(k)).norm_sqr())
        .sum::<T>()
        * dt
        * half;
    let tracking_final = (psi.terminal() - &spec.psi_dt).norm_sqr() * half;
    let total = control_linear + control_quadratic + tracking_running + tracking_final;
    if !total.is_finite() {
        return Err(Error::Divergence("non-finite cost".into()));
    }
    Ok(CostBreakdown {
        total,
        tracking_running,
        tracking_final,
        control_linear,
        control_quadratic,
    })
}

/// `Lambda_k = alpha1 + alpha2 u_k + Re <p_mid, B2 Psi_mid>` on each interval.
pub fn switching_function<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    psi: &Trajectory<T>,
    p: &CostateTrajectory<T>,
) -> Result<Vec<T>> {
    check_consistent(spec, u, psi)?;
    if p.states().len() != psi.states().len() {
        return Err(Error::dim("costate length does not match the state"));
    }
    spec.grid.ensure_same(p.initial().grid(), "costate")?;
    (0..spec.n_t())
        .map(|k| {
            let b = spec.potential.apply_b2hat(&psi.midpoint(k))?;
            Ok(spec.alpha1 + spec.alpha2 * u.values()[k] + p.midpoint(k).dot(&b).re)
        })
        .collect()
}

/// Magnitude of the terms of `Lambda`:
/// `|alpha1| + |alpha2| max(|u_m|, |u_M|) + max|b2| max_k ||p_mid|| ||Psi_mid||`.
pub fn switching_scale<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    psi: &Trajectory<T>,
    p: &CostateTrajectory<T>,
) -> Result<T> {
    check_consistent(spec, u, psi)?;
    if p.states().len() != psi.states().len() {
        return Err(Error::dim("costate length does not match the state"));
    }
    let b2 = spec.potential.max_abs();
    let coupling = (0..spec.n_t()).fold(T::zero(), |m, k| m.max(p.midpoint(k).norm() * psi.midpoint(k).norm()));
    let u_max = spec.bounds.lower.abs().max(spec.bounds.upper.abs());
    Ok(spec.alpha1.abs() + spec.alpha2.abs() * u_max + b2 * coupling)
}

/// Everything computed from one forward and one costate solve.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub psi: Trajectory<T>,
    pub costate: CostateTrajectory<T>,
    pub cost: CostBreakdown<T>,
    pub lambda: Vec<T>,
}

impl<T: Real> Evaluation<T> {
    /// Euclidean gradient `dt * Lambda` with respect to the control values.
    pub fn gradient(&self) -> Vec<T> {
        let dt = self.psi.time().dt();
        self.lambda.iter().map(|&l| l * dt).collect()
    }
}

pub fn evaluate<T: Real>(spec: &ProblemSpec<T>, u: &Control<T>) -> Result<Evaluation<T>> {
    let psi = propagate_forward(spec, u)?;
    let cost = evaluate_cost(spec, u, &psi)?;
    complete_evaluation(spec, u, psi, cost)
}

/// Adds costate and switching function to an already evaluated state.
pub(crate) fn complete_evaluation<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    psi: Trajectory<T>,
    cost: CostBreakdown<T>,
) -> Result<Evaluation<T>> {
    let costate = propagate_costate(spec, u, &psi)?;
    let lambda = switching_function(spec, u, &psi, &costate)?;
    Ok(Evaluation {
        psi,
        costate,
        cost,
        lambda,
    })
}

/// Reduced cost `F(u)`.
pub fn reduced_cost<T: Real>(spec: &ProblemSpec<T>, u: &Control<T>) -> Result<T> {
    let psi = propagate_forward(spec, u)?;
    Ok(evaluate_cost(spec, u, &psi)?.total)
}

/// Gradient `dF/du_k` by transposing the discrete forward map.
///
/// The per-step multiplier is recovered as `A_k^{-*}(p^{k+1} + dt/2 g_k)`
/// rather than from the node average used by [`switching_function`]; the
/// two agree exactly only because the costate recursion is the algebraic
/// transpose of the forward one.
pub fn reduced_gradient<T: Real>(spec: &ProblemSpec<T>, u: &Control<T>) -> Result<Vec<T>> {
    let psi = propagate_forward(spec, u)?;
    let p = propagate_costate(spec, u, &psi)?;
    let sources = costate_sources(spec, &psi);
    let cn = CrankNicolson::new(spec);
    let dt = spec.dt();
    let half_dt = dt * T::lit(0.5);
    (0..spec.n_t())
        .map(|k| {
            let uk = u.values()[k];
            let mut y: ComplexField<T> = p.state(k + 1).clone();
            y.axpy(num_complex::Complex::new(half_dt, T::zero()), &sources[k]);
            let multiplier = cn.solve_adjoint(k, uk, &y)?;
            let b = spec.potential.apply_b2hat(&psi.midpoint(k))?;
            Ok(dt * (spec.alpha1 + spec.alpha2 * uk + multiplier.dot(&b).re))
        })
        .collect()
}
