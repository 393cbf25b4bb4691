//! Backward costate propagation as the exact transpose of the forward
//! Crank–Nicolson recursion, and the discrete integration-by-parts balance.
//!
//! The backward step on interval `k` is
//!
//! ```text
//! A_k^* p^k = A_k p^{k+1} + dt g_k,
//! ```
//!
//! and for any forward pair `A_k z^{k+1} = A_k^* z^k + dt b_k` one has, with
//! `y_mid = (y^k + y^{k+1}) / 2`,
//!
//! ```text
//! <p^N, z^N> + sum_k dt <g_k, z_mid> = <p^0, z^0> + sum_k dt <p_mid, b_k>
//! ```
//!
//! exactly in exact arithmetic.

use std::ops::Deref;

use num_complex::Complex;

use crate::dynamics::{CrankNicolson, Control, Trajectory};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::problem::{ProblemSpec, SourceTerm};
use crate::scalar::{Cplx, Real};

/// Costate `p` at the time nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateTrajectory<T>(Trajectory<T>);

impl<T> Deref for CostateTrajectory<T> {
    type Target = Trajectory<T>;
    fn deref(&self) -> &Trajectory<T> {
        &self.0
    }
}

impl<T: Real> CostateTrajectory<T> {
    pub fn into_inner(self) -> Trajectory<T> {
        self.0
    }
}

/// Solves the backward recursion from `terminal` at `T` with interval
/// sources `g`.
pub fn propagate_backward<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    terminal: ComplexField<T>,
    source: &SourceTerm<T>,
) -> Result<CostateTrajectory<T>> {
    if u.len() != spec.n_t() {
        return Err(Error::dim("control length does not match the time grid"));
    }
    source.validate(&spec.grid, spec.n_t(), "adjoint source")?;
    spec.grid.ensure_same(terminal.grid(), "terminal costate")?;
    let cn = CrankNicolson::new(spec);
    let n = spec.n_t();
    let mut states = vec![ComplexField::zeros(spec.grid); n + 1];
    states[n] = terminal;
    for k in (0..n).rev() {
        states[k] = cn.backward_step(k, u.values()[k], &states[k + 1], source.at_interval(k))?;
    }
    Ok(CostateTrajectory(Trajectory::new(spec.time, states)?))
}

/// Interval sources `Psi_mid - Psi_d,mid` of the costate equation.
pub(crate) fn costate_sources<T: Real>(
    spec: &ProblemSpec<T>,
    psi: &Trajectory<T>,
) -> Vec<ComplexField<T>> {
    (0..spec.n_t())
        .map(|k| spec.tracking_residual_mid(k, &psi.midpoint(k)))
        .collect()
}

/// Costate of the tracking problem: `p(T) = Psi(T) - Psi_dT`, sources
/// `Psi - Psi_d` at interval midpoints.
pub fn propagate_costate<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    psi: &Trajectory<T>,
) -> Result<CostateTrajectory<T>> {
    if psi.states().len() != spec.n_t() + 1 {
        return Err(Error::dim("state trajectory length does not match the time grid"));
    }
    let terminal = psi.terminal() - &spec.psi_dt;
    propagate_backward(
        spec,
        u,
        terminal,
        &SourceTerm::PerInterval(costate_sources(spec, psi)),
    )
}

/// Both sides of the discrete integration-by-parts identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbpBalance<T> {
    /// `<p(T), z(T)> + int <g, z>`.
    pub lhs: Cplx<T>,
    /// `<p(0), z(0)> + int <p, b>`.
    pub rhs: Cplx<T>,
    /// `|lhs - rhs|`.
    pub residual: T,
    /// Sum of the moduli of the individual terms, for relative comparisons.
    pub scale: T,
}

/// Evaluates the discrete integration-by-parts balance for a forward
/// solution `z` with sources `b` and a backward solution `p` with sources `g`.
pub fn ibp_residual<T: Real>(
    p: &Trajectory<T>,
    z: &Trajectory<T>,
    source_b: &SourceTerm<T>,
    source_g: &SourceTerm<T>,
) -> Result<IbpBalance<T>> {
    if p.time() != z.time() {
        return Err(Error::dim("costate and state use different time grids"));
    }
    let grid = *z.initial().grid();
    grid.ensure_same(p.initial().grid(), "ibp")?;
    let n_t = z.time().n_t();
    source_b.validate(&grid, n_t, "ibp source b")?;
    source_g.validate(&grid, n_t, "ibp source g")?;
    let dt = z.time().dt();
    let zero = Complex::new(T::zero(), T::zero());

    let terminal = p.terminal().dot(z.terminal());
    let initial = p.initial().dot(z.initial());
    let mut scale = terminal.norm() + initial.norm();
    let mut g_z = zero;
    let mut p_b = zero;
    for k in 0..n_t {
        if let Some(g) = source_g.at_interval(k) {
            let t = g.dot(&z.midpoint(k)) * dt;
            scale = scale + t.norm();
            g_z = g_z + t;
        }
        if let Some(b) = source_b.at_interval(k) {
            let t = p.midpoint(k).dot(b) * dt;
            scale = scale + t.norm();
            p_b = p_b + t;
        }
    }
    let lhs = terminal + g_z;
    let rhs = initial + p_b;
    Ok(IbpBalance {
        lhs,
        rhs,
        residual: (lhs - rhs).norm(),
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{propagate_affine, propagate_forward, TimeGrid};
    use crate::field::{dirichlet_eigenvalue, dirichlet_mode, Potential, SpatialGrid};
    use crate::problem::{Bounds, TargetTerm};

    fn spec() -> ProblemSpec<f64> {
        let grid = SpatialGrid::unit(40).unwrap();
        let psi0 = dirichlet_mode(grid, 1);
        ProblemSpec {
            grid,
            time: TimeGrid::new(10.0, 200).unwrap(),
            alpha1: 0.0,
            alpha2: 0.0,
            bounds: Bounds::new(0.0, 1.0).unwrap(),
            potential: Potential::from_fns(
                grid,
                |x| 16.0 * x * x * (1.0 - x) * (1.0 - x),
                |x| 32.0 * x * (1.0 - x) * (1.0 - 2.0 * x),
                |x| 16.0 * (2.0 - 12.0 * x + 12.0 * x * x),
            ),
            source: SourceTerm::Zero,
            psi_d: TargetTerm::Static(psi0.clone()),
            psi_dt: psi0.clone(),
            psi0,
        }
    }

    #[test]
    fn zero_data_gives_zero_costate() {
        let mut s = spec();
        let u = Control::new((0..200).map(|k| 0.5 + 0.4 * (0.1 * k as f64).sin()).collect());
        let psi = propagate_forward(&s, &u).unwrap();
        s.psi_d = TargetTerm::Nodes(psi.states().to_vec());
        s.psi_dt = psi.terminal().clone();
        let p = propagate_costate(&s, &u, &psi).unwrap();
        assert!(p.is_zero());
    }

    #[test]
    fn backward_eigenvector_follows_conjugate_phase() {
        let mut s = spec();
        s.potential = Potential::zero(s.grid);
        let u = Control::zeros(200);
        let terminal = dirichlet_mode(s.grid, 2);
        let p = propagate_backward(&s, &u, terminal.clone(), &SourceTerm::Zero).unwrap();
        let lambda = -dirichlet_eigenvalue(&s.grid, 2);
        let dt = s.dt();
        let r = (Complex::new(1.0, -dt * lambda / 2.0) / Complex::new(1.0, dt * lambda / 2.0)).conj();
        let mut expected = terminal;
        for k in (0..=200).rev() {
            assert!((p.state(k) - &expected).norm() < 1e-11, "node {k}");
            expected = expected.scale(r);
        }
    }

    #[test]
    fn homogeneous_pairing_is_conserved() {
        let s = spec();
        let u = Control::new((0..200).map(|k| (0.05 * k as f64).cos().abs()).collect());
        let z0 = dirichlet_mode(s.grid, 3).scale(Complex::new(0.3, -0.7));
        let z = propagate_affine(&s, &u, z0, &SourceTerm::Zero).unwrap();
        let pt = dirichlet_mode(s.grid, 1) + dirichlet_mode(s.grid, 3).scale(Complex::new(0.0, 2.0));
        let p = propagate_backward(&s, &u, pt, &SourceTerm::Zero).unwrap();
        let c0 = p.state(0).dot(z.state(0));
        for k in 0..=200 {
            let ck = p.state(k).dot(z.state(k));
            assert!((ck - c0).norm() < 1e-12 * c0.norm().max(1.0));
        }
    }

    #[test]
    fn ibp_trivial_case() {
        let s = spec();
        let u = Control::zeros(200);
        let z = propagate_affine(&s, &u, ComplexField::zeros(s.grid), &SourceTerm::Zero).unwrap();
        let p = propagate_backward(&s, &u, dirichlet_mode(s.grid, 1), &SourceTerm::Zero).unwrap();
        let bal = ibp_residual(&p, &z, &SourceTerm::Zero, &SourceTerm::Zero).unwrap();
        assert_eq!(bal.residual, 0.0);
    }
}
