//! Crank–Nicolson propagation of the controlled state, the linearized state
//! `z[v]` and the Goh-transformed state `xi[w]`.
//!
//! With the control frozen on each interval, step `k` solves
//!
//! ```text
//! (I + i dt/2 H_k) y^{k+1} = (I - i dt/2 H_k) y^k + dt s_k,
//! H_k = -Lap_h + u_k diag(b2),
//! ```
//!
//! where `s_k` is the interval source. `H_k` is real symmetric, so the step
//! matrix `A_k = I + i dt/2 H_k` satisfies `A_k^* = I - i dt/2 H_k` and the
//! homogeneous map `A_k^{-1} A_k^*` is unitary.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::field::{ComplexField, CommutatorModel, SpatialGrid};
use crate::problem::{Bounds, ProblemSpec, SourceTerm};
use crate::scalar::{imag_unit, Cplx, Real};

/// Uniform time grid on `[0, T]` with `n_t` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    horizon: T,
    n_t: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(horizon: T, n_t: usize) -> Result<Self> {
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::InvalidProblem(format!("horizon T = {horizon} must be positive")));
        }
        if n_t == 0 {
            return Err(Error::InvalidProblem("n_t must be positive".into()));
        }
        Ok(Self { horizon, n_t })
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dt(&self) -> T {
        self.horizon / T::count(self.n_t)
    }

    /// Node time `t_k = k dt`.
    pub fn node(&self, k: usize) -> T {
        T::count(k) * self.dt()
    }

    /// Midpoint of interval `k`.
    pub fn midpoint(&self, k: usize) -> T {
        (T::count(k) + T::lit(0.5)) * self.dt()
    }

    pub fn midpoints(&self) -> Vec<T> {
        (0..self.n_t).map(|k| self.midpoint(k)).collect()
    }

    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.horizon, self.n_t * factor)
    }
}

/// Piecewise-constant control, one value per time interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Control<T> {
    values: Vec<T>,
    bounds: Option<Bounds<T>>,
}

impl<T: Real> Control<T> {
    /// Unconstrained control (a direction `v` or `w`).
    pub fn new(values: Vec<T>) -> Self {
        Self { values, bounds: None }
    }

    pub fn constant(value: T, n_t: usize) -> Self {
        Self::new(vec![value; n_t])
    }

    pub fn zeros(n_t: usize) -> Self {
        Self::constant(T::zero(), n_t)
    }

    /// Admissible control; every value must lie in `bounds`.
    pub fn bounded(values: Vec<T>, bounds: Bounds<T>) -> Result<Self> {
        let bounds = Bounds::new(bounds.lower, bounds.upper)?;
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !bounds.contains(**v)) {
            return Err(Error::InvalidProblem(format!(
                "control value {v} at interval {k} outside [{}, {}]",
                bounds.lower, bounds.upper
            )));
        }
        Ok(Self {
            values,
            bounds: Some(bounds),
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn bounds(&self) -> Option<Bounds<T>> {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Discrete `L1(0, T)` norm.
    pub fn l1_norm(&self, dt: T) -> T {
        self.values.iter().map(|v| v.abs()).sum::<T>() * dt
    }

    /// Discrete `L2(0, T)` norm.
    pub fn l2_norm(&self, dt: T) -> T {
        (self.values.iter().map(|&v| v * v).sum::<T>() * dt).sqrt()
    }

    pub fn scaled(&self, a: T) -> Self {
        Self::new(self.values.iter().map(|&v| v * a).collect())
    }

    /// `self + a * other`, unconstrained.
    pub fn plus(&self, a: T, other: &Self) -> Self {
        assert_eq!(self.len(), other.len());
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&x, &y)| x + a * y)
                .collect(),
        )
    }
}

/// States at the time nodes `t_0, ..., t_{n_t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    time: TimeGrid<T>,
    states: Vec<ComplexField<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(time: TimeGrid<T>, states: Vec<ComplexField<T>>) -> Result<Self> {
        if states.len() != time.n_t() + 1 {
            return Err(Error::dim(format!(
                "trajectory has {} states for {} time nodes",
                states.len(),
                time.n_t() + 1
            )));
        }
        let g = *states[0].grid();
        states.iter().try_for_each(|s| g.ensure_same(s.grid(), "trajectory"))?;
        Ok(Self { time, states })
    }

    pub fn time(&self) -> &TimeGrid<T> {
        &self.time
    }

    pub fn states(&self) -> &[ComplexField<T>] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &ComplexField<T> {
        &self.states[k]
    }

    pub fn initial(&self) -> &ComplexField<T> {
        &self.states[0]
    }

    pub fn terminal(&self) -> &ComplexField<T> {
        &self.states[self.states.len() - 1]
    }

    /// Average of the states bounding interval `k`.
    pub fn midpoint(&self, k: usize) -> ComplexField<T> {
        ComplexField::midpoint(&self.states[k], &self.states[k + 1])
    }

    /// `max_k ||y^k||`, the discrete `C(0, T; L2)` norm.
    pub fn sup_norm(&self) -> T {
        self.states.iter().map(|s| s.norm()).fold(T::zero(), T::max)
    }

    /// `max_k ||self^k - other^k||`.
    pub fn sup_distance(&self, other: &Self) -> T {
        assert_eq!(self.states.len(), other.states.len());
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).norm())
            .fold(T::zero(), T::max)
    }

    pub fn is_zero(&self) -> bool {
        self.states.iter().all(|s| s.max_abs() == T::zero())
    }
}

/// Crank–Nicolson step operators for one problem instance.
///
/// `A_k` has the constant off-diagonal `-i dt/(2 h^2)` and diagonal
/// `1 + i dt/2 (2/h^2 + u_k b2_j)`; entries are formed on the fly.
pub(crate) struct CrankNicolson<'a, T> {
    spec: &'a ProblemSpec<T>,
    half_dt: T,
    inv_h2: T,
    residual_tol: T,
}

impl<'a, T: Real> CrankNicolson<'a, T> {
    pub fn new(spec: &'a ProblemSpec<T>) -> Self {
        let h = spec.grid.step();
        Self {
            spec,
            half_dt: spec.dt() * T::lit(0.5),
            inv_h2: T::one() / (h * h),
            residual_tol: T::lit(1e-12).max(T::epsilon() * T::lit(100.0)),
        }
    }

    /// Off-diagonal and diagonal of `I + i s H_k`.
    fn entries(&self, u_k: T, s: T) -> (Cplx<T>, impl Fn(usize) -> Cplx<T> + '_) {
        let i = imag_unit::<T>();
        let two = T::lit(2.0);
        let b = self.spec.potential.b2();
        let inv_h2 = self.inv_h2;
        let off = i * (-s * inv_h2);
        (off, move |j: usize| {
            Complex::new(T::one(), T::zero()) + i * (s * (two * inv_h2 + u_k * b[j]))
        })
    }

    /// `(I + i s H_k) x`.
    fn apply(&self, u_k: T, s: T, x: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let (off, diag) = self.entries(u_k, s);
        let n = x.len();
        (0..n)
            .map(|j| {
                let mut acc = diag(j) * x[j];
                if j > 0 {
                    acc = acc + off * x[j - 1];
                }
                if j + 1 < n {
                    acc = acc + off * x[j + 1];
                }
                acc
            })
            .collect()
    }

    /// Solves `(I + i s H_k) x = rhs` by Thomas elimination and checks the
    /// residual.
    fn solve(&self, step: usize, u_k: T, s: T, rhs: Vec<Cplx<T>>, grid: SpatialGrid<T>) -> Result<ComplexField<T>> {
        let (off, diag) = self.entries(u_k, s);
        let n = rhs.len();
        let zero = Complex::new(T::zero(), T::zero());
        let mut c = vec![zero; n];
        let mut x = rhs.clone();
        let mut beta = diag(0);
        for j in 0..n {
            if j > 0 {
                beta = diag(j) - off * c[j - 1];
            }
            if beta.norm_sqr() == T::zero() {
                return Err(Error::SingularSystem { step, pivot: j });
            }
            c[j] = off / beta;
            x[j] = if j > 0 { (x[j] - off * x[j - 1]) / beta } else { x[j] / beta };
        }
        for j in (0..n.saturating_sub(1)).rev() {
            let next = x[j + 1];
            x[j] = x[j] - c[j] * next;
        }

        let mut res = T::zero();
        let mut scale = T::zero();
        for j in 0..n {
            let mut ax = diag(j) * x[j];
            if j > 0 {
                ax = ax + off * x[j - 1];
            }
            if j + 1 < n {
                ax = ax + off * x[j + 1];
            }
            res = res.max((ax - rhs[j]).norm());
            scale = scale.max(rhs[j].norm());
        }
        if !(res <= self.residual_tol * scale) && scale > T::zero() {
            return Err(Error::Residual {
                step,
                residual: (res / scale).to_f64_lossy(),
            });
        }
        if x.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Divergence(format!("non-finite state at step {step}")));
        }
        Ok(ComplexField::from_vec(grid, x))
    }

    fn add_source(&self, rhs: &mut [Cplx<T>], source: Option<&ComplexField<T>>) {
        if let Some(f) = source {
            let dt = self.spec.dt();
            for (r, v) in rhs.iter_mut().zip(f.values()) {
                *r = *r + *v * dt;
            }
        }
    }

    /// One forward step: `A_k y = A_k^* x + dt s`.
    pub fn forward_step(
        &self,
        k: usize,
        u_k: T,
        x: &ComplexField<T>,
        source: Option<&ComplexField<T>>,
    ) -> Result<ComplexField<T>> {
        let mut rhs = self.apply(u_k, -self.half_dt, x.values());
        self.add_source(&mut rhs, source);
        self.solve(k, u_k, self.half_dt, rhs, *x.grid())
    }

    /// One backward (adjoint) step: `A_k^* p = A_k p_next + dt g`.
    pub fn backward_step(
        &self,
        k: usize,
        u_k: T,
        p_next: &ComplexField<T>,
        source: Option<&ComplexField<T>>,
    ) -> Result<ComplexField<T>> {
        let mut rhs = self.apply(u_k, self.half_dt, p_next.values());
        self.add_source(&mut rhs, source);
        self.solve(k, u_k, -self.half_dt, rhs, *p_next.grid())
    }

    /// `A_k^{-*} y`.
    pub fn solve_adjoint(&self, k: usize, u_k: T, y: &ComplexField<T>) -> Result<ComplexField<T>> {
        self.solve(k, u_k, -self.half_dt, y.values().to_vec(), *y.grid())
    }
}

fn check_control<T: Real>(spec: &ProblemSpec<T>, u: &Control<T>, what: &str) -> Result<()> {
    if u.len() != spec.n_t() {
        return Err(Error::dim(format!(
            "{what} has {} values, time grid has {} intervals",
            u.len(),
            spec.n_t()
        )));
    }
    if u.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence(format!("{what} contains non-finite values")));
    }
    Ok(())
}

fn check_reference<T: Real>(spec: &ProblemSpec<T>, psi: &Trajectory<T>) -> Result<()> {
    if psi.states().len() != spec.n_t() + 1 {
        return Err(Error::dim("reference trajectory length does not match the time grid"));
    }
    spec.grid.ensure_same(psi.initial().grid(), "reference trajectory")
}

/// Solves `dy/dt + A y = u B2 y + s(t)`, `y(0) = init` with interval
/// sources `s`.
pub fn propagate_affine<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    init: ComplexField<T>,
    source: &SourceTerm<T>,
) -> Result<Trajectory<T>> {
    check_control(spec, u, "control")?;
    source.validate(&spec.grid, spec.n_t(), "source")?;
    spec.grid.ensure_same(init.grid(), "initial state")?;
    let cn = CrankNicolson::new(spec);
    let mut states = Vec::with_capacity(spec.n_t() + 1);
    states.push(init);
    for (k, &uk) in u.values().iter().enumerate() {
        let next = cn.forward_step(k, uk, &states[k], source.at_interval(k))?;
        states.push(next);
    }
    Trajectory::new(spec.time, states)
}

/// Controlled state `Psi[u]`.
pub fn propagate_forward<T: Real>(spec: &ProblemSpec<T>, u: &Control<T>) -> Result<Trajectory<T>> {
    propagate_affine(spec, u, spec.psi0.clone(), &spec.source)
}

/// Linearized state `z[v]`: source `v_k B2 Psi_mid` on interval `k`, `z(0) = 0`.
pub fn propagate_linearized<T: Real>(
    spec: &ProblemSpec<T>,
    u_ref: &Control<T>,
    psi_ref: &Trajectory<T>,
    v: &Control<T>,
) -> Result<Trajectory<T>> {
    check_control(spec, v, "direction")?;
    check_reference(spec, psi_ref)?;
    let sources = (0..spec.n_t())
        .map(|k| {
            let b = spec.potential.apply_b2hat(&psi_ref.midpoint(k))?;
            Ok(b.scale_real(v.values()[k]))
        })
        .collect::<Result<Vec<_>>>()?;
    propagate_affine(
        spec,
        u_ref,
        ComplexField::zeros(spec.grid),
        &SourceTerm::PerInterval(sources),
    )
}

/// Goh-transformed state `xi[w]` with the default commutator model.
pub fn propagate_goh_xi<T: Real>(
    spec: &ProblemSpec<T>,
    u_ref: &Control<T>,
    psi_ref: &Trajectory<T>,
    w: &Control<T>,
) -> Result<Trajectory<T>> {
    propagate_goh_xi_with(spec, u_ref, psi_ref, w, CommutatorModel::default())
}

/// `b1_z = -B2 f - M1 Psi = i b2 f - M1 Psi` on interval `k`.
pub(crate) fn goh_source<T: Real>(
    spec: &ProblemSpec<T>,
    psi_mid: &ComplexField<T>,
    k: usize,
    model: CommutatorModel,
) -> Result<ComplexField<T>> {
    let mut b = -&spec.potential.m1(model, psi_mid)?;
    if let Some(f) = spec.source.at_interval(k) {
        b -= &spec.potential.apply_b2hat(f)?;
    }
    Ok(b)
}

/// `xi[w]`: source `w_k b1_z` on interval `k`, `xi(0) = 0`.
pub fn propagate_goh_xi_with<T: Real>(
    spec: &ProblemSpec<T>,
    u_ref: &Control<T>,
    psi_ref: &Trajectory<T>,
    w: &Control<T>,
    model: CommutatorModel,
) -> Result<Trajectory<T>> {
    check_control(spec, w, "Goh primitive")?;
    check_reference(spec, psi_ref)?;
    let sources = (0..spec.n_t())
        .map(|k| Ok(goh_source(spec, &psi_ref.midpoint(k), k, model)?.scale_real(w.values()[k])))
        .collect::<Result<Vec<_>>>()?;
    propagate_affine(
        spec,
        u_ref,
        ComplexField::zeros(spec.grid),
        &SourceTerm::PerInterval(sources),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{dirichlet_eigenvalue, dirichlet_mode, Potential, SpatialGrid};
    use crate::problem::TargetTerm;

    fn spec(n_x: usize, n_t: usize, horizon: f64) -> ProblemSpec<f64> {
        let grid = SpatialGrid::unit(n_x).unwrap();
        let psi0 = dirichlet_mode(grid, 1);
        ProblemSpec {
            grid,
            time: TimeGrid::new(horizon, n_t).unwrap(),
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
    fn step_solve_inverts_step_operator() {
        let s = spec(30, 10, 1.0);
        let cn = CrankNicolson::new(&s);
        let x: Vec<Cplx<f64>> = (0..29)
            .map(|j| Complex::new((j as f64 * 0.37).sin(), (j as f64 * 1.3).cos()))
            .collect();
        for (u, sign) in [(0.0, 1.0), (0.7, 1.0), (0.7, -1.0)] {
            let a = cn.apply(u, sign * cn.half_dt, &x);
            let back = cn.solve(0, u, sign * cn.half_dt, a, s.grid).unwrap();
            for (p, q) in back.values().iter().zip(&x) {
                assert!((p - q).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn free_evolution_of_eigenvector_follows_rational_phase() {
        let s = spec(40, 200, 10.0);
        let mut s0 = s.clone();
        s0.potential = Potential::zero(s.grid);
        let u = Control::zeros(200);
        let traj = propagate_forward(&s0, &u).unwrap();
        // -Lap has eigenvalue lambda = -mu on mode 1.
        let lambda = -dirichlet_eigenvalue(&s.grid, 1);
        let dt = s.dt();
        let r = Complex::new(1.0, -dt * lambda / 2.0) / Complex::new(1.0, dt * lambda / 2.0);
        let mut expected = s.psi0.clone();
        for k in 0..=200 {
            let err = (traj.state(k) - &expected).norm();
            assert!(err < 1e-11, "step {k}: {err}");
            expected = expected.scale(r);
        }
    }

    #[test]
    fn unitary_for_arbitrary_control() {
        let s = spec(40, 200, 10.0);
        let u = Control::new((0..200).map(|k| (0.37 * k as f64).sin().abs()).collect());
        let traj = propagate_forward(&s, &u).unwrap();
        let n0 = s.psi0.norm();
        for st in traj.states() {
            assert!((st.norm() - n0).abs() < 1e-12 * n0);
        }
    }

    #[test]
    fn zero_direction_gives_zero_states() {
        let s = spec(20, 50, 1.0);
        let u = Control::constant(0.4, 50);
        let psi = propagate_forward(&s, &u).unwrap();
        let z = propagate_linearized(&s, &u, &psi, &Control::zeros(50)).unwrap();
        assert!(z.is_zero());
        let xi = propagate_goh_xi(&s, &u, &psi, &Control::zeros(50)).unwrap();
        assert!(xi.is_zero());
    }

    #[test]
    fn constant_potential_without_source_gives_zero_xi() {
        let mut s = spec(20, 50, 1.0);
        s.potential = Potential::from_fns(s.grid, |_| 2.0, |_| 0.0, |_| 0.0);
        let u = Control::constant(0.4, 50);
        let psi = propagate_forward(&s, &u).unwrap();
        let w = Control::new((0..50).map(|k| (k as f64 * 0.1).cos()).collect());
        let xi = propagate_goh_xi_with(&s, &u, &psi, &w, CommutatorModel::ClosedForm).unwrap();
        assert!(xi.sup_norm() == 0.0);
    }

    #[test]
    fn length_mismatch_is_dimension_error() {
        let s = spec(20, 50, 1.0);
        let err = propagate_forward(&s, &Control::zeros(49)).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn nan_control_is_divergence() {
        let s = spec(20, 10, 1.0);
        let mut v = vec![0.0; 10];
        v[3] = f64::NAN;
        assert!(matches!(
            propagate_forward(&s, &Control::new(v)),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn bounded_control_rejects_outside_values() {
        let b = Bounds::new(0.0, 1.0).unwrap();
        assert!(Control::bounded(vec![0.0, 1.5], b).is_err());
        assert!(Control::bounded(vec![0.0, 1.0], b).is_ok());
        assert!(Bounds::new(1.0, 1.0).is_err());
    }
}
