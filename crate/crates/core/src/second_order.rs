//! Second-order quadratic forms and the Goh transform.
//!
//! For a direction `v` with linearized state `z = z[v]`,
//!
//! ```text
//! Q(z, v) = int (||z||^2 + alpha2 v^2 + 2 v Re<p, B2 z>) dt + ||z(T)||^2.
//! ```
//!
//! With `w(t) = int_0^t v`, `xi = z - w B2 Psi` solves the `xi` equation
//! driven by `w b1_z`, and (for `alpha2 = 0`) `Q(z[v], v) = Qhat(xi[w], w, w(T))`
//! where `Qhat = Qhat_T + Qhat_a + Qhat_b`:
//!
//! ```text
//! Qhat_T = ||xi(T) + h B2 Psi(T)||^2 + h^2 Re<p(T), B2^2 Psi(T)> + 2 h Re<p(T), B2 xi(T)>
//! Qhat_a = int ||xi||^2 + 2 w Re(<xi, B2 Psi> + <Psi - Psi_d, B2 xi> - <M1^* p, xi>)
//! Qhat_b = int w^2 R
//! R      = ||B2 Psi||^2 + Re<Psi - Psi_d, B2^2 Psi> + Re<p, B2^2 f - [M1, B2] Psi>
//! ```
//!
//! With `B2 = -i b2` these are the Laplacian specializations; note the cross
//! term of `Qhat_T` carries the factor `2 h`, which is what integrating
//! `2 v Re<p, B2 z>` by parts produces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adjoint::{propagate_costate, CostateTrajectory};
use crate::analysis::{ArcKind, ArcStructure};
use crate::dynamics::{
    propagate_forward, propagate_goh_xi_with, propagate_linearized, Control, Trajectory,
};
use crate::error::{Error, Result};
use crate::field::CommutatorModel;
use crate::problem::ProblemSpec;
use crate::sampling::fourier_profile;
use crate::scalar::Real;

/// Goh transform of a direction: `w` is the piecewise-constant primitive
/// (value at the left end of each interval, so `w_0 = 0`) and `h = w(T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GohDirection<T> {
    /// Original direction, when the pair was obtained from one.
    pub v: Option<Control<T>>,
    pub w: Control<T>,
    pub h: T,
}

impl<T: Real> GohDirection<T> {
    /// `||w||_2^2 + h^2`.
    pub fn norm_sqr(&self, dt: T) -> T {
        let l2 = self.w.l2_norm(dt);
        l2 * l2 + self.h * self.h
    }

    /// Forward differences of `w` (closed by `h`), i.e. the `v` whose exact
    /// discrete primitive this is.
    pub fn derivative(&self, dt: T) -> Control<T> {
        let w = self.w.values();
        let n = w.len();
        Control::new(
            (0..n)
                .map(|k| {
                    let next = if k + 1 < n { w[k + 1] } else { self.h };
                    (next - w[k]) / dt
                })
                .collect(),
        )
    }
}

/// `w_k = dt * sum_{j<k} v_j`, `h = dt * sum_j v_j`.
pub fn goh_primitive<T: Real>(v: &Control<T>, dt: T) -> GohDirection<T> {
    let mut acc = T::zero();
    let mut w = Vec::with_capacity(v.len());
    for &vk in v.values() {
        w.push(acc);
        acc = acc + dt * vk;
    }
    GohDirection {
        v: Some(v.clone()),
        w: Control::new(w),
        h: acc,
    }
}

fn check_lengths<T: Real>(
    spec: &ProblemSpec<T>,
    psi: &Trajectory<T>,
    p: &CostateTrajectory<T>,
    dir: &Control<T>,
    state: &Trajectory<T>,
) -> Result<()> {
    let nodes = spec.n_t() + 1;
    if psi.states().len() != nodes || p.states().len() != nodes || state.states().len() != nodes {
        return Err(Error::dim("trajectory lengths do not match the time grid"));
    }
    if dir.len() != spec.n_t() {
        return Err(Error::dim("direction length does not match the time grid"));
    }
    spec.grid.ensure_same(psi.initial().grid(), "state")?;
    spec.grid.ensure_same(p.initial().grid(), "costate")?;
    spec.grid.ensure_same(state.initial().grid(), "direction state")
}

/// `Q(z, v)` with midpoint quadrature.
pub fn quad_form_q<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    psi: &Trajectory<T>,
    p: &CostateTrajectory<T>,
    v: &Control<T>,
    z: &Trajectory<T>,
) -> Result<T> {
    check_lengths(spec, psi, p, v, z)?;
    if u.len() != spec.n_t() {
        return Err(Error::dim("control length does not match the time grid"));
    }
    let two = T::lit(2.0);
    let mut running = T::zero();
    for k in 0..spec.n_t() {
        let vk = v.values()[k];
        let zm = z.midpoint(k);
        let coupling = p.midpoint(k).dot(&spec.potential.apply_b2hat(&zm)?).re;
        running = running + zm.norm_sqr() + spec.alpha2 * vk * vk + two * vk * coupling;
    }
    Ok(running * spec.dt() + z.terminal().norm_sqr())
}

/// `R` on every interval, default commutator model.
pub fn singular_residual_r<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    psi: &Trajectory<T>,
    p: &CostateTrajectory<T>,
) -> Result<Vec<T>> {
    singular_residual_r_with(spec, u, psi, p, CommutatorModel::default())
}

/// `R_k = ||B2 Psi||^2 + Re<Psi - Psi_d, B2^2 Psi> + Re<p, B2^2 f - [M1, B2] Psi>`
/// from interval-midpoint values.
pub fn singular_residual_r_with<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    psi: &Trajectory<T>,
    p: &CostateTrajectory<T>,
    model: CommutatorModel,
) -> Result<Vec<T>> {
    check_lengths(spec, psi, p, u, psi)?;
    let pot = &spec.potential;
    (0..spec.n_t())
        .map(|k| {
            let psi_m = psi.midpoint(k);
            let p_m = p.midpoint(k);
            let b = pot.apply_b2hat(&psi_m)?;
            let bb = pot.apply_b2hat(&b)?;
            let g = spec.tracking_residual_mid(k, &psi_m);
            let mut r = -&pot.m1_b2_commutator(model, &psi_m)?;
            if let Some(f) = spec.source.at_interval(k) {
                r += &pot.apply_b2hat(&pot.apply_b2hat(f)?)?;
            }
            Ok(b.norm_sqr() + g.dot(&bb).re + p_m.dot(&r).re)
        })
        .collect()
}

/// Components of `Qhat` (and, when computed through
/// [`goh_identity_check`], of `Q` and their gap).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct QuadFormReport<T> {
    pub q_value: Option<T>,
    pub qhat_value: T,
    pub qhat_t: T,
    pub qhat_a: T,
    pub qhat_b: T,
    pub goh_identity_gap: Option<T>,
    pub r_samples: Vec<T>,
}

/// `Qhat(xi, w, h)` with the default commutator model.
pub fn quad_form_qhat<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    psi: &Trajectory<T>,
    p: &CostateTrajectory<T>,
    w: &Control<T>,
    h: T,
    xi: &Trajectory<T>,
) -> Result<QuadFormReport<T>> {
    quad_form_qhat_with(spec, u, psi, p, w, h, xi, CommutatorModel::default())
}

#[allow(clippy::too_many_arguments)]
pub fn quad_form_qhat_with<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    psi: &Trajectory<T>,
    p: &CostateTrajectory<T>,
    w: &Control<T>,
    h: T,
    xi: &Trajectory<T>,
    model: CommutatorModel,
) -> Result<QuadFormReport<T>> {
    check_lengths(spec, psi, p, w, xi)?;
    let r_samples = singular_residual_r_with(spec, u, psi, p, model)?;
    let pot = &spec.potential;
    let two = T::lit(2.0);
    let dt = spec.dt();

    let xi_t = xi.terminal();
    let p_t = p.terminal();
    let b_t = pot.apply_b2hat(psi.terminal())?;
    let mut shifted = xi_t.clone();
    shifted.axpy(num_complex::Complex::new(h, T::zero()), &b_t);
    let qhat_t = shifted.norm_sqr()
        + h * h * p_t.dot(&pot.apply_b2hat(&b_t)?).re
        + two * h * p_t.dot(&pot.apply_b2hat(xi_t)?).re;

    let mut qhat_a = T::zero();
    let mut qhat_b = T::zero();
    for (k, &r) in r_samples.iter().enumerate() {
        let wk = w.values()[k];
        let xi_m = xi.midpoint(k);
        let psi_m = psi.midpoint(k);
        let p_m = p.midpoint(k);
        let b = pot.apply_b2hat(&psi_m)?;
        let g = spec.tracking_residual_mid(k, &psi_m);
        let m1p = pot.m1_adjoint(model, &p_m)?;
        let linear = xi_m.dot(&b) + g.dot(&pot.apply_b2hat(&xi_m)?) - m1p.dot(&xi_m);
        qhat_a = qhat_a + xi_m.norm_sqr() + two * wk * linear.re;
        qhat_b = qhat_b + wk * wk * r;
    }
    qhat_a = qhat_a * dt;
    qhat_b = qhat_b * dt;
    Ok(QuadFormReport {
        q_value: None,
        qhat_value: qhat_t + qhat_a + qhat_b,
        qhat_t,
        qhat_a,
        qhat_b,
        goh_identity_gap: None,
        r_samples,
    })
}

/// Evaluates `Q(z[v], v)` and `Qhat(xi[w], w, w(T))` through independent
/// propagations and returns both with the relative gap
/// `|Q - Qhat| / (1 + |Q|)`. Requires `alpha2 = 0`.
pub fn goh_identity_check<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    v: &Control<T>,
) -> Result<QuadFormReport<T>> {
    goh_identity_check_with(spec, u, v, CommutatorModel::default())
}

pub fn goh_identity_check_with<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    v: &Control<T>,
    model: CommutatorModel,
) -> Result<QuadFormReport<T>> {
    if spec.alpha2 != T::zero() {
        return Err(Error::Precondition(
            "the Goh transform applies to control-affine costs (alpha2 = 0)".into(),
        ));
    }
    let psi = propagate_forward(spec, u)?;
    let p = propagate_costate(spec, u, &psi)?;
    let z = propagate_linearized(spec, u, &psi, v)?;
    let q = quad_form_q(spec, u, &psi, &p, v, &z)?;
    let dir = goh_primitive(v, spec.dt());
    let xi = propagate_goh_xi_with(spec, u, &psi, &dir.w, model)?;
    let mut report = quad_form_qhat_with(spec, u, &psi, &p, &dir.w, dir.h, &xi, model)?;
    report.q_value = Some(q);
    report.goh_identity_gap = Some((q - report.qhat_value).abs() / (T::one() + q.abs()));
    Ok(report)
}

/// Samples `(w, h)` in `PC_2(u)` for the given arc structure.
///
/// `w` is a random constant on each boundary arc (zero on an initial one,
/// `h` on a terminal one) and a smooth random profile on singular or
/// unresolved stretches. Without any boundary arc the sample is an
/// unconstrained smooth `w` with random `h`. The pair is scaled to
/// `||w||_2^2 + h^2 = 1` unless it is identically zero.
pub fn sample_pc2_direction<T: Real>(arcs: &ArcStructure<T>, dt: T, seed: u64) -> GohDirection<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = arcs.n_intervals();
    let mut w = vec![T::zero(); n];
    let terminal_boundary = arcs
        .arcs
        .last()
        .is_some_and(|a| a.kind.is_boundary() && a.end == n);
    let mut h = T::lit(rng.random_range(-1.0..1.0));
    if terminal_boundary {
        let last = arcs.arcs.last().expect("nonempty");
        h = if last.start == 0 {
            T::zero()
        } else {
            T::lit(rng.random_range(-1.0..1.0))
        };
    }
    for arc in &arcs.arcs {
        let len = arc.end - arc.start;
        match arc.kind {
            ArcKind::LowerBoundary | ArcKind::UpperBoundary => {
                let value = if arc.start == 0 {
                    T::zero()
                } else if arc.end == n {
                    h
                } else {
                    T::lit(rng.random_range(-1.0..1.0))
                };
                w[arc.start..arc.end].iter_mut().for_each(|x| *x = value);
            }
            ArcKind::Singular | ArcKind::Regular | ArcKind::Unresolved => {
                let profile = fourier_profile::<T>(&mut rng, len, 6);
                w[arc.start..arc.end].copy_from_slice(&profile);
            }
        }
    }
    let mut dir = GohDirection {
        v: None,
        w: Control::new(w),
        h,
    };
    let nrm = dir.norm_sqr(dt);
    if nrm > T::zero() {
        let s = T::one() / nrm.sqrt();
        dir.w = dir.w.scaled(s);
        dir.h = dir.h * s;
    }
    dir
}
