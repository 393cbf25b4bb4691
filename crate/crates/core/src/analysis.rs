//! Arc-structure detection and first/second-order optimality reports.

use rayon::prelude::*;

use crate::adjoint::propagate_costate;
use crate::dynamics::{propagate_forward, propagate_goh_xi_with, Control};
use crate::error::{Error, Result};
use crate::field::CommutatorModel;
use crate::objective::{evaluate_cost, switching_function, switching_scale, CostBreakdown};
use crate::optimizer::{default_u_tol, lambda_tol};
use crate::problem::{Bounds, ProblemSpec};
use crate::scalar::Real;
use crate::second_order::{quad_form_qhat_with, sample_pc2_direction, singular_residual_r_with};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcKind {
    LowerBoundary,
    UpperBoundary,
    /// Interior control with vanishing switching function.
    Singular,
    /// As `Singular`, for `alpha2 > 0` where the control is determined by
    /// `Lambda = 0`; assigned by [`full_report`], never by [`detect_arcs`].
    Regular,
    /// Interior control where `|Lambda|` exceeds the threshold.
    Unresolved,
}

impl ArcKind {
    pub fn is_boundary(self) -> bool {
        matches!(self, ArcKind::LowerBoundary | ArcKind::UpperBoundary)
    }
}

/// Maximal run of intervals `start..end` of one kind.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Arc<T> {
    pub start: usize,
    pub end: usize,
    pub kind: ArcKind,
    pub t_start: T,
    pub t_end: T,
}

impl<T: Real> Arc<T> {
    pub fn new(start: usize, end: usize, kind: ArcKind, dt: T) -> Self {
        Self {
            start,
            end,
            kind,
            t_start: dt * T::count(start),
            t_end: dt * T::count(end),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ArcStructure<T> {
    pub arcs: Vec<Arc<T>>,
    /// Times of all arc boundaries strictly inside `(0, T)`.
    pub junction_times: Vec<T>,
    /// Junctions joining a lower and an upper boundary arc directly.
    pub bang_bang_junctions: Vec<T>,
    pub dt: T,
}

impl<T: Real> ArcStructure<T> {
    /// Builds the structure from a partition of `0..n_intervals`.
    pub fn from_arcs(n_intervals: usize, dt: T, arcs: Vec<Arc<T>>) -> Self {
        debug_assert!(arcs.first().is_none_or(|a| a.start == 0));
        debug_assert!(arcs.last().is_none_or(|a| a.end == n_intervals));
        let junction_times = arcs.iter().skip(1).map(|a| a.t_start).collect();
        let bang_bang_junctions = arcs
            .windows(2)
            .filter(|w| w[0].kind.is_boundary() && w[1].kind.is_boundary())
            .map(|w| w[1].t_start)
            .collect();
        Self {
            arcs,
            junction_times,
            bang_bang_junctions,
            dt,
        }
    }

    pub fn n_intervals(&self) -> usize {
        self.arcs.last().map_or(0, |a| a.end)
    }

    pub fn singular_arcs(&self) -> impl Iterator<Item = &Arc<T>> {
        self.arcs.iter().filter(|a| a.kind == ArcKind::Singular)
    }

    pub fn boundary_arcs(&self) -> impl Iterator<Item = &Arc<T>> {
        self.arcs.iter().filter(|a| a.kind.is_boundary())
    }

    pub fn measure(&self, kind: ArcKind) -> T {
        T::count(self.arcs.iter().filter(|a| a.kind == kind).map(|a| a.len()).sum()) * self.dt
    }

    /// Interval indices at which a lower and an upper boundary arc meet.
    pub fn bang_bang_junction_indices(&self) -> Vec<usize> {
        self.arcs
            .windows(2)
            .filter(|w| w[0].kind.is_boundary() && w[1].kind.is_boundary())
            .map(|w| w[1].start)
            .collect()
    }
}

/// Classifies each interval and merges runs into maximal arcs.
pub fn detect_arcs<T: Real>(
    u: &Control<T>,
    bounds: &Bounds<T>,
    lambda: &[T],
    eps_u: T,
    eps_lambda: T,
    dt: T,
) -> Result<ArcStructure<T>> {
    if lambda.len() != u.len() {
        return Err(Error::dim("switching function and control lengths differ"));
    }
    if u.is_empty() {
        return Err(Error::dim("empty control"));
    }
    let kinds: Vec<ArcKind> = u
        .values()
        .iter()
        .zip(lambda)
        .map(|(&uk, &lk)| {
            if uk <= bounds.lower + eps_u {
                ArcKind::LowerBoundary
            } else if uk >= bounds.upper - eps_u {
                ArcKind::UpperBoundary
            } else if lk.abs() <= eps_lambda {
                ArcKind::Singular
            } else {
                ArcKind::Unresolved
            }
        })
        .collect();
    if kinds.iter().all(|&k| k == ArcKind::Unresolved) {
        return Err(Error::Structure(
            "no interval is at a bound or has a vanishing switching function".into(),
        ));
    }
    let mut arcs = Vec::new();
    let mut start = 0;
    for k in 1..=kinds.len() {
        if k == kinds.len() || kinds[k] != kinds[start] {
            arcs.push(Arc::new(start, k, kinds[start], dt));
            start = k;
        }
    }
    Ok(ArcStructure::from_arcs(u.len(), dt, arcs))
}

/// `dt * #{k : (Lambda_k > tol and u_k > u_m + tol_u) or
/// (Lambda_k < -tol and u_k < u_M - tol_u)}`.
pub fn check_first_order<T: Real>(
    u: &[T],
    bounds: &Bounds<T>,
    lambda: &[T],
    tol: T,
    tol_u: T,
    dt: T,
) -> Result<T> {
    if u.len() != lambda.len() {
        return Err(Error::dim("switching function and control lengths differ"));
    }
    let bad = u
        .iter()
        .zip(lambda)
        .filter(|(&uk, &lk)| {
            (lk > tol && uk > bounds.lower + tol_u) || (lk < -tol && uk < bounds.upper - tol_u)
        })
        .count();
    Ok(T::count(bad) * dt)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Complementarity<T> {
    /// Minimum over boundary-arc interiors of `Lambda` on lower arcs and
    /// `-Lambda` on upper arcs; equals `min |Lambda|` when the signs are
    /// right. `+inf` without boundary arcs.
    pub margin: T,
    pub has_boundary_arcs: bool,
    /// `Lambda` is nonzero (with the right sign) at `t = 0` / `t = T` when an
    /// initial / terminal boundary arc exists.
    pub endpoints_nonzero: bool,
}

/// Strict-complementarity margin; arc interiors drop one interval at each
/// end (arcs of one or two intervals are used whole).
pub fn check_strict_complementarity<T: Real>(
    arcs: &ArcStructure<T>,
    lambda: &[T],
) -> Result<Complementarity<T>> {
    if lambda.len() != arcs.n_intervals() {
        return Err(Error::dim("switching function does not match the arc structure"));
    }
    let signed = |kind: ArcKind, l: T| if kind == ArcKind::LowerBoundary { l } else { -l };
    let mut margin = T::infinity();
    let mut has = false;
    let mut endpoints_nonzero = true;
    let n = lambda.len();
    for arc in arcs.boundary_arcs() {
        has = true;
        let (a, b) = if arc.len() > 2 {
            (arc.start + 1, arc.end - 1)
        } else {
            (arc.start, arc.end)
        };
        for &l in &lambda[a..b] {
            margin = margin.min(signed(arc.kind, l));
        }
        if arc.start == 0 && !(signed(arc.kind, lambda[0]) > T::zero()) {
            endpoints_nonzero = false;
        }
        if arc.end == n && !(signed(arc.kind, lambda[n - 1]) > T::zero()) {
            endpoints_nonzero = false;
        }
    }
    Ok(Complementarity {
        margin,
        has_boundary_arcs: has,
        endpoints_nonzero,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions<T> {
    /// Bound-contact threshold; `None` selects `1e-6 * (u_M - u_m)`.
    pub eps_u: Option<T>,
    /// Singular threshold relative to `max |Lambda|`.
    pub eps_lambda_rel: T,
    pub n_probes: usize,
    pub seed: u64,
    /// Relative tolerance of the second-order sign checks.
    pub second_order_tol: T,
    /// Admissible first-order violation as a fraction of `T`.
    pub first_order_tol_rel: T,
    /// Admissible unresolved measure as a fraction of `T`.
    pub unresolved_tol_rel: T,
    pub commutator: CommutatorModel,
}

impl<T: Real> Default for AnalysisOptions<T> {
    fn default() -> Self {
        Self {
            eps_u: None,
            eps_lambda_rel: T::lit(1e-4),
            n_probes: 100,
            seed: 0,
            second_order_tol: T::lit(1e-6),
            first_order_tol_rel: T::lit(1e-3),
            unresolved_tol_rel: T::lit(0.05),
            commutator: CommutatorModel::default(),
        }
    }
}

/// One checked condition.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Verdict<T> {
    pub name: String,
    pub value: T,
    /// Threshold the value is compared against.
    pub threshold: T,
    /// `Some(passed)`, or `None` when the condition does not apply.
    pub passed: Option<bool>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct OptimalityReport<T> {
    pub cost: CostBreakdown<T>,
    pub lambda: Vec<T>,
    pub arc_structure: ArcStructure<T>,
    pub eps_u: T,
    pub eps_lambda: T,
    pub first_order_violation: T,
    pub unresolved_measure: T,
    pub strict_complementarity: Complementarity<T>,
    /// `R` on interval midpoints.
    pub r_samples: Vec<T>,
    pub r_scale: T,
    pub r_on_singular_min: Option<T>,
    /// Minimum of `R` within two steps of each bang-bang junction.
    pub r_at_bb_junctions_min: Option<T>,
    /// `Qhat / (||w||^2 + h^2)` per probe direction.
    pub pc2_probe_ratios: Vec<T>,
    pub pc2_probe_min_ratio: Option<T>,
    pub verdicts: Vec<Verdict<T>>,
}

impl<T: Real> OptimalityReport<T> {
    /// True when no applicable verdict failed.
    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed != Some(false))
    }
}

fn min_of<T: Real>(it: impl Iterator<Item = T>) -> Option<T> {
    it.fold(None, |m: Option<T>, x| Some(m.map_or(x, |m| m.min(x))))
}

/// Runs forward, costate, switching function, arc detection, `R` and the
/// `PC_2` probe at `u`, and collects the verdicts.
///
/// The probe evaluates `Qhat`, which is the second variation only for
/// `alpha2 = 0`; for `alpha2 > 0` it is skipped, interior stationary arcs
/// are then regular rather than singular and the `R` checks do not apply.
/// A nonnegative probe minimum is a necessary symptom of the coercivity
/// `Qhat >= a (||w||^2 + h^2)`, not a proof of it.
pub fn full_report<T: Real>(
    spec: &ProblemSpec<T>,
    u: &Control<T>,
    opts: &AnalysisOptions<T>,
) -> Result<OptimalityReport<T>> {
    spec.validate()?;
    if u.len() != spec.n_t() {
        return Err(Error::dim(format!(
            "control has {} values for {} time steps",
            u.len(),
            spec.n_t()
        )));
    }
    if let Some(k) = u.values().iter().position(|&x| !spec.bounds.contains(x)) {
        return Err(Error::Precondition(format!("control value {k} violates the bounds")));
    }
    let dt = spec.dt();
    let horizon = spec.time.horizon();
    let model = opts.commutator;
    let psi = propagate_forward(spec, u)?;
    let p = propagate_costate(spec, u, &psi)?;
    let cost = evaluate_cost(spec, u, &psi)?;
    let lambda = switching_function(spec, u, &psi, &p)?;

    let eps_u = opts.eps_u.unwrap_or_else(|| default_u_tol(&spec.bounds));
    let affine = spec.alpha2 == T::zero();
    let eps_lambda = lambda_tol(opts.eps_lambda_rel, &lambda, switching_scale(spec, u, &psi, &p)?);
    let mut arcs = match detect_arcs(u, &spec.bounds, &lambda, eps_u, eps_lambda, dt) {
        Err(Error::Structure(_)) => {
            ArcStructure::from_arcs(u.len(), dt, vec![Arc::new(0, u.len(), ArcKind::Unresolved, dt)])
        }
        other => other?,
    };
    if !affine {
        for arc in &mut arcs.arcs {
            if arc.kind == ArcKind::Singular {
                arc.kind = ArcKind::Regular;
            }
        }
    }
    let first_order_violation = check_first_order(u.values(), &spec.bounds, &lambda, eps_lambda, eps_u, dt)?;
    let unresolved_measure = arcs.measure(ArcKind::Unresolved);
    let complementarity = check_strict_complementarity(&arcs, &lambda)?;

    let r_samples = singular_residual_r_with(spec, u, &psi, &p, model)?;
    let r_scale = r_samples.iter().fold(T::one(), |m, &r| m.max(r.abs()));
    let (r_on_singular_min, r_at_bb_junctions_min) = if affine {
        let sing = min_of(
            arcs.singular_arcs()
                .flat_map(|a| r_samples[a.start..a.end].iter().copied()),
        );
        let n = r_samples.len();
        let bb = min_of(arcs.bang_bang_junction_indices().into_iter().flat_map(|j| {
            let lo = j.saturating_sub(2);
            let hi = (j + 2).min(n);
            r_samples[lo..hi].iter().copied()
        }));
        (sing, bb)
    } else {
        (None, None)
    };

    let pc2_probe_ratios: Vec<T> = if affine && opts.n_probes > 0 {
        (0..opts.n_probes)
            .into_par_iter()
            .map(|i| {
                let dir = sample_pc2_direction(&arcs, dt, opts.seed.wrapping_add(i as u64));
                let nrm = dir.norm_sqr(dt);
                if nrm == T::zero() {
                    return Ok(T::zero());
                }
                let xi = propagate_goh_xi_with(spec, u, &psi, &dir.w, model)?;
                let q = quad_form_qhat_with(spec, u, &psi, &p, &dir.w, dir.h, &xi, model)?;
                Ok(q.qhat_value / nrm)
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let pc2_probe_min_ratio = min_of(pc2_probe_ratios.iter().copied());

    let tol2 = opts.second_order_tol;
    let fo_threshold = opts.first_order_tol_rel * horizon;
    let unresolved_threshold = opts.unresolved_tol_rel * horizon;
    let not_affine = "requires alpha2 = 0";
    let verdicts = vec![
        Verdict {
            name: "first_order".into(),
            value: first_order_violation,
            threshold: fo_threshold,
            passed: Some(first_order_violation < fo_threshold),
            note: "measure of intervals where the sign of Lambda contradicts the control".into(),
        },
        Verdict {
            name: "arc_structure".into(),
            value: unresolved_measure,
            threshold: unresolved_threshold,
            passed: Some(unresolved_measure < unresolved_threshold),
            note: "measure of interior intervals with |Lambda| above eps_lambda".into(),
        },
        Verdict {
            name: "strict_complementarity".into(),
            value: complementarity.margin,
            threshold: T::zero(),
            passed: complementarity
                .has_boundary_arcs
                .then_some(complementarity.margin > T::zero() && complementarity.endpoints_nonzero),
            note: if complementarity.has_boundary_arcs {
                "signed Lambda on boundary-arc interiors".into()
            } else {
                "no boundary arcs".into()
            },
        },
        Verdict {
            name: "r_on_singular_arcs".into(),
            value: r_on_singular_min.unwrap_or(T::infinity()),
            threshold: -tol2 * r_scale,
            passed: r_on_singular_min.map(|r| r >= -tol2 * r_scale),
            note: if !affine {
                not_affine.into()
            } else if r_on_singular_min.is_none() {
                "no singular arcs".into()
            } else {
                "R >= 0 on singular arcs".into()
            },
        },
        Verdict {
            name: "r_at_bang_bang_junctions".into(),
            value: r_at_bb_junctions_min.unwrap_or(T::infinity()),
            threshold: T::zero(),
            passed: r_at_bb_junctions_min.map(|r| r > T::zero()),
            note: if !affine {
                not_affine.into()
            } else if r_at_bb_junctions_min.is_none() {
                "no bang-bang junctions".into()
            } else {
                "R > 0 within two steps of each bang-bang junction".into()
            },
        },
        Verdict {
            name: "pc2_probe".into(),
            value: pc2_probe_min_ratio.unwrap_or(T::infinity()),
            threshold: -tol2,
            passed: pc2_probe_min_ratio.map(|r| r >= -tol2),
            note: if affine {
                "min Qhat / (||w||^2 + h^2) over sampled PC2 directions; necessary symptom of coercivity only".into()
            } else {
                not_affine.into()
            },
        },
    ];

    Ok(OptimalityReport {
        cost,
        lambda,
        arc_structure: arcs,
        eps_u,
        eps_lambda,
        first_order_violation,
        unresolved_measure,
        strict_complementarity: complementarity,
        r_samples,
        r_scale,
        r_on_singular_min,
        r_at_bb_junctions_min,
        pc2_probe_ratios,
        pc2_probe_min_ratio,
        verdicts,
    })
}
