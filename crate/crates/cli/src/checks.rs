//! Verification suites behind `check`.

use rayon::prelude::*;
use schrodinger_oc::adjoint::{ibp_residual, propagate_backward};
use schrodinger_oc::dynamics::{propagate_affine, propagate_forward};
use schrodinger_oc::objective::{evaluate, reduced_cost, reduced_gradient};
use schrodinger_oc::sampling::{smooth_control, smooth_direction, smooth_field};
use schrodinger_oc::second_order::goh_identity_check;
use schrodinger_oc::{Control, ProblemSpec, Result, RunConfig, SourceTerm};

use crate::Suite;

pub const GRAD_TOL: f64 = 1e-6;
pub const GRAD_CONSISTENCY_TOL: f64 = 1e-12;
pub const IBP_TOL: f64 = 1e-11;
pub const UNITARY_TOL: f64 = 1e-10;
pub const GOH_MIN_ORDER: f64 = 0.9;
const FD_STEP: f64 = 1e-5;
const IBP_PAIRS: u64 = 10;

pub struct Row {
    pub suite: &'static str,
    pub n_x: usize,
    pub n_t: usize,
    pub quantity: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub order: Option<f64>,
    pub passed: bool,
    pub note: String,
}

fn build(cfg: &RunConfig, space: usize, time: usize) -> Result<ProblemSpec> {
    let mut p = cfg.problem.clone();
    p.n_x *= space;
    p.n_t *= time;
    p.build()
}

pub fn run(cfg: &RunConfig, which: Suite, factor: usize) -> Result<Vec<Row>> {
    let all = which == Suite::All;
    let seed = cfg.analysis.seed;
    let mut rows = Vec::new();
    let levels = [1, factor];
    if all || which == Suite::Unitary {
        for &f in &levels {
            rows.push(unitary(&build(cfg, f, f)?, seed)?);
        }
    }
    if all || which == Suite::Grad {
        for &f in &levels {
            rows.extend(grad(&build(cfg, f, f)?, seed)?);
        }
    }
    if all || which == Suite::Ibp {
        for &f in &levels {
            rows.push(ibp(&build(cfg, f, f)?, seed)?);
        }
    }
    if all || which == Suite::Goh {
        rows.extend(goh(cfg, factor, seed)?);
    }
    Ok(rows)
}

fn unitary(spec: &ProblemSpec, seed: u64) -> Result<Row> {
    let (n_x, n_t) = (spec.grid.n_x(), spec.n_t());
    if !spec.source.is_zero() {
        return Ok(Row {
            suite: "unitary",
            n_x,
            n_t,
            quantity: "norm drift",
            value: f64::NAN,
            tolerance: UNITARY_TOL,
            order: None,
            passed: true,
            note: "skipped: nonzero source".into(),
        });
    }
    let u = smooth_control(n_t, &spec.bounds, seed);
    let psi = propagate_forward(spec, &u)?;
    let n0 = psi.initial().norm();
    let drift = psi
        .states()
        .iter()
        .map(|s| (s.norm() - n0).abs() / n0)
        .fold(0.0, f64::max);
    Ok(Row {
        suite: "unitary",
        n_x,
        n_t,
        quantity: "norm drift",
        value: drift,
        tolerance: UNITARY_TOL,
        order: None,
        passed: drift < UNITARY_TOL,
        note: String::new(),
    })
}

fn grad(spec: &ProblemSpec, seed: u64) -> Result<Vec<Row>> {
    let (n_x, n_t) = (spec.grid.n_x(), spec.n_t());
    let u = smooth_control(n_t, &spec.bounds, seed);
    let g = reduced_gradient(spec, &u)?;
    let ev = evaluate(spec, &u)?;
    let dt = spec.dt();
    let fd: Vec<f64> = (0..n_t)
        .into_par_iter()
        .map(|k| {
            let mut plus = u.values().to_vec();
            let mut minus = plus.clone();
            plus[k] += FD_STEP;
            minus[k] -= FD_STEP;
            let fp = reduced_cost(spec, &Control::new(plus))?;
            let fm = reduced_cost(spec, &Control::new(minus))?;
            Ok((fp - fm) / (2.0 * FD_STEP))
        })
        .collect::<Result<_>>()?;
    let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let fd_err = g
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale;
    let consistency = g
        .iter()
        .zip(&ev.lambda)
        .map(|(gk, l)| (gk - dt * l).abs() / gk.abs().max(1.0))
        .fold(0.0, f64::max);
    Ok(vec![
        Row {
            suite: "grad",
            n_x,
            n_t,
            quantity: "adjoint vs central differences",
            value: fd_err,
            tolerance: GRAD_TOL,
            order: None,
            passed: fd_err < GRAD_TOL,
            note: "max |g - fd| / max |g|".into(),
        },
        Row {
            suite: "grad",
            n_x,
            n_t,
            quantity: "g - dt Lambda",
            value: consistency,
            tolerance: GRAD_CONSISTENCY_TOL,
            order: None,
            passed: consistency < GRAD_CONSISTENCY_TOL,
            note: "max |g - dt Lambda| / max(1, |g|)".into(),
        },
    ])
}

fn ibp(spec: &ProblemSpec, seed: u64) -> Result<Row> {
    let (n_x, n_t) = (spec.grid.n_x(), spec.n_t());
    let u = smooth_control(n_t, &spec.bounds, seed);
    let worst = (0..IBP_PAIRS)
        .into_par_iter()
        .map(|pair| {
            let base = seed.wrapping_mul(1_000_003).wrapping_add(pair * 4 * (n_t as u64 + 1));
            let fields = |offset: u64| {
                SourceTerm::PerInterval(
                    (0..n_t as u64)
                        .map(|k| smooth_field(spec.grid, base + offset + k))
                        .collect(),
                )
            };
            let b = fields(2);
            let g = fields(2 + n_t as u64);
            let z0 = smooth_field(spec.grid, base);
            let pt = smooth_field(spec.grid, base + 1);
            let z = propagate_affine(spec, &u, z0, &b)?;
            let p = propagate_backward(spec, &u, pt, &g)?;
            let bal = ibp_residual(&p, &z, &b, &g)?;
            Ok(bal.residual / bal.scale)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(Row {
        suite: "ibp",
        n_x,
        n_t,
        quantity: "pairing residual / scale",
        value: worst,
        tolerance: IBP_TOL,
        order: None,
        passed: worst < IBP_TOL,
        note: format!("worst of {IBP_PAIRS} random source pairs"),
    })
}

fn goh(cfg: &RunConfig, factor: usize, seed: u64) -> Result<Vec<Row>> {
    let coarse = build(cfg, 1, 1)?;
    if coarse.alpha2 != 0.0 {
        return Ok(vec![Row {
            suite: "goh",
            n_x: coarse.grid.n_x(),
            n_t: coarse.n_t(),
            quantity: "|Q - Qhat| / (1 + |Q|)",
            value: f64::NAN,
            tolerance: GOH_MIN_ORDER,
            order: None,
            passed: true,
            note: "skipped: alpha2 > 0".into(),
        }]);
    }
    let mut rows = Vec::new();
    let mut previous: Option<f64> = None;
    for f in [1, factor] {
        let spec = build(cfg, 1, f)?;
        let n_t = spec.n_t();
        // Same continuous control and direction on both grids.
        let u = refine_piecewise(&smooth_control(cfg.problem.n_t, &spec.bounds, seed), f);
        let v = refine_piecewise(&smooth_direction(cfg.problem.n_t, seed + 1), f);
        let rep = goh_identity_check(&spec, &u, &v)?;
        let gap = rep.goh_identity_gap.unwrap_or(f64::NAN);
        let order = previous.map(|g0| (g0 / gap).ln() / (f as f64).ln());
        let passed = match order {
            None => gap.is_finite(),
            Some(o) => o >= GOH_MIN_ORDER || gap < 1e-12,
        };
        rows.push(Row {
            suite: "goh",
            n_x: spec.grid.n_x(),
            n_t,
            quantity: "|Q - Qhat| / (1 + |Q|)",
            value: gap,
            tolerance: GOH_MIN_ORDER,
            order,
            passed,
            note: "tolerance is the minimum observed order".into(),
        });
        previous = Some(gap);
    }
    Ok(rows)
}

fn refine_piecewise(u: &Control, factor: usize) -> Control {
    Control::new(
        u.values()
            .iter()
            .flat_map(|&x| std::iter::repeat_n(x, factor))
            .collect(),
    )
}

pub fn print_table(rows: &[Row]) {
    println!(
        "{:<8} {:>5} {:>6}  {:<32} {:>12} {:>10} {:>7}  result",
        "suite", "n_x", "n_t", "quantity", "value", "tolerance", "order"
    );
    for r in rows {
        let order = r.order.map_or_else(|| "-".to_string(), |o| format!("{o:.3}"));
        let result = if r.passed { "pass" } else { "FAIL" };
        println!(
            "{:<8} {:>5} {:>6}  {:<32} {:>12.4e} {:>10.1e} {:>7}  {result} {}",
            r.suite, r.n_x, r.n_t, r.quantity, r.value, r.tolerance, order, r.note
        );
    }
}
