//! CSV and JSON artifacts.
//!
//! | file               | columns                            |
//! |--------------------|------------------------------------|
//! | `u_opt.csv`        | `t_mid,u`                          |
//! | `lambda.csv`       | `t_mid,lambda`                     |
//! | `psi_final.csv`    | `x,re,im,abs2`                     |
//! | `cost_history.csv` | `iteration,cost,projected_grad_norm` |

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use schrodinger_oc::dynamics::propagate_forward;
use schrodinger_oc::{Control, MultistartResult, OptimalityReport, ProblemSpec, SolveResult};
use serde::Serialize;

pub const SCHEMA: u32 = 1;

pub fn write_series(path: &Path, name: &str, t: &[f64], values: &[f64]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t_mid", name])?;
    for (a, b) in t.iter().zip(values) {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush()
}

pub fn write_final_state(path: &Path, spec: &ProblemSpec, u: &Control) -> Result<(), crate::Failure> {
    let psi = propagate_forward(spec, u)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_failure)?;
    w.write_record(["x", "re", "im", "abs2"]).map_err(csv_failure)?;
    for (x, v) in spec.grid.nodes().iter().zip(psi.terminal().values()) {
        w.write_record([x.to_string(), v.re.to_string(), v.im.to_string(), v.norm_sqr().to_string()])
            .map_err(csv_failure)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cost_history(path: &Path, r: &SolveResult) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "cost", "projected_grad_norm"])?;
    for (i, (c, g)) in r.cost_history.iter().zip(&r.projected_grad_norms).enumerate() {
        w.write_record([i.to_string(), c.to_string(), g.to_string()])?;
    }
    w.flush()
}

fn csv_failure(e: csv::Error) -> crate::Failure {
    crate::Failure::new(crate::EXIT_SOFTWARE, format!("csv: {e}"))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()
}

#[derive(Serialize)]
pub struct VerdictSummary<'a> {
    name: &'a str,
    passed: Option<bool>,
    value: f64,
    threshold: f64,
}

#[derive(Serialize)]
pub struct ResultSummary<'a> {
    schema: u32,
    status: schrodinger_oc::optimizer::SolveStatus,
    converged: bool,
    iterations: usize,
    final_cost: f64,
    cost: &'a schrodinger_oc::CostBreakdown,
    projected_grad_norm: f64,
    first_order_violation: f64,
    n_starts: usize,
    best_start: usize,
    start_costs: &'a [Option<f64>],
    singular_arcs: usize,
    boundary_arcs: usize,
    junction_times: &'a [f64],
    r_on_singular_min: Option<f64>,
    pc2_probe_min_ratio: Option<f64>,
    all_verdicts_passed: bool,
    verdicts: Vec<VerdictSummary<'a>>,
}

pub fn result_summary<'a>(ms: &'a MultistartResult, report: &'a OptimalityReport) -> ResultSummary<'a> {
    let r = &ms.best;
    ResultSummary {
        schema: SCHEMA,
        status: r.status,
        converged: r.converged,
        iterations: r.iterations,
        final_cost: r.final_cost,
        cost: &report.cost,
        projected_grad_norm: r.projected_grad_norms.last().copied().unwrap_or(f64::NAN),
        first_order_violation: report.first_order_violation,
        n_starts: ms.final_costs.len(),
        best_start: ms.best_index,
        start_costs: &ms.final_costs,
        singular_arcs: report.arc_structure.singular_arcs().count(),
        boundary_arcs: report.arc_structure.boundary_arcs().count(),
        junction_times: &report.arc_structure.junction_times,
        r_on_singular_min: report.r_on_singular_min,
        pc2_probe_min_ratio: report.pc2_probe_min_ratio,
        all_verdicts_passed: report.all_passed(),
        verdicts: report
            .verdicts
            .iter()
            .map(|v| VerdictSummary {
                name: &v.name,
                passed: v.passed,
                value: v.value,
                threshold: v.threshold,
            })
            .collect(),
    }
}

/// Reads the last column of a headed CSV as the control values.
pub fn read_control(path: &Path) -> Result<Vec<f64>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let field = rec
            .iter()
            .next_back()
            .ok_or_else(|| format!("{}: empty row {}", path.display(), i + 2))?;
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|e| format!("{}: row {}: {e}", path.display(), i + 2))?;
        out.push(v);
    }
    Ok(out)
}
