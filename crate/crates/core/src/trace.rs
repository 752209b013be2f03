//! Per-iteration records, the CSV trace format and run summaries.

use std::io::{self, Write};

use serde::Serialize;

/// Column order of [`write_csv`].
pub const CSV_HEADER: &str =
    "iter,J,grad_norm,gtilde_norm,perturbation_norm,deltaG,deltaL,rho_tilde,alpha,decrease_ok,accepted";

/// One outer iteration.
///
/// `value`, `grad_norm` and the radii describe the iterate and state at the
/// start of the iteration. A run ends with a closing record for the final
/// iterate whose `rho_tilde` is NaN.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub gtilde_norm: f64,
    pub perturbation_norm: f64,
    pub delta_g: f64,
    pub delta_l: f64,
    pub rho_tilde: f64,
    pub alpha: f64,
    pub decrease_ok: bool,
    pub accepted: bool,
    /// `J(u) - J(u + s)`, `-inf` for an infeasible trial point.
    pub ared: f64,
    /// `-psi~(s)`
    pub pred: f64,
    /// `-psi~` at the Cauchy point of the preconditioned model.
    pub cauchy_decrease_tilde: f64,
    /// `-psi` at the Cauchy point of the plain model.
    pub cauchy_decrease: f64,
    /// Local trust-region steps per subdomain.
    pub local_iters: Vec<usize>,
    /// Cumulative local operator applications.
    pub local_applications: usize,
    /// Cumulative global operator applications.
    pub global_applications: usize,
}

impl IterationRecord {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn closing(
        iter: usize,
        value: f64,
        grad_norm: f64,
        delta_g: f64,
        delta_l: f64,
        alpha: f64,
        local_applications: usize,
        global_applications: usize,
    ) -> Self {
        Self {
            iter,
            value,
            grad_norm,
            gtilde_norm: grad_norm,
            perturbation_norm: 0.0,
            delta_g,
            delta_l,
            rho_tilde: f64::NAN,
            alpha,
            decrease_ok: false,
            accepted: false,
            ared: f64::NAN,
            pred: f64::NAN,
            cauchy_decrease_tilde: f64::NAN,
            cauchy_decrease: f64::NAN,
            local_iters: Vec::new(),
            local_applications,
            global_applications,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.iter,
            self.value,
            self.grad_norm,
            self.gtilde_norm,
            self.perturbation_norm,
            self.delta_g,
            self.delta_l,
            self.rho_tilde,
            self.alpha,
            self.decrease_ok,
            self.accepted
        )
    }
}

pub fn write_csv<W: Write>(mut out: W, records: &[IterationRecord]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn csv_string(records: &[IterationRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Work counters accumulated over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OperationCounts {
    /// Global Hessian evaluations.
    pub hessian_evals: usize,
    /// `v -> Bv` applications in the global subproblem solves.
    pub global_applications: usize,
    /// `v -> B^k v` applications inside the local solves.
    pub local_applications: usize,
    /// Local trust-region steps, summed over subdomains.
    pub local_iterations: usize,
    /// Subdomain solves started.
    pub local_solves: usize,
}

/// Run summary written next to the trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub solver: String,
    pub problem: String,
    pub dim: usize,
    pub converged: bool,
    pub iterations: usize,
    pub accepted_steps: usize,
    /// Iterations on which the extended decrease check failed.
    pub stalled_steps: usize,
    pub final_value: f64,
    pub final_grad_norm: f64,
    /// Largest gradient norm seen along the run.
    pub max_grad_norm: f64,
    pub counts: OperationCounts,
}

impl RunSummary {
    pub fn from_records(
        solver: &str,
        problem: &str,
        dim: usize,
        converged: bool,
        records: &[IterationRecord],
        counts: OperationCounts,
    ) -> Self {
        let last = records.last();
        let steps = records.len().saturating_sub(1);
        Self {
            solver: solver.to_string(),
            problem: problem.to_string(),
            dim,
            converged,
            iterations: steps,
            accepted_steps: records.iter().filter(|r| r.accepted).count(),
            stalled_steps: records[..steps]
                .iter()
                .filter(|r| !r.decrease_ok)
                .count(),
            final_value: last.map_or(f64::NAN, |r| r.value),
            final_grad_norm: last.map_or(f64::NAN, |r| r.grad_norm),
            max_grad_norm: records.iter().map(|r| r.grad_norm).fold(0.0, f64::max),
            counts,
        }
    }
}
