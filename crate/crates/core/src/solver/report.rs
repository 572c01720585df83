//! Per-iteration convergence log and its CSV / JSON forms.

use serde::{Deserialize, Serialize};

use super::termination::TerminationConstant;
use super::{Method, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converged,
    MaxIterations,
    Stalled,
}

/// One row of the log. Row 0 is the starting point and has no step data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub energy: f64,
    pub gradient_norm: f64,
    pub ratio: f64,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha_max: Option<f64>,
    pub evaluations: usize,
    pub active: usize,
    pub dpj_iterations: usize,
    pub fb_residual: Option<f64>,
    /// The filtered direction was not a descent direction and was dropped.
    pub filter_fallback: bool,
    /// AQP only: whether the extrapolated point was used.
    pub accelerated: Option<bool>,
    pub min_det: f64,
    /// Wall-clock time of this iteration.
    pub elapsed_ms: f64,
}

/// CSV columns, in order. `elapsed_ms` is appended when timing is requested.
pub const CSV_COLUMNS: [&str; 14] = [
    "iteration",
    "energy",
    "gradient_norm",
    "ratio",
    "beta",
    "alpha",
    "alpha_max",
    "evaluations",
    "active",
    "dpj_iterations",
    "fb_residual",
    "filter_fallback",
    "accelerated",
    "min_det",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub method: Method,
    pub epsilon: f64,
    pub constant: TerminationConstant,
    pub rows: Vec<IterationRecord>,
    pub verdict: Verdict,
    pub message: Option<String>,
    /// Full configuration at the last accepted iterate.
    pub final_positions: Vec<f64>,
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

impl ConvergenceReport {
    /// Number of accepted steps.
    pub fn iterations(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn final_row(&self) -> &IterationRecord {
        self.rows.last().expect("report has at least the initial row")
    }

    pub fn final_energy(&self) -> f64 {
        self.final_row().energy
    }

    pub fn converged(&self) -> bool {
        self.verdict == Verdict::Converged
    }

    pub fn to_csv(&self, timing: bool) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
        if timing {
            header.push("elapsed_ms");
        }
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![
                r.iteration.to_string(),
                num(r.energy),
                num(r.gradient_norm),
                num(r.ratio),
                opt(r.beta),
                opt(r.alpha),
                opt(r.alpha_max),
                r.evaluations.to_string(),
                r.active.to_string(),
                r.dpj_iterations.to_string(),
                opt(r.fb_residual),
                r.filter_fallback.to_string(),
                r.accelerated.map(|b| b.to_string()).unwrap_or_default(),
                num(r.min_det),
            ];
            if timing {
                rec.push(num(r.elapsed_ms));
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
    }

    pub fn summary(&self, config: &SolverConfig) -> serde_json::Value {
        let last = self.final_row();
        serde_json::json!({
            "method": self.method,
            "verdict": self.verdict,
            "message": self.message,
            "iterations": self.iterations(),
            "final_energy": last.energy,
            "final_gradient_norm": last.gradient_norm,
            "final_ratio": last.ratio,
            "final_min_det": last.min_det,
            "termination_constant": self.constant,
            "total_evaluations": self.rows.iter().map(|r| r.evaluations).sum::<usize>(),
            "total_dpj_iterations": self.rows.iter().map(|r| r.dpj_iterations).sum::<usize>(),
            "config": config,
        })
    }
}
