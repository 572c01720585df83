//! The `run` subcommand: solve a spec with each requested method and write
//! logs, summaries, final meshes and the convergence plot.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use meshopt::io::{format_ele, format_node, format_obj, tet_boundary, write_file};
use meshopt::solver::{solve, ConvergenceReport, Method, SolverConfig};

use crate::plot::convergence_svg;
use crate::spec::{Problem, ProblemKind, RunSpec};

/// Command-line overrides of spec fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub epsilon: Option<f64>,
    pub max_iterations: Option<usize>,
    pub solvers: Option<Vec<Method>>,
    pub seed: Option<u64>,
    pub timing: bool,
}

impl Overrides {
    pub fn apply(&self, spec: &mut RunSpec) {
        if let Some(e) = self.epsilon {
            spec.epsilon = e;
        }
        if let Some(m) = self.max_iterations {
            spec.max_iterations = m;
        }
        if let Some(s) = &self.solvers {
            spec.solvers = s.clone();
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
    }
}

pub struct RunOutcome {
    pub reports: Vec<ConvergenceReport>,
    pub output: PathBuf,
}

impl RunOutcome {
    pub fn all_converged(&self) -> bool {
        self.reports.iter().all(ConvergenceReport::converged)
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    Ok(write_file(&dir.join(name), contents)?)
}

fn write_final_mesh(dir: &Path, method: Method, problem: &Problem, x: &[f64]) -> Result<()> {
    let stem = method.name();
    match problem.kind {
        ProblemKind::UvParam => {
            let surface = problem.surface.as_deref().expect("UV problems keep their surface");
            write(dir, &format!("{stem}.final.obj"), &format_obj(surface, 3, Some(x), &problem.elements))
        }
        ProblemKind::Deform2d => write(dir, &format!("{stem}.final.obj"), &format_obj(x, 2, None, &problem.elements)),
        ProblemKind::Deform3d => {
            write(dir, &format!("{stem}.final.node"), &format_node(x, 3))?;
            write(dir, &format!("{stem}.final.ele"), &format_ele(&problem.elements))?;
            write(dir, &format!("{stem}.final.obj"), &format_obj(x, 3, None, &tet_boundary(&problem.elements)))
        }
    }
}

pub fn run(spec_path: &Path, overrides: &Overrides) -> Result<RunOutcome> {
    let mut spec = RunSpec::load(spec_path)?;
    overrides.apply(&mut spec);
    let problem = Problem::load(&spec)?;
    std::fs::create_dir_all(&spec.output).with_context(|| format!("output: cannot create {}", spec.output.display()))?;

    let mut reports = Vec::with_capacity(spec.solvers.len());
    for &method in &spec.solvers {
        let mut config = SolverConfig::new(method).with_epsilon(spec.epsilon).with_max_iterations(spec.max_iterations);
        config.seed = spec.seed;
        let report = solve(&problem.mesh, &problem.model, &problem.initial, &config).with_context(|| format!("solver {method}"))?;
        let dir = &spec.output;
        write(dir, &format!("{}.csv", method.name()), &report.to_csv(overrides.timing))?;
        let mut summary = report.summary(&config);
        if overrides.timing {
            let ms: f64 = report.rows.iter().map(|r| r.elapsed_ms).sum();
            summary["elapsed_ms"] = serde_json::json!(ms);
        }
        write(dir, &format!("{}.summary.json", method.name()), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
        write_final_mesh(dir, method, &problem, &report.final_positions)?;
        println!(
            "{:<15} {:<15} {:>6} iterations  E = {:<14.8e} ratio = {:.3e}",
            method.name(),
            format!("{:?}", report.verdict),
            report.iterations(),
            report.final_energy(),
            report.final_row().ratio
        );
        reports.push(report);
    }
    write(&spec.output, "convergence.svg", &convergence_svg(&reports, spec.epsilon))?;
    Ok(RunOutcome { reports, output: spec.output })
}
