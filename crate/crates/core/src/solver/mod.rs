//! Optimizer drivers.
//!
//! Every method shares the same outer loop: choose a direction on the free
//! DOFs, cap the step so no element collapses, run the Wolfe search, update
//! method state, and stop when the characteristic gradient ratio drops below
//! `epsilon` or the line search fails.

mod report;
mod termination;

pub use report::{ConvergenceReport, IterationRecord, Verdict, CSV_COLUMNS};
pub use termination::{terminated, TerminationConstant};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{self, EnergyError, EnergyEval, EnergyModel};
use crate::filter::{self, DpjSettings, ACTIVE_THRESHOLD};
use crate::linesearch::{self, LineObjective, LineSearchResult};
use crate::mesh::{Mesh, MeshError};
use crate::numerics::{norm, psd_project, SpdFactor, TripletBuilder};
use crate::qn::{BaseOperator, BetaMode, BlendedProxy, Laplacian, DEFAULT_HISTORY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bcqn,
    Sgd,
    Lbfgs,
    Slbfgs,
    Aqp,
    Pn,
    /// Ablation: zero the direction on vertices of collapsing elements.
    ZeroDirection,
    /// Ablation: zero the gradient there before preconditioning.
    ZeroGradient,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Bcqn,
        Method::Sgd,
        Method::Lbfgs,
        Method::Slbfgs,
        Method::Aqp,
        Method::Pn,
        Method::ZeroDirection,
        Method::ZeroGradient,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Bcqn => "bcqn",
            Method::Sgd => "sgd",
            Method::Lbfgs => "lbfgs",
            Method::Slbfgs => "slbfgs",
            Method::Aqp => "aqp",
            Method::Pn => "pn",
            Method::ZeroDirection => "zero_direction",
            Method::ZeroGradient => "zero_gradient",
        }
    }

    /// Whether accepted steps must decrease the energy.
    pub fn is_monotone(&self) -> bool {
        !matches!(self, Method::Aqp)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let lower = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| format!("unknown solver '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub history: usize,
    pub filter_enabled: bool,
    pub beta: BetaMode,
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            epsilon: 1e-3,
            max_iterations: 10_000,
            history: DEFAULT_HISTORY,
            filter_enabled: method == Method::Bcqn,
            beta: BetaMode::Adaptive,
            seed: 0,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn with_filter(mut self, on: bool) -> Self {
        self.filter_enabled = on;
        self
    }

    pub fn with_beta(mut self, beta: BetaMode) -> Self {
        self.beta = beta;
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("initial configuration is not locally injective: element {element} has det F = {det:e}")]
    NonInjectiveStart { element: usize, det: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

/// Mesh objective over the free DOFs; fixed vertices keep their positions
/// from the template configuration.
pub struct MeshObjective<'a> {
    mesh: &'a Mesh,
    model: EnergyModel,
    template: Vec<f64>,
}

impl<'a> MeshObjective<'a> {
    pub fn new(mesh: &'a Mesh, model: EnergyModel, template: Vec<f64>) -> Self {
        Self { mesh, model, template }
    }

    pub fn full(&self, u: &[f64]) -> Vec<f64> {
        let mut x = self.template.clone();
        self.mesh.scatter_free(&mut x, u);
        x
    }
}

impl LineObjective for MeshObjective<'_> {
    fn evaluate(&self, u: &[f64]) -> Option<EnergyEval> {
        energy::evaluate(self.mesh, &self.model, &self.full(u)).ok()
    }
}

/// PSD-projected element Hessians, in element order.
pub fn projected_element_hessians(mesh: &Mesh, model: &EnergyModel, x: &[f64]) -> Result<Vec<DMatrix<f64>>, EnergyError> {
    (0..mesh.n_elements())
        .into_par_iter()
        .map(|t| energy::element_hessian(mesh, model, x, t).map(|h| psd_project(&h)))
        .collect()
}

/// Assembles the projected Hessian over the free DOFs and factors it,
/// regularizing once if the factorization fails.
fn newton_factor(mesh: &Mesh, model: &EnergyModel, x: &[f64]) -> Result<Result<SpdFactor, String>, EnergyError> {
    let blocks = projected_element_hessians(mesh, model, x)?;
    let n = mesh.n_free_dofs();
    let k = mesh.dim() * (mesh.dim() + 1);
    let mut b = TripletBuilder::with_capacity(n, n, blocks.len() * k * k);
    for (t, h) in blocks.iter().enumerate() {
        let dofs = mesh.element_dofs(t);
        for (r, dr) in dofs.iter().enumerate() {
            let Some(i) = *dr else { continue };
            for (c, dc) in dofs.iter().enumerate() {
                if let Some(j) = *dc {
                    b.push(i, j, h[(r, c)]);
                }
            }
        }
    }
    let hess = b.build();
    match SpdFactor::factorize(&hess) {
        Ok(f) => Ok(Ok(f)),
        Err(first) => {
            let trace: f64 = hess.diagonal().iter().sum();
            let shift = 1e-8 * trace / n as f64;
            SpdFactor::factorize(&hess.add_diagonal(shift))
                .map(Ok)
                .or_else(|e| Ok(Err(format!("Newton system not factorizable ({first}; after shift: {e})"))))
        }
    }
}

struct Step {
    direction: Vec<f64>,
    beta: Option<f64>,
    active: usize,
    dpj_iterations: usize,
    fb_residual: Option<f64>,
    filter_fallback: bool,
    accelerated: Option<bool>,
}

impl Step {
    fn plain(direction: Vec<f64>) -> Self {
        Self { direction, beta: None, active: 0, dpj_iterations: 0, fb_residual: None, filter_fallback: false, accelerated: None }
    }
}

fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

/// Zeroes the entries of `v` belonging to vertices of elements in `active`.
fn zero_on_elements(mesh: &Mesh, v: &mut [f64], active: &[usize]) {
    let d = mesh.dim();
    for &t in active {
        for &vert in mesh.element(t) {
            if let Some(s) = mesh.free_slot(vert) {
                v[s * d..(s + 1) * d].iter_mut().for_each(|e| *e = 0.0);
            }
        }
    }
}

/// Runs one optimizer from `x0`, a full configuration whose fixed-vertex
/// entries are the prescribed positions.
pub fn solve(mesh: &Mesh, model: &EnergyModel, x0: &[f64], config: &SolverConfig) -> Result<ConvergenceReport, SolverError> {
    model.check_dimension(mesh.dim())?;
    let d = mesh.dim();
    if x0.len() != mesh.n_vertices() * d {
        return Err(SolverError::InvalidConfig(format!(
            "configuration has length {}, expected {}",
            x0.len(),
            mesh.n_vertices() * d
        )));
    }
    if !(config.epsilon > 0.0) {
        return Err(SolverError::InvalidConfig(format!("epsilon must be positive, got {}", config.epsilon)));
    }
    let dets = mesh.orientation(x0);
    if let Some((element, &det)) = dets.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(SolverError::NonInjectiveStart { element, det });
    }

    let constant = TerminationConstant::new(mesh, model)?;
    let objective = MeshObjective::new(mesh, *model, x0.to_vec());
    let method = config.method;
    let needs_laplacian = !matches!(method, Method::Lbfgs | Method::Pn);
    let laplacian = if needs_laplacian { Some(Arc::new(Laplacian::new(mesh)?)) } else { None };
    let mut proxy = match method {
        Method::Lbfgs => Some(BlendedProxy::new(BaseOperator::ScaledIdentity, config.history, mesh)),
        Method::Bcqn | Method::Slbfgs | Method::ZeroDirection | Method::ZeroGradient => Some(BlendedProxy::new(
            BaseOperator::Laplacian(laplacian.clone().expect("built above")),
            config.history,
            mesh,
        )),
        _ => None,
    };
    let blended = matches!(method, Method::Bcqn | Method::ZeroDirection | Method::ZeroGradient);
    let dpj = DpjSettings::default();

    let mut u = mesh.gather_free(x0);
    let mut current = energy::evaluate(mesh, model, x0)?;
    let grad_norm = norm(&current.gradient);
    let mut rows = vec![IterationRecord {
        iteration: 0,
        energy: current.value,
        gradient_norm: grad_norm,
        ratio: constant.ratio(grad_norm),
        beta: None,
        alpha: None,
        alpha_max: None,
        evaluations: 1,
        active: 0,
        dpj_iterations: 0,
        fb_residual: None,
        filter_fallback: false,
        accelerated: None,
        min_det: dets.iter().copied().fold(f64::INFINITY, f64::min),
        elapsed_ms: 0.0,
    }];
    let mut verdict = Verdict::MaxIterations;
    let mut message = None;
    let mut previous_u = u.clone();

    if terminated(&current.gradient, &constant, config.epsilon) {
        verdict = Verdict::Converged;
    } else {
        for iteration in 1..=config.max_iterations {
            let clock = Instant::now();
            let x = objective.full(&u);
            let mut extra_evaluations = 0;

            // AQP extrapolates first and takes its step from there.
            let mut base_u = u.clone();
            let mut base_eval = current.clone();
            let mut accelerated = None;
            if method == Method::Aqp {
                let theta = (iteration as f64 - 1.0) / (iteration as f64 + 2.0);
                let y: Vec<f64> = u.iter().zip(&previous_u).map(|(a, b)| a + theta * (a - b)).collect();
                let mut used = false;
                if theta > 0.0 && mesh.min_orientation(&objective.full(&y)) > 0.0 {
                    extra_evaluations += 1;
                    if let Some(e) = objective.evaluate(&y) {
                        base_u = y;
                        base_eval = e;
                        used = true;
                    }
                }
                accelerated = Some(used);
            }
            let base_x = if accelerated == Some(true) { objective.full(&base_u) } else { x.clone() };

            let step = match method {
                Method::Sgd | Method::Aqp => {
                    let mut s = Step::plain(neg(&laplacian.as_ref().expect("built above").solve(&base_eval.gradient)));
                    s.accelerated = accelerated;
                    s
                }
                Method::Lbfgs | Method::Slbfgs => {
                    Step::plain(neg(&proxy.as_ref().expect("built above").apply_inverse(&current.gradient)))
                }
                Method::Pn => match newton_factor(mesh, model, &x)? {
                    Ok(f) => Step::plain(neg(&f.solve(&current.gradient))),
                    Err(msg) => {
                        verdict = Verdict::Stalled;
                        message = Some(msg);
                        break;
                    }
                },
                Method::Bcqn => {
                    let p = neg(&proxy.as_ref().expect("built above").apply_inverse(&current.gradient));
                    if config.filter_enabled {
                        let out = filter::filter(mesh, &x, &p, &dpj);
                        let fallback = out.active > 0 && !filter::is_descent(&out.direction, &current.gradient);
                        Step {
                            direction: if fallback { p } else { out.direction },
                            beta: None,
                            active: out.active,
                            dpj_iterations: out.dpj_iterations,
                            fb_residual: (out.active > 0).then_some(out.residual),
                            filter_fallback: fallback,
                            accelerated: None,
                        }
                    } else {
                        Step::plain(p)
                    }
                }
                Method::ZeroDirection => {
                    let mut p = neg(&proxy.as_ref().expect("built above").apply_inverse(&current.gradient));
                    let active = filter::active_set(mesh, &x, &p, ACTIVE_THRESHOLD);
                    zero_on_elements(mesh, &mut p, &active);
                    Step { active: active.len(), ..Step::plain(p) }
                }
                Method::ZeroGradient => {
                    let pr = proxy.as_ref().expect("built above");
                    let p0 = neg(&pr.apply_inverse(&current.gradient));
                    let active = filter::active_set(mesh, &x, &p0, ACTIVE_THRESHOLD);
                    let mut g = current.gradient.clone();
                    zero_on_elements(mesh, &mut g, &active);
                    Step { active: active.len(), ..Step::plain(neg(&pr.apply_inverse(&g))) }
                }
            };

            let alpha_max = linesearch::max_noninverting_step(mesh, &base_x, &step.direction);
            let alpha_init = linesearch::initial_step(alpha_max);
            let result: LineSearchResult =
                match linesearch::wolfe_search(&objective, &base_u, &base_eval, &step.direction, alpha_init, alpha_max) {
                    Ok(r) => r,
                    Err(e) => {
                        verdict = Verdict::Stalled;
                        message = Some(format!("iteration {iteration}: {e}"));
                        break;
                    }
                };

            let mut beta = step.beta;
            if let Some(pr) = proxy.as_mut() {
                let s: Vec<f64> = result.point.iter().zip(&u).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = result.eval.gradient.iter().zip(&current.gradient).map(|(a, b)| a - b).collect();
                if blended {
                    let b = pr.blend_vector(&y, &s, config.beta);
                    beta = Some(b.beta);
                    pr.push_pair(s, b.z);
                } else {
                    pr.push_pair(s, y);
                }
            }

            previous_u = std::mem::replace(&mut u, result.point);
            current = result.eval;
            let x_new = objective.full(&u);
            let grad_norm = norm(&current.gradient);
            rows.push(IterationRecord {
                iteration,
                energy: current.value,
                gradient_norm: grad_norm,
                ratio: constant.ratio(grad_norm),
                beta,
                alpha: Some(result.alpha),
                alpha_max: Some(alpha_max),
                evaluations: result.evaluations + extra_evaluations,
                active: step.active,
                dpj_iterations: step.dpj_iterations,
                fb_residual: step.fb_residual,
                filter_fallback: step.filter_fallback,
                accelerated: step.accelerated,
                min_det: mesh.min_orientation(&x_new),
                elapsed_ms: clock.elapsed().as_secs_f64() * 1e3,
            });
            if terminated(&current.gradient, &constant, config.epsilon) {
                verdict = Verdict::Converged;
                break;
            }
        }
    }

    Ok(ConvergenceReport {
        method,
        epsilon: config.epsilon,
        constant,
        rows,
        verdict,
        message,
        final_positions: objective.full(&u),
    })
}

#[cfg(test)]
mod tests;
