use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(n: usize) -> Mesh {
    let mut pos = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            pos.push(i as f64 / n as f64);
            pos.push(j as f64 / n as f64);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut tris = Vec::new();
    for j in 0..n {
        for i in 0..n {
            tris.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            tris.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let fixed: Vec<usize> = (0..(n + 1) * (n + 1))
        .filter(|&v| v % (n + 1) == 0 || v % (n + 1) == n || v <= n || v >= n * (n + 1))
        .collect();
    Mesh::new(2, pos, &tris, &fixed).unwrap()
}

/// Interior vertices displaced by up to `eps`; boundary stays at rest.
fn perturbed(mesh: &Mesh, seed: u64, eps: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = mesh.rest_positions().to_vec();
    for v in mesh.free_vertices() {
        for i in 0..mesh.dim() {
            x[v * mesh.dim() + i] += rng.gen_range(-eps..eps);
        }
    }
    assert!(mesh.min_orientation(&x) > 0.0);
    x
}

fn run(mesh: &Mesh, model: EnergyModel, x: &[f64], config: SolverConfig) -> ConvergenceReport {
    solve(mesh, &model, x, &config).unwrap()
}

fn strip_timing(r: &ConvergenceReport) -> Vec<IterationRecord> {
    r.rows.iter().cloned().map(|mut row| {
        row.elapsed_ms = 0.0;
        row
    }).collect()
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, format!("\"{}\"", m.name()));
    }
    assert!("newton".parse::<Method>().is_err());
}

#[test]
fn rest_start_converges_immediately() {
    let m = grid(4);
    for method in Method::ALL {
        let r = run(&m, EnergyModel::Iso, m.rest_positions(), SolverConfig::new(method));
        assert!(r.converged(), "{method}");
        assert_eq!(r.iterations(), 0);
    }
}

#[test]
fn inverted_start_is_rejected() {
    let m = grid(2);
    let mut x = m.rest_positions().to_vec();
    // centre vertex pushed far outside the square
    x[8] = 5.0;
    let err = solve(&m, &EnergyModel::Iso, &x, &SolverConfig::new(Method::Bcqn)).unwrap_err();
    assert!(matches!(err, SolverError::NonInjectiveStart { .. }));
}

#[test]
fn bad_configuration_is_rejected() {
    let m = grid(2);
    let err = solve(&m, &EnergyModel::Iso, &[0.0; 3], &SolverConfig::new(Method::Sgd)).unwrap_err();
    assert!(matches!(err, SolverError::InvalidConfig(_)));
    let cfg = SolverConfig::new(Method::Sgd).with_epsilon(0.0);
    assert!(solve(&m, &EnergyModel::Iso, m.rest_positions(), &cfg).is_err());
}

#[test]
fn newton_solves_quadratic_in_one_step() {
    let m = grid(5);
    let x = perturbed(&m, 1, 0.02);
    let r = run(&m, EnergyModel::Dirichlet, &x, SolverConfig::new(Method::Pn).with_epsilon(1e-8));
    assert!(r.converged());
    assert_eq!(r.iterations(), 1);
}

#[test]
fn sobolev_step_is_exact_for_dirichlet() {
    // The Dirichlet Hessian is the Laplacian itself.
    let m = grid(5);
    let x = perturbed(&m, 2, 0.02);
    let r = run(&m, EnergyModel::Dirichlet, &x, SolverConfig::new(Method::Sgd).with_epsilon(1e-8));
    assert!(r.converged());
    assert_eq!(r.iterations(), 1);
    for (a, b) in r.final_positions.iter().zip(m.rest_positions()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn zero_beta_without_filter_is_slbfgs() {
    let m = grid(6);
    let x = perturbed(&m, 3, 0.04);
    let bcqn = SolverConfig::new(Method::Bcqn).with_filter(false).with_beta(BetaMode::Fixed(0.0)).with_max_iterations(40);
    let slbfgs = SolverConfig::new(Method::Slbfgs).with_max_iterations(40);
    let a = run(&m, EnergyModel::Iso, &x, bcqn);
    let b = run(&m, EnergyModel::Iso, &x, slbfgs);
    assert_eq!(a.iterations(), b.iterations());
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert_eq!(ra.energy, rb.energy);
        assert_eq!(ra.gradient_norm, rb.gradient_norm);
    }
}

#[test]
fn unit_beta_on_dirichlet_matches_sgd() {
    // With z = Ls every pair is consistent with L, so the proxy stays L^-1.
    let m = grid(6);
    let x = perturbed(&m, 4, 0.04);
    let bcqn = SolverConfig::new(Method::Bcqn).with_filter(false).with_beta(BetaMode::Fixed(1.0)).with_epsilon(1e-9);
    let a = run(&m, EnergyModel::Dirichlet, &x, bcqn);
    let b = run(&m, EnergyModel::Dirichlet, &x, SolverConfig::new(Method::Sgd).with_epsilon(1e-9));
    assert_eq!(a.iterations(), b.iterations());
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert!((ra.energy - rb.energy).abs() <= 1e-12 * rb.energy.abs().max(1e-300) + 1e-15);
    }
}

#[test]
fn first_bcqn_step_matches_sgd_without_contact() {
    let m = grid(6);
    let x = perturbed(&m, 5, 0.01);
    let a = run(&m, EnergyModel::Iso, &x, SolverConfig::new(Method::Bcqn).with_max_iterations(1));
    let b = run(&m, EnergyModel::Iso, &x, SolverConfig::new(Method::Sgd).with_max_iterations(1));
    assert_eq!(a.rows[1].active, 0);
    assert_eq!(a.rows[1].energy, b.rows[1].energy);
    assert_eq!(a.final_positions, b.final_positions);
}

#[test]
fn every_method_decreases_energy() {
    let m = grid(6);
    let x = perturbed(&m, 6, 0.05);
    for method in Method::ALL {
        let r = run(&m, EnergyModel::Iso, &x, SolverConfig::new(method).with_max_iterations(30));
        if matches!(method, Method::ZeroDirection | Method::ZeroGradient) {
            // These may zero every free DOF and stall at the start.
            assert!(r.final_energy() <= r.rows[0].energy, "{method}");
        } else {
            assert!(r.final_energy() < r.rows[0].energy, "{method}: {:?} {:?}", r.verdict, r.message);
        }
        assert!(r.rows.iter().all(|row| row.min_det > 0.0), "{method}");
        if method.is_monotone() {
            for w in r.rows.windows(2) {
                assert!(w[1].energy < w[0].energy, "{method}");
            }
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let m = grid(8);
    let x = perturbed(&m, 7, 0.03);
    for method in [Method::Bcqn, Method::Aqp, Method::Pn] {
        let cfg = SolverConfig::new(method).with_max_iterations(25);
        let a = run(&m, EnergyModel::Iso, &x, cfg.clone());
        let b = run(&m, EnergyModel::Iso, &x, cfg);
        assert_eq!(strip_timing(&a), strip_timing(&b));
        assert_eq!(a.to_csv(false), b.to_csv(false));
    }
}

#[test]
fn csv_has_declared_columns() {
    let m = grid(3);
    let x = perturbed(&m, 8, 0.05);
    let r = run(&m, EnergyModel::Iso, &x, SolverConfig::new(Method::Bcqn).with_max_iterations(3));
    let csv = r.to_csv(false);
    let header = csv.lines().next().unwrap();
    assert_eq!(header, CSV_COLUMNS.join(","));
    assert_eq!(csv.lines().count(), r.rows.len() + 1);
    assert!(r.to_csv(true).lines().next().unwrap().ends_with(",elapsed_ms"));
    let summary = r.summary(&SolverConfig::new(Method::Bcqn));
    assert_eq!(summary["method"], "bcqn");
}

#[test]
fn converges_on_iso() {
    let m = grid(8);
    let x = perturbed(&m, 9, 0.04);
    for method in [Method::Bcqn, Method::Sgd, Method::Lbfgs, Method::Pn] {
        let r = run(&m, EnergyModel::Iso, &x, SolverConfig::new(method).with_epsilon(1e-6));
        assert!(r.converged(), "{method}: {:?} {:?}", r.verdict, r.message);
    }
}
