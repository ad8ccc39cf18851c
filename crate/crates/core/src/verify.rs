//! Property suite: calculus identities, flow invariants, the stochastic
//! approximation identity and the spectral checks on two-valued equilibria.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{
    integrate, jacobian, lyapunov, lyapunov_gradient, lyapunov_hessian, vector_field, DomainDelta,
    IntegrateOptions,
};
use crate::equilibria::{bipartite_spectrum, find_equilibria, omega_set, SolverOptions};
use crate::graph::{Family, Graph, Hypergraph};
use crate::model::Model;
use crate::urn::{RngSpec, Urn, UrnState};

/// Central-difference step.
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub case: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub bound: f64,
}

impl CheckResult {
    fn at_most(name: &str, case: &str, worst: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            case: case.into(),
            passed: worst <= bound,
            worst,
            bound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub points_per_case: usize,
    pub trajectories_per_case: usize,
    pub t_end: f64,
    pub sa_steps: u64,
    pub replays: u64,
    pub omega_points: usize,
    pub seed: u64,
}

impl VerifyOptions {
    pub fn full() -> Self {
        Self {
            points_per_case: 9,
            trajectories_per_case: 9,
            t_end: 30.0,
            sa_steps: 10_000,
            replays: 10_000,
            omega_points: 5,
            seed: 20,
        }
    }

    pub fn quick() -> Self {
        Self {
            points_per_case: 3,
            trajectories_per_case: 2,
            t_end: 5.0,
            sa_steps: 1_000,
            replays: 2_000,
            omega_points: 2,
            seed: 20,
        }
    }
}

/// A model with a display name.
#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub model: Model,
}

impl Case {
    pub fn new(name: impl Into<String>, model: Model) -> Self {
        Self {
            name: name.into(),
            model,
        }
    }
}

/// `{K3, C4, star(5), K_{3,3}} x {0.5, 1, 2}`.
pub fn standard_cases() -> Vec<Case> {
    let families = [
        Family::Complete(3),
        Family::Cycle(4),
        Family::Star(5),
        Family::CompleteBipartite(3, 3),
    ];
    let mut out = Vec::new();
    for f in families {
        for alpha in [0.5, 1.0, 2.0] {
            let g = Graph::generate(&f).expect("standard families are valid");
            let model = Model::uniform(g, alpha).expect("standard exponents are valid");
            out.push(Case::new(format!("{f} alpha={alpha}"), model));
        }
    }
    out
}

/// Normalized exponential sample with every coordinate bounded away from 0,
/// redrawn until it lies in the invariant domain.
pub fn random_interior(model: &Model, rng: &mut impl Rng) -> Vec<f64> {
    let m = model.vertex_count();
    let domain = DomainDelta::for_model(model);
    loop {
        let raw: Vec<f64> = (0..m)
            .map(|_| 0.05 - (1.0 - rng.random::<f64>()).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let x: Vec<f64> = raw.into_iter().map(|v| v / sum).collect();
        if domain.contains(model, &x) {
            return x;
        }
    }
}

fn rel_error(approx: &[f64], exact: &[f64]) -> f64 {
    let diff = approx
        .iter()
        .zip(exact)
        .map(|(a, e)| (a - e).abs())
        .fold(0.0, f64::max);
    let scale = exact.iter().map(|e| e.abs()).fold(1.0, f64::max);
    diff / scale
}

fn shifted(x: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[i] += h;
    y
}

/// Column `i` of the central-difference Jacobian of `f`.
fn fd_columns(x: &[f64], f: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let m = x.len();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        let plus = f(&shifted(x, i, FD_STEP));
        let minus = f(&shifted(x, i, -FD_STEP));
        for r in 0..m {
            out[(r, i)] = (plus[r] - minus[r]) / (2.0 * FD_STEP);
        }
    }
    out
}

/// Finite-difference and algebraic identities at random interior points.
pub fn calculus_checks(case: &Case, points: usize, rng: &mut impl Rng) -> Vec<CheckResult> {
    let model = &case.model;
    let (mut grad, mut hess, mut jac, mut tangency, mut identity) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..points {
        let x = random_interior(model, rng);
        let g = lyapunov_gradient(model, &x).expect("interior point");
        let g_fd: Vec<f64> = (0..x.len())
            .map(|i| {
                let up = lyapunov(model, &shifted(&x, i, FD_STEP)).expect("interior point");
                let down = lyapunov(model, &shifted(&x, i, -FD_STEP)).expect("interior point");
                (up - down) / (2.0 * FD_STEP)
            })
            .collect();
        grad = grad.max(rel_error(&g_fd, &g));

        let h = lyapunov_hessian(model, &x).expect("interior point");
        let h_fd = fd_columns(&x, |y| lyapunov_gradient(model, y).expect("interior point"));
        hess = hess.max(rel_error(h_fd.as_slice(), h.as_slice()));

        let j = jacobian(model, &x).expect("interior point");
        let j_fd = fd_columns(&x, |y| vector_field(model, y).expect("interior point"));
        jac = jac.max(rel_error(j_fd.as_slice(), j.as_slice()));

        let f = vector_field(model, &x).expect("interior point");
        tangency = tangency.max(f.iter().sum::<f64>().abs());
        for i in 0..x.len() {
            identity = identity.max((f[i] - x[i] * g[i]).abs());
        }
    }
    vec![
        CheckResult::at_most("gradient_matches_finite_differences", &case.name, grad, 1e-6),
        CheckResult::at_most("hessian_matches_finite_differences", &case.name, hess, 1e-6),
        CheckResult::at_most("jacobian_matches_finite_differences", &case.name, jac, 1e-6),
        CheckResult::at_most("field_is_tangent", &case.name, tangency, 1e-12),
        CheckResult::at_most("field_equals_x_times_gradient", &case.name, identity, 1e-12),
    ]
}

/// RK4 runs from random starts: `L` never dips and the domain is never left.
pub fn flow_checks(case: &Case, runs: usize, t_end: f64, rng: &mut impl Rng) -> Vec<CheckResult> {
    let model = &case.model;
    let opts = IntegrateOptions {
        t_end,
        dt: 1e-2,
        c: None,
        record_every: usize::MAX,
    };
    let mut dip = 0.0f64;
    let mut escapes = 0.0;
    for _ in 0..runs {
        let x0 = random_interior(model, rng);
        match integrate(model, &x0, &opts) {
            Ok(t) => dip = dip.min(t.max_lyapunov_dip),
            Err(_) => escapes += 1.0,
        }
    }
    vec![
        CheckResult::at_most("lyapunov_nondecreasing", &case.name, -dip, 1e-9),
        CheckResult::at_most("domain_invariant", &case.name, escapes, 0.0),
    ]
}

/// Checks `x(n+1) - x(n) = gamma_n (F(x(n)) + u_n)` along a run, and that `u`
/// averages to zero over replays of one step from a fixed state.
pub fn stochastic_checks(case: &Case, steps: u64, replays: u64, seed: u64) -> Vec<CheckResult> {
    let model = &case.model;
    let mut rng = RngSpec::new(seed, 0).rng();
    let mut urn = Urn::new(model, UrnState::ones(model)).expect("matching dimension");
    let mut worst = 0.0f64;
    let mut x = urn.proportions();
    for _ in 0..steps {
        let f = vector_field(model, &x).expect("positive counts");
        let d = urn.step(&mut rng).expect("no overflow at this scale");
        let next = urn.proportions();
        for i in 0..x.len() {
            worst = worst.max((next[i] - x[i] - d.gamma * (f[i] + d.noise[i])).abs());
        }
        x = next;
    }
    let fixed = urn.into_state();
    let mut mean = vec![0.0; x.len()];
    for r in 0..replays {
        let mut replay = Urn::new(model, fixed.clone()).expect("matching dimension");
        let d = replay
            .step(&mut RngSpec::new(seed, r + 1).rng())
            .expect("no overflow at this scale");
        for (acc, u) in mean.iter_mut().zip(&d.noise) {
            *acc += u / replays as f64;
        }
    }
    let mean_norm = mean.iter().map(|v| v.abs()).fold(0.0, f64::max);
    vec![
        CheckResult::at_most("stochastic_approximation_identity", &case.name, worst, 1e-12),
        CheckResult::at_most("noise_mean_near_zero", &case.name, mean_norm, 0.04),
    ]
}

/// Spectral flags at evenly spaced interior points of the two-valued segment.
pub fn spectral_checks(name: &str, graph: &Graph, points: usize) -> Vec<CheckResult> {
    let Ok(omega) = omega_set(graph) else {
        return vec![CheckResult::at_most("graph_is_regular_bipartite", name, 1.0, 0.0)];
    };
    let mut failures = 0.0;
    let mut relation = 0.0f64;
    for k in 1..=points {
        let p = omega.mass() * k as f64 / (points + 1) as f64;
        match bipartite_spectrum(graph, p) {
            Ok(r) => {
                relation = relation.max(r.relation_error);
                if !r.all_hold() {
                    failures += 1.0;
                }
            }
            Err(_) => failures += 1.0,
        }
    }
    vec![
        CheckResult::at_most("jacobian_block_relation", name, relation, 1e-10),
        CheckResult::at_most("spectral_flags_hold", name, failures, 0.0),
    ]
}

/// `F` vanishes identically and the solver reports a continuum.
pub fn continuum_checks(case: &Case, points: usize, rng: &mut impl Rng) -> Vec<CheckResult> {
    let model = &case.model;
    let mut field = 0.0f64;
    for _ in 0..points {
        let x = random_interior(model, rng);
        let f = vector_field(model, &x).expect("interior point");
        field = field.max(f.iter().map(|v| v.abs()).fold(0.0, f64::max));
    }
    let continuum = find_equilibria(
        model,
        &SolverOptions {
            full_support_only: true,
            ..SolverOptions::default()
        },
    )
    .is_ok_and(|r| r.has_continuum());
    vec![
        CheckResult::at_most("field_vanishes", &case.name, field, 1e-12),
        CheckResult::at_most(
            "continuum_detected",
            &case.name,
            if continuum { 0.0 } else { 1.0 },
            0.0,
        ),
    ]
}

/// The whole suite on the standard grid, plus the spectral and degenerate cases.
pub fn run_suite(opts: &VerifyOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for case in standard_cases() {
        out.extend(check_case(&case, opts));
    }
    for f in [Family::Cycle(4), Family::Cycle(6), Family::CompleteBipartite(3, 3)] {
        let g = Graph::generate(&f).expect("standard families are valid");
        out.extend(spectral_checks(&f.to_string(), &g, opts.omega_points));
    }
    let hyper = Model::hypergraph(Hypergraph::one_edge(4).expect("four vertices"));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    out.extend(continuum_checks(
        &Case::new("hyper:one-edge:4", hyper),
        opts.points_per_case,
        &mut rng,
    ));
    out
}

/// Checks that apply to one model; graph-specific extras are included when they apply.
pub fn check_case(case: &Case, opts: &VerifyOptions) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = calculus_checks(case, opts.points_per_case, &mut rng);
    out.extend(flow_checks(case, opts.trajectories_per_case, opts.t_end, &mut rng));
    out.extend(stochastic_checks(case, opts.sa_steps, opts.replays, opts.seed));
    if let Some(g) = case.model.graph() {
        if case.model.common_alpha() == Some(1.0) && omega_set(g).is_ok() {
            out.extend(spectral_checks(&case.name, g, opts.omega_points));
        }
    } else if case.model.competition_count() == 1 {
        out.extend(continuum_checks(case, opts.points_per_case, &mut rng));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let failed: Vec<CheckResult> = run_suite(&VerifyOptions::quick())
            .into_iter()
            .filter(|c| !c.passed)
            .collect();
        assert!(failed.is_empty(), "{failed:#?}");
    }

    #[test]
    fn random_interior_respects_domain() {
        let model = Model::uniform(Graph::generate(&Family::Star(5)).unwrap(), 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = random_interior(&model, &mut rng);
            assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(DomainDelta::for_model(&model).contains(&model, &x));
        }
    }

    #[test]
    fn non_bipartite_graph_fails_spectral_precondition() {
        let g = Graph::generate(&Family::Complete(3)).unwrap();
        let r = spectral_checks("K3", &g, 1);
        assert_eq!(r.len(), 1);
        assert!(!r[0].passed);
    }
}
