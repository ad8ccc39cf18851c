//! Mean-field vector field on the simplex and its strict Lyapunov function.
//!
//! With `W_e = sum_{j in e} x_j^{a_e}` for each competition `e`:
//!
//! ```text
//! F_i(x)  = -x_i + (1/N) sum_{e ∋ i} x_i^{a_e} / W_e
//! L(x)    = -sum_i x_i + (1/N) sum_e log(W_e) / a_e
//! dL/dx_i = -1 + (1/N) sum_{e ∋ i} x_i^{a_e - 1} / W_e
//! ```
//!
//! so that `F_i = x_i * dL/dx_i` and `L` increases along every trajectory.
//! Everything here is generic over [`Scalar`].

use nalgebra::DMatrix;
use thiserror::Error;

use crate::model::Model;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("point has {found} coordinates, model has {expected} vertices")]
    Dimension { expected: usize, found: usize },
    #[error("competition {competition} has every member at zero")]
    DomainViolation { competition: usize },
    #[error("coordinates must be nonnegative and sum to 1 (sum = {sum}, min = {min})")]
    NotOnSimplex { sum: f64, min: f64 },
    #[error("Hessian undefined: vertex {vertex} is zero and an incident exponent differs from 1")]
    HessianUndefined { vertex: usize },
    #[error(
        "Jacobian undefined at vertex {vertex}: exponent below 1 on the boundary, \
         classify through the off-support gradient instead"
    )]
    JacobianUndefined { vertex: usize },
    #[error("integration start must have every coordinate positive")]
    StartNotInterior,
    #[error("trajectory left the domain at t = {t}: competition {competition} sum below {c}")]
    LeftDomain { t: f64, competition: usize, c: f64 },
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
}

/// A point of the closed simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint<T> {
    coords: Vec<T>,
}

impl<T: Scalar> SimplexPoint<T> {
    pub fn new(coords: Vec<T>) -> Result<Self, DynamicsError> {
        let sum = coords.iter().fold(T::zero(), |a, &b| a + b);
        let min = coords.iter().fold(T::infinity(), |a, &b| a.min(b));
        let tol = 1e-9f64.max(64.0 * T::epsilon().as_f64() * coords.len() as f64);
        if coords.is_empty() || min < T::zero() || (sum.as_f64() - 1.0).abs() > tol {
            return Err(DynamicsError::NotOnSimplex {
                sum: sum.as_f64(),
                min: min.as_f64(),
            });
        }
        Ok(Self { coords })
    }

    /// The uniform measure `(1/m, ..., 1/m)`.
    pub fn uniform(m: usize) -> Self {
        Self {
            coords: vec![T::one() / T::of_usize(m); m],
        }
    }

    /// Divides by the coordinate sum; used to absorb rounding drift.
    pub fn normalized(mut coords: Vec<T>) -> Result<Self, DynamicsError> {
        let sum = coords.iter().fold(T::zero(), |a, &b| a + b);
        for c in &mut coords {
            *c = *c / sum;
        }
        Self::new(coords)
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<T> {
        self.coords
    }

    /// Indices of the positive coordinates.
    pub fn support(&self) -> Vec<usize> {
        (0..self.coords.len())
            .filter(|&i| self.coords[i] > T::zero())
            .collect()
    }
}

impl<T> std::ops::Deref for SimplexPoint<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.coords
    }
}

/// The domain where every competition keeps total mass at least `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainDelta {
    pub c: f64,
}

impl DomainDelta {
    /// `c = 1 / (2N)`.
    pub fn for_model(model: &Model) -> Self {
        Self {
            c: 0.5 / model.competition_count() as f64,
        }
    }

    /// First competition whose mass is below `c`, if any.
    pub fn violation<T: Scalar>(&self, model: &Model, x: &[T]) -> Option<usize> {
        model.competitions().iter().position(|comp| {
            let mass = comp.members.iter().fold(T::zero(), |a, &j| a + x[j]);
            mass.as_f64() < self.c
        })
    }

    pub fn contains<T: Scalar>(&self, model: &Model, x: &[T]) -> bool {
        x.iter().all(|&v| v >= T::zero()) && self.violation(model, x).is_none()
    }
}

fn check_dim<T>(model: &Model, x: &[T]) -> Result<(), DynamicsError> {
    if x.len() != model.vertex_count() {
        Err(DynamicsError::Dimension {
            expected: model.vertex_count(),
            found: x.len(),
        })
    } else {
        Ok(())
    }
}

#[inline]
fn pow<T: Scalar>(x: T, a: T) -> T {
    if a == T::one() {
        x
    } else {
        x.powf(a)
    }
}

/// `x^(a-1)`; equals `+inf` at `x = 0` when `a < 1` and `1` when `a = 1`.
#[inline]
fn pow_m1<T: Scalar>(x: T, a: T) -> T {
    if a == T::one() {
        T::one()
    } else {
        x.powf(a - T::one())
    }
}

/// Per-competition weights `x_j^a` and their sum.
fn weights<T: Scalar>(x: &[T], members: &[usize], a: T) -> (Vec<T>, T) {
    let w: Vec<T> = members.iter().map(|&j| pow(x[j], a)).collect();
    let total = w.iter().fold(T::zero(), |s, &v| s + v);
    (w, total)
}

pub fn vector_field<T: Scalar>(model: &Model, x: &[T]) -> Result<Vec<T>, DynamicsError> {
    check_dim(model, x)?;
    let inv_n = T::one() / T::of_usize(model.competition_count());
    let mut f: Vec<T> = x.iter().map(|&v| -v).collect();
    for (k, comp) in model.competitions().iter().enumerate() {
        let (w, total) = weights(x, &comp.members, T::of(comp.alpha));
        if total <= T::zero() {
            return Err(DynamicsError::DomainViolation { competition: k });
        }
        for (&j, &wj) in comp.members.iter().zip(&w) {
            f[j] = f[j] + inv_n * wj / total;
        }
    }
    Ok(f)
}

/// Strict Lyapunov function. A competition with zero total mass yields `-inf`.
pub fn lyapunov<T: Scalar>(model: &Model, x: &[T]) -> Result<T, DynamicsError> {
    check_dim(model, x)?;
    let inv_n = T::one() / T::of_usize(model.competition_count());
    let mut value = -x.iter().fold(T::zero(), |a, &b| a + b);
    for comp in model.competitions() {
        let a = T::of(comp.alpha);
        let (_, total) = weights(x, &comp.members, a);
        if total <= T::zero() {
            return Ok(T::neg_infinity());
        }
        value = value + inv_n * total.ln() / a;
    }
    Ok(value)
}

/// Gradient of [`lyapunov`]; entries are `+inf` at zero coordinates touching an exponent below 1.
pub fn lyapunov_gradient<T: Scalar>(model: &Model, x: &[T]) -> Result<Vec<T>, DynamicsError> {
    check_dim(model, x)?;
    let inv_n = T::one() / T::of_usize(model.competition_count());
    let mut g = vec![-T::one(); x.len()];
    for (k, comp) in model.competitions().iter().enumerate() {
        let a = T::of(comp.alpha);
        let (_, total) = weights(x, &comp.members, a);
        if total <= T::zero() {
            return Err(DynamicsError::DomainViolation { competition: k });
        }
        for &j in &comp.members {
            g[j] = g[j] + inv_n * pow_m1(x[j], a) / total;
        }
    }
    Ok(g)
}

/// `sum_i x_i (dL/dx_i)^2`, the rate of increase of `L` along the flow.
pub fn lyapunov_rate<T: Scalar>(model: &Model, x: &[T]) -> Result<T, DynamicsError> {
    let g = lyapunov_gradient(model, x)?;
    Ok(x.iter()
        .zip(&g)
        .filter(|(&xi, _)| xi > T::zero())
        .fold(T::zero(), |s, (&xi, &gi)| s + xi * gi * gi))
}

pub fn lyapunov_hessian<T: Scalar>(model: &Model, x: &[T]) -> Result<DMatrix<T>, DynamicsError> {
    check_dim(model, x)?;
    let m = x.len();
    let inv_n = T::one() / T::of_usize(model.competition_count());
    let mut h = DMatrix::from_element(m, m, T::zero());
    for (k, comp) in model.competitions().iter().enumerate() {
        let a = T::of(comp.alpha);
        if a != T::one() {
            if let Some(&v) = comp.members.iter().find(|&&j| x[j] <= T::zero()) {
                return Err(DynamicsError::HessianUndefined { vertex: v });
            }
        }
        let (_, total) = weights(x, &comp.members, a);
        if total <= T::zero() {
            return Err(DynamicsError::DomainViolation { competition: k });
        }
        let total2 = total * total;
        let d: Vec<T> = comp.members.iter().map(|&j| pow_m1(x[j], a)).collect();
        for (p, &i) in comp.members.iter().enumerate() {
            let curvature = if a == T::one() {
                T::zero()
            } else {
                (a - T::one()) * d[p] / x[i] / total
            };
            h[(i, i)] = h[(i, i)] + inv_n * (curvature - a * d[p] * d[p] / total2);
            for (q, &j) in comp.members.iter().enumerate() {
                if q != p {
                    h[(i, j)] = h[(i, j)] - inv_n * a * d[p] * d[q] / total2;
                }
            }
        }
    }
    Ok(h)
}

/// Jacobian of [`vector_field`], assembled by differentiating `F` directly.
///
/// Undefined (error) when a zero coordinate takes part in a competition with
/// exponent below 1.
pub fn jacobian<T: Scalar>(model: &Model, x: &[T]) -> Result<DMatrix<T>, DynamicsError> {
    check_dim(model, x)?;
    let m = x.len();
    let inv_n = T::one() / T::of_usize(model.competition_count());
    let mut jac = DMatrix::from_element(m, m, T::zero());
    for i in 0..m {
        jac[(i, i)] = -T::one();
    }
    for (k, comp) in model.competitions().iter().enumerate() {
        let a = T::of(comp.alpha);
        if a < T::one() {
            if let Some(&v) = comp.members.iter().find(|&&j| x[j] <= T::zero()) {
                return Err(DynamicsError::JacobianUndefined { vertex: v });
            }
        }
        let (w, total) = weights(x, &comp.members, a);
        if total <= T::zero() {
            return Err(DynamicsError::DomainViolation { competition: k });
        }
        let total2 = total * total;
        // d w_j / d x_j
        let dw: Vec<T> = comp
            .members
            .iter()
            .map(|&j| a * pow_m1(x[j], a))
            .collect();
        for (p, &i) in comp.members.iter().enumerate() {
            jac[(i, i)] = jac[(i, i)] + inv_n * dw[p] * (total - w[p]) / total2;
            for (q, &j) in comp.members.iter().enumerate() {
                if q != p {
                    jac[(i, j)] = jac[(i, j)] - inv_n * w[p] * dw[q] / total2;
                }
            }
        }
    }
    Ok(jac)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Domain floor; `None` means `1/(2N)`.
    pub c: Option<f64>,
    /// Keep every k-th state in the output (the final state is always kept).
    pub record_every: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            t_end: 10.0,
            dt: 1e-2,
            c: None,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    /// `L` at each recorded state.
    pub lyapunov: Vec<T>,
    /// Most negative single-step change of `L` over all steps (0 when monotone).
    pub max_lyapunov_dip: T,
    /// Largest `|sum x - 1|` removed by renormalization in a single step.
    pub max_projection: T,
    /// Smallest competition mass encountered.
    pub min_competition_mass: T,
}

impl<T: Scalar> Trajectory<T> {
    pub fn last(&self) -> &[T] {
        self.states.last().expect("trajectories hold at least the start")
    }
}

/// Classical fixed-step RK4 with projection back onto the simplex after each step.
pub fn integrate<T: Scalar>(
    model: &Model,
    x0: &[T],
    opts: &IntegrateOptions,
) -> Result<Trajectory<T>, DynamicsError> {
    check_dim(model, x0)?;
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(DynamicsError::BadStep(opts.dt));
    }
    if x0.iter().any(|&v| v <= T::zero()) {
        return Err(DynamicsError::StartNotInterior);
    }
    let domain = opts.c.map_or_else(|| DomainDelta::for_model(model), |c| DomainDelta { c });
    let mut x = SimplexPoint::new(x0.to_vec())?.into_coords();
    if let Some(competition) = domain.violation(model, &x) {
        return Err(DynamicsError::LeftDomain {
            t: 0.0,
            competition,
            c: domain.c,
        });
    }
    let steps = (opts.t_end / opts.dt).round().max(0.0) as usize;
    let dt = T::of(opts.dt);
    let half = T::of(0.5) * dt;
    let sixth = dt / T::of(6.0);
    let every = opts.record_every.max(1);

    let mut lyap = lyapunov(model, &x)?;
    let mut traj = Trajectory {
        times: vec![T::zero()],
        states: vec![x.clone()],
        lyapunov: vec![lyap],
        max_lyapunov_dip: T::zero(),
        max_projection: T::zero(),
        min_competition_mass: min_mass(model, &x),
    };
    let axpy = |base: &[T], k: &[T], h: T| -> Vec<T> {
        base.iter().zip(k).map(|(&b, &d)| b + h * d).collect()
    };
    for n in 1..=steps {
        let k1 = vector_field(model, &x)?;
        let k2 = vector_field(model, &axpy(&x, &k1, half))?;
        let k3 = vector_field(model, &axpy(&x, &k2, half))?;
        let k4 = vector_field(model, &axpy(&x, &k3, dt))?;
        let mut next: Vec<T> = (0..x.len())
            .map(|i| x[i] + sixth * (k1[i] + T::of(2.0) * (k2[i] + k3[i]) + k4[i]))
            .collect();
        let sum = next.iter().fold(T::zero(), |a, &b| a + b);
        traj.max_projection = traj.max_projection.max((sum - T::one()).abs());
        for v in &mut next {
            *v = (*v / sum).max(T::zero());
        }
        let t = T::of_usize(n) * dt;
        if let Some(competition) = domain.violation(model, &next) {
            return Err(DynamicsError::LeftDomain {
                t: t.as_f64(),
                competition,
                c: domain.c,
            });
        }
        let next_lyap = lyapunov(model, &next)?;
        traj.max_lyapunov_dip = traj.max_lyapunov_dip.min(next_lyap - lyap);
        traj.min_competition_mass = traj.min_competition_mass.min(min_mass(model, &next));
        lyap = next_lyap;
        x = next;
        if n % every == 0 || n == steps {
            traj.times.push(t);
            traj.states.push(x.clone());
            traj.lyapunov.push(lyap);
        }
    }
    Ok(traj)
}

fn min_mass<T: Scalar>(model: &Model, x: &[T]) -> T {
    model
        .competitions()
        .iter()
        .map(|c| c.members.iter().fold(T::zero(), |a, &j| a + x[j]))
        .fold(T::infinity(), |a, b| a.min(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Family, Graph, Hypergraph};
    use approx::assert_abs_diff_eq;

    fn model(family: Family, alpha: f64) -> Model {
        Model::uniform(Graph::generate(&family).unwrap(), alpha).unwrap()
    }

    #[test]
    fn regular_graph_uniform_is_a_zero() {
        for fam in [Family::Complete(4), Family::Cycle(5), Family::CompleteBipartite(3, 3)] {
            let md = model(fam, 1.7);
            let u = SimplexPoint::<f64>::uniform(md.vertex_count());
            for v in vector_field(&md, &u).unwrap() {
                assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn k2_field_vanishes_on_simplex() {
        let md = model(Family::Complete(2), 1.0);
        for p in [0.0, 0.1, 0.37, 0.9, 1.0] {
            let f = vector_field(&md, &[p, 1.0 - p]).unwrap();
            assert_abs_diff_eq!(f[0], 0.0, epsilon = 1e-16);
            assert_abs_diff_eq!(f[1], 0.0, epsilon = 1e-16);
        }
    }

    #[test]
    fn one_hyperedge_field_vanishes() {
        let md = Model::hypergraph(Hypergraph::one_edge(4).unwrap());
        let f: Vec<f64> = vector_field(&md, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-16));
    }

    #[test]
    fn zero_pair_is_a_domain_error() {
        let md = model(Family::Path(3), 1.0);
        assert_eq!(
            vector_field(&md, &[0.0, 0.0, 1.0]),
            Err(DynamicsError::DomainViolation { competition: 0 })
        );
        assert_eq!(lyapunov(&md, &[0.0, 0.0, 1.0]), Ok(f64::NEG_INFINITY));
    }

    #[test]
    fn lyapunov_examples() {
        let k3 = model(Family::Complete(3), 1.0);
        let third = 1.0 / 3.0;
        assert_abs_diff_eq!(
            lyapunov(&k3, &[third; 3]).unwrap(),
            -1.0 + (2.0f64 / 3.0).ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            lyapunov(&k3, &[third; 3]).unwrap(),
            -1.4054651081081644,
            epsilon = 1e-12
        );
        let k2 = model(Family::Complete(2), 1.0);
        assert_eq!(lyapunov(&k2, &[1.0, 0.0]).unwrap(), -1.0);
        let s3 = model(Family::Star(3), 1.0);
        assert_eq!(lyapunov(&s3, &[0.0, 0.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn gradient_examples() {
        let k3 = model(Family::Complete(3), 1.0);
        for g in lyapunov_gradient(&k3, &[1.0 / 3.0; 3]).unwrap() {
            assert_abs_diff_eq!(g, 0.0, epsilon = 1e-15);
        }
        let g = lyapunov_gradient(&k3, &[0.5, 0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(g[2], 1.0 / 3.0, epsilon = 1e-15);

        let s3 = model(Family::Star(3), 0.5);
        let g = lyapunov_gradient(&s3, &[0.5, 0.5, 0.0]).unwrap();
        assert_eq!(g[2], f64::INFINITY);
    }

    #[test]
    fn hessian_closed_form_on_k2() {
        let k2 = model(Family::Complete(2), 1.0);
        let h = lyapunov_hessian(&k2, &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(h[(0, 1)], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(1, 0)], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn hessian_undefined_on_boundary_off_alpha_one() {
        let s3 = model(Family::Star(3), 2.0);
        assert_eq!(
            lyapunov_hessian(&s3, &[0.0, 0.5, 0.5]),
            Err(DynamicsError::HessianUndefined { vertex: 0 })
        );
        let k3 = model(Family::Complete(3), 1.0);
        assert!(lyapunov_hessian(&k3, &[0.5, 0.5, 0.0]).is_ok());
    }

    #[test]
    fn jacobian_boundary_rules() {
        let k3 = model(Family::Complete(3), 1.0);
        let j = jacobian(&k3, &[0.5, 0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(j[(2, 2)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j[(2, 0)], 0.0, epsilon = 1e-15);

        let s = model(Family::Star(3), 0.5);
        assert_eq!(
            jacobian(&s, &[0.5, 0.5, 0.0]),
            Err(DynamicsError::JacobianUndefined { vertex: 2 })
        );
        let s = model(Family::Star(3), 2.0);
        assert!(jacobian(&s, &[0.5, 0.5, 0.0]).is_ok());
    }

    #[test]
    fn jacobian_equals_gradient_plus_scaled_hessian() {
        let md = Model::new(
            crate::model::Topology::Graph(Graph::generate(&Family::Star(4)).unwrap()),
            crate::model::FieldSpec::PerEdgeAlpha(vec![0.4, 1.0, 2.5]),
        )
        .unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        let jac = jacobian(&md, &x).unwrap();
        let g = lyapunov_gradient(&md, &x).unwrap();
        let h = lyapunov_hessian(&md, &x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = x[i] * h[(i, j)] + if i == j { g[i] } else { 0.0 };
                // the -x_i term of F contributes -1 on the diagonal, matched by the -1 in g
                assert_abs_diff_eq!(jac[(i, j)], expected, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn simplex_point_validation() {
        assert!(SimplexPoint::new(vec![0.5, 0.5]).is_ok());
        assert!(SimplexPoint::new(vec![0.6, 0.5]).is_err());
        assert!(SimplexPoint::new(vec![1.5, -0.5]).is_err());
        let p = SimplexPoint::normalized(vec![2.0, 0.0, 2.0]).unwrap();
        assert_eq!(p.coords(), &[0.5, 0.0, 0.5]);
        assert_eq!(p.support(), vec![0, 2]);
    }

    #[test]
    fn integrate_k3_reaches_uniform() {
        let k3 = model(Family::Complete(3), 1.0);
        let traj = integrate(
            &k3,
            &[0.6, 0.3, 0.1],
            &IntegrateOptions {
                t_end: 100.0,
                ..Default::default()
            },
        )
        .unwrap();
        for &v in traj.last() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-6);
        }
        assert!(traj.max_lyapunov_dip >= -1e-9);
    }

    #[test]
    fn integrate_from_equilibrium_is_constant() {
        let k3 = model(Family::Complete(3), 1.0);
        let u = [1.0 / 3.0; 3];
        let traj = integrate(&k3, &u, &IntegrateOptions::default()).unwrap();
        for state in &traj.states {
            for (a, b) in state.iter().zip(&u) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn integrate_c4_lands_on_omega() {
        let c4 = model(Family::Cycle(4), 1.0);
        let traj = integrate(
            &c4,
            &[0.4, 0.1, 0.4, 0.1],
            &IntegrateOptions {
                t_end: 50.0,
                ..Default::default()
            },
        )
        .unwrap();
        let x = traj.last();
        assert_abs_diff_eq!(x[0], x[2], epsilon = 1e-6);
        assert_abs_diff_eq!(x[1], x[3], epsilon = 1e-6);
    }

    #[test]
    fn integrate_rejects_bad_input() {
        let k3 = model(Family::Complete(3), 1.0);
        assert_eq!(
            integrate(&k3, &[0.5, 0.5, 0.0], &IntegrateOptions::default()),
            Err(DynamicsError::StartNotInterior)
        );
        assert_eq!(
            integrate(
                &k3,
                &[0.5, 0.25, 0.25],
                &IntegrateOptions {
                    dt: 0.0,
                    ..Default::default()
                }
            ),
            Err(DynamicsError::BadStep(0.0))
        );
    }

    #[test]
    fn single_precision_field_is_tangent() {
        let md = model(Family::Star(5), 0.5);
        let x = [0.1f32, 0.2, 0.15, 0.25, 0.3];
        let sum: f32 = vector_field(&md, &x).unwrap().iter().sum();
        assert!(sum.abs() < 1e-6);
    }
}
