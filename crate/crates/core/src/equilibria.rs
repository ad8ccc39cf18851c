//! Zeros of the vector field, organized by support.
//!
//! On the face where exactly the vertices of `S` are positive, `F_i = x_i dL/dx_i`
//! vanishes off `S` automatically, so the equilibria of that face are the
//! solutions of `dL/dx_i = 0` for `i in S`. Those equations already force the
//! coordinates to sum to one, which lets the solver run an unconstrained damped
//! Newton iteration on the positive orthant of the face.

use nalgebra::{Complex, DMatrix, DVector, Schur, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, DynamicsError, SimplexPoint};
use crate::graph::Graph;
use crate::model::Model;

/// Residual bound every reported equilibrium satisfies.
pub const FIELD_TOLERANCE: f64 = 1e-10;
/// Real parts inside `±SPECTRAL_TOLERANCE` count as zero.
pub const SPECTRAL_TOLERANCE: f64 = 1e-10;
const DEDUP_DISTANCE: f64 = 1e-8;
const MAX_FACE_VERTICES: usize = 20;
const MAX_HALVINGS: usize = 60;
const SVD_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriaError {
    #[error("{0} vertices is too many to enumerate faces; restrict to full support")]
    TooManyFaces(usize),
    #[error("graph is not regular and bipartite")]
    NotRegularBipartite,
    #[error("point is not in the interior of the two-valued segment: {0}")]
    NotInOmegaInterior(String),
    #[error("closed form needs m >= 3 and 0 < alpha < 1 (m = {m}, alpha = {alpha})")]
    ClosedFormDomain { m: usize, alpha: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// Every tangent eigenvalue (beyond those along a continuum) has negative real part.
    Stable,
    /// A positive off-support gradient or a tangent eigenvalue with positive real part.
    Unstable,
    /// A zero eigenvalue beyond the ones a continuum accounts for.
    DegenerateZeroEigenvalue,
    /// Boundary point where an off-support gradient is `+inf` (exponent below 1); unstable.
    BoundaryInfiniteGradient,
    /// Leading real part within tolerance of zero and no continuum to explain it.
    Inconclusive,
}

impl Classification {
    pub fn is_unstable(self) -> bool {
        matches!(
            self,
            Classification::Unstable | Classification::BoundaryInfiniteGradient
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Stable => "stable",
            Classification::Unstable => "unstable",
            Classification::DegenerateZeroEigenvalue => "degenerate_zero_eigenvalue",
            Classification::BoundaryInfiniteGradient => "boundary_infinite_gradient",
            Classification::Inconclusive => "inconclusive",
        }
    }
}

/// Stability verdict plus the quantities it was read from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityAssessment {
    pub classification: Classification,
    /// Largest `dL/dx_i` over vertices outside the support (may be `+inf`).
    pub max_off_support_gradient: Option<f64>,
    /// Eigenvalues of the full Jacobian, when it is defined.
    #[serde(skip)]
    pub spectrum: Option<Vec<Complex<f64>>>,
    /// Largest real part on the tangent space once continuum directions are removed.
    pub max_real_part_nonzero: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub point: Vec<f64>,
    /// 0-based indices of the positive coordinates.
    pub support: Vec<usize>,
    pub assessment: StabilityAssessment,
    /// Dimension of the equilibrium continuum this point was sampled from (0 if isolated).
    pub continuum_dimension: usize,
}

impl Equilibrium {
    pub fn classification(&self) -> Classification {
        self.assessment.classification
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaceOutcome {
    /// Finitely many equilibria (possibly none found).
    Isolated,
    /// The equilibria of this face form a continuum of the given dimension.
    Continuum { dimension: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceReport {
    pub support: Vec<usize>,
    pub outcome: FaceOutcome,
    /// Isolated points, or sample points of the continuum.
    pub equilibria: Vec<Equilibrium>,
    pub converged_starts: usize,
    pub failed_starts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriaReport {
    /// Faces with at least one equilibrium or a continuum, sorted by support.
    pub faces: Vec<FaceReport>,
    pub faces_examined: usize,
    /// Faces where some competition has no member in the support.
    pub faces_infeasible: usize,
}

impl EquilibriaReport {
    pub fn equilibria(&self) -> impl Iterator<Item = &Equilibrium> {
        self.faces.iter().flat_map(|f| f.equilibria.iter())
    }

    /// Equilibria of faces that are not continua.
    pub fn isolated(&self) -> impl Iterator<Item = &Equilibrium> {
        self.faces
            .iter()
            .filter(|f| f.outcome == FaceOutcome::Isolated)
            .flat_map(|f| f.equilibria.iter())
    }

    pub fn continua(&self) -> impl Iterator<Item = &FaceReport> {
        self.faces
            .iter()
            .filter(|f| matches!(f.outcome, FaceOutcome::Continuum { .. }))
    }

    pub fn has_continuum(&self) -> bool {
        self.continua().next().is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub starts_per_face: usize,
    /// Newton stops once `max_{i in S} |dL/dx_i|` falls below this.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub full_support_only: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            starts_per_face: 32,
            gradient_tolerance: 1e-12,
            max_iterations: 200,
            seed: 0x5eed,
            full_support_only: false,
        }
    }
}

/// Whether every competition keeps at least one member inside `support`.
pub fn face_feasible(model: &Model, support: &[usize]) -> bool {
    let mut inside = vec![false; model.vertex_count()];
    for &v in support {
        inside[v] = true;
    }
    model
        .competitions()
        .iter()
        .all(|c| c.members.iter().any(|&j| inside[j]))
}

pub fn find_equilibria(
    model: &Model,
    opts: &SolverOptions,
) -> Result<EquilibriaReport, EquilibriaError> {
    let m = model.vertex_count();
    let supports: Vec<Vec<usize>> = if opts.full_support_only {
        vec![(0..m).collect()]
    } else {
        if m > MAX_FACE_VERTICES {
            return Err(EquilibriaError::TooManyFaces(m));
        }
        (1u64..(1u64 << m))
            .map(|mask| (0..m).filter(|&i| mask >> i & 1 == 1).collect())
            .collect()
    };
    let mut report = EquilibriaReport {
        faces: Vec::new(),
        faces_examined: 0,
        faces_infeasible: 0,
    };
    for (face_index, support) in supports.into_iter().enumerate() {
        if !face_feasible(model, &support) {
            report.faces_infeasible += 1;
            continue;
        }
        report.faces_examined += 1;
        let face = solve_face(model, &support, opts, face_index as u64)?;
        if !face.equilibria.is_empty() {
            report.faces.push(face);
        }
    }
    report.faces.sort_by(|a, b| a.support.cmp(&b.support));
    Ok(report)
}

fn solve_face(
    model: &Model,
    support: &[usize],
    opts: &SolverOptions,
    stream: u64,
) -> Result<FaceReport, EquilibriaError> {
    let m = model.vertex_count();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(stream);
    let concave = model.max_alpha() <= 1.0;
    let starts = if support.len() == 1 { 1 } else { opts.starts_per_face.max(1) };

    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut converged = 0;
    let mut failed = 0;
    for _ in 0..starts {
        let mut start = vec![0.0; m];
        let weights: Vec<f64> = support
            .iter()
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let total: f64 = weights.iter().sum();
        for (&v, w) in support.iter().zip(&weights) {
            start[v] = w / total;
        }
        match newton_on_face(model, support, start, concave, opts)? {
            Some(point) => {
                converged += 1;
                if !found.iter().any(|p| distance(p, &point) <= DEDUP_DISTANCE) {
                    found.push(point);
                }
            }
            None => failed += 1,
        }
    }
    found.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));

    let dimension = continuum_dimension(model, &found)?;
    let outcome = if dimension > 0 {
        FaceOutcome::Continuum { dimension }
    } else {
        FaceOutcome::Isolated
    };
    let equilibria = found
        .into_iter()
        .map(|point| {
            let assessment = classify(model, &point, dimension)?;
            Ok(Equilibrium {
                support: support.to_vec(),
                point,
                assessment,
                continuum_dimension: dimension,
            })
        })
        .collect::<Result<Vec<_>, EquilibriaError>>()?;
    Ok(FaceReport {
        support: support.to_vec(),
        outcome,
        equilibria,
        converged_starts: converged,
        failed_starts: failed,
    })
}

/// Damped Newton on `dL/dx_S = 0`, keeping every support coordinate positive.
/// Steps are halved until `L` increases (all exponents <= 1) or the gradient
/// norm decreases (otherwise).
fn newton_on_face(
    model: &Model,
    support: &[usize],
    mut x: Vec<f64>,
    concave: bool,
    opts: &SolverOptions,
) -> Result<Option<Vec<f64>>, EquilibriaError> {
    let k = support.len();
    let residual = |x: &[f64]| -> Result<DVector<f64>, DynamicsError> {
        let g = dynamics::lyapunov_gradient(model, x)?;
        Ok(DVector::from_iterator(k, support.iter().map(|&i| g[i])))
    };
    let mut r = residual(&x)?;
    for _ in 0..opts.max_iterations {
        if r.amax() <= opts.gradient_tolerance {
            return Ok(accept(model, x));
        }
        let Some(step) = solve_newton(face_hessian(model, support, &x), &r) else {
            return Ok(None);
        };
        let l0 = dynamics::lyapunov(model, &x)?;
        let r0 = r.norm();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = {
                let mut y = x.clone();
                for (a, &i) in support.iter().enumerate() {
                    y[i] = x[i] + t * step[a];
                }
                y
            };
            if support.iter().all(|&i| trial[i] > 0.0) {
                let improves = if concave {
                    dynamics::lyapunov(model, &trial)? >= l0
                } else {
                    residual(&trial)?.norm() < r0
                };
                if improves {
                    x = trial;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Ok(None);
        }
        r = residual(&x)?;
    }
    if r.amax() <= opts.gradient_tolerance {
        return Ok(accept(model, x));
    }
    Ok(None)
}

/// Hessian of `L` restricted to the support coordinates. Unlike the full
/// Hessian it stays finite when off-support coordinates are zero.
fn face_hessian(model: &Model, support: &[usize], x: &[f64]) -> DMatrix<f64> {
    let k = support.len();
    let mut slot = vec![usize::MAX; x.len()];
    for (a, &i) in support.iter().enumerate() {
        slot[i] = a;
    }
    let inv_n = 1.0 / model.competition_count() as f64;
    let mut h = DMatrix::zeros(k, k);
    for c in model.competitions() {
        let a = c.alpha;
        let inside: Vec<usize> = c.members.iter().copied().filter(|&i| slot[i] != usize::MAX).collect();
        let w: f64 = c.members.iter().map(|&i| x[i].powf(a)).sum();
        for &i in &inside {
            let (si, xi) = (slot[i], x[i]);
            h[(si, si)] += inv_n * ((a - 1.0) * xi.powf(a - 2.0) / w - a * xi.powf(2.0 * a - 2.0) / (w * w));
            for &j in &inside {
                if j != i {
                    h[(si, slot[j])] -= inv_n * a * xi.powf(a - 1.0) * x[j].powf(a - 1.0) / (w * w);
                }
            }
        }
    }
    h
}

/// Renormalizes a converged point and keeps it if the field vanishes there.
fn accept(model: &Model, x: Vec<f64>) -> Option<Vec<f64>> {
    let point = SimplexPoint::normalized(x).ok()?.into_coords();
    let f = dynamics::vector_field(model, &point).ok()?;
    (f.iter().all(|v| v.abs() <= FIELD_TOLERANCE)).then_some(point)
}

/// Newton step `H d = -r`, falling back to the pseudo-inverse when `H` is singular
/// (continua of equilibria).
fn solve_newton(h: DMatrix<f64>, r: &DVector<f64>) -> Option<DVector<f64>> {
    if h.iter().chain(r.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    let rhs = -r;
    if let Some(d) = h.clone().lu().solve(&rhs) {
        if d.iter().all(|v| v.is_finite()) && (&h * &d - &rhs).amax() <= 1e-9 * (1.0 + rhs.amax()) {
            return Some(d);
        }
    }
    let scale = h.amax().max(1.0);
    SVD::try_new(h, true, true, f64::EPSILON, SVD_MAX_ITERATIONS)?
        .solve(&rhs, 1e-11 * scale)
        .ok()
        .filter(|d| d.iter().all(|v| v.is_finite()))
}

/// Dimension of the affine span of the face's equilibria when they form a
/// continuum, else 0.
///
/// Two distinct equilibria belong to one continuum when the midpoint is also an
/// equilibrium and their difference is a null direction of the Jacobian at both.
fn continuum_dimension(model: &Model, points: &[Vec<f64>]) -> Result<usize, EquilibriaError> {
    if points.len() < 2 {
        return Ok(0);
    }
    let linked = |a: &[f64], b: &[f64]| -> bool {
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        let Ok(f) = dynamics::vector_field(model, &mid) else {
            return false;
        };
        if f.iter().any(|v| v.abs() > FIELD_TOLERANCE) {
            return false;
        }
        let d = DVector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| y - x));
        let dn = d.norm();
        [a, b].iter().all(|p| match dynamics::jacobian(model, p) {
            Ok(j) => (j * &d).norm() <= 1e-6 * dn,
            Err(_) => false,
        })
    };
    let any_linked = (0..points.len())
        .any(|i| (i + 1..points.len()).any(|j| linked(&points[i], &points[j])));
    if !any_linked {
        return Ok(0);
    }
    let m = points[0].len();
    let diffs = DMatrix::from_fn(m, points.len() - 1, |r, c| points[c + 1][r] - points[0][r]);
    let Some(svd) = SVD::try_new(diffs, false, false, f64::EPSILON, SVD_MAX_ITERATIONS) else {
        return Ok(0);
    };
    let sv = svd.singular_values;
    let top = sv.max();
    Ok(sv.iter().filter(|&&s| s > 1e-6 * top.max(1e-300)).count().max(1))
}

/// Orthonormal basis of `{d : sum d = 0}` as the columns of an `m x (m-1)` matrix.
fn tangent_basis(m: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        a[(i, 0)] = 1.0;
        if i + 1 < m {
            a[(i, i + 1)] = 1.0;
        }
    }
    let q = a.qr().q();
    q.columns(1, m - 1).into_owned()
}

/// Eigenvalues of the Jacobian restricted to the simplex tangent space.
///
/// The all-ones row is a left eigenvector with eigenvalue -1, so the tangent
/// space is invariant and this drops exactly that trivial eigenvalue.
pub fn tangent_spectrum(jac: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let m = jac.nrows();
    if m < 2 {
        return Vec::new();
    }
    let q = tangent_basis(m);
    eigenvalues(&(q.transpose() * jac * &q))
}

/// Eigenvalues via a real Schur decomposition with an iteration cap. When the
/// QR iteration stalls it is retried on `mat + sI`. All NaN when `mat` has a
/// non-finite entry or no shift converges.
pub fn eigenvalues(mat: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let n = mat.nrows();
    let failed = vec![Complex::new(f64::NAN, f64::NAN); n];
    if mat.iter().any(|v| !v.is_finite()) {
        return failed;
    }
    let scale = mat.amax().max(1.0);
    for shift in [0.0, 0.3141, -0.5772, 1.4142] {
        let s = shift * scale;
        let shifted = mat + DMatrix::identity(n, n) * s;
        if let Some(schur) = Schur::try_new(shifted, f64::EPSILON, 200 * n.max(1)) {
            return schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z - Complex::new(s, 0.0))
                .collect();
        }
    }
    failed
}

/// Classifies an equilibrium; `continuum_dimension` zero eigenvalues are
/// attributed to the continuum the point lies on.
pub fn classify(
    model: &Model,
    point: &[f64],
    continuum_dimension: usize,
) -> Result<StabilityAssessment, EquilibriaError> {
    let g = dynamics::lyapunov_gradient(model, point)?;
    let off: Vec<f64> = (0..point.len())
        .filter(|&i| point[i] <= 0.0)
        .map(|i| g[i])
        .collect();
    let max_off = off.iter().copied().reduce(f64::max);
    let mut out = StabilityAssessment {
        classification: Classification::Inconclusive,
        max_off_support_gradient: max_off,
        spectrum: None,
        max_real_part_nonzero: None,
    };
    if max_off == Some(f64::INFINITY) {
        out.classification = Classification::BoundaryInfiniteGradient;
        return Ok(out);
    }
    let jac = match dynamics::jacobian(model, point) {
        Ok(j) => j,
        Err(DynamicsError::JacobianUndefined { .. }) => {
            if max_off.is_some_and(|v| v > SPECTRAL_TOLERANCE) {
                out.classification = Classification::Unstable;
            }
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    };
    out.spectrum = Some(eigenvalues(&jac));
    let mut tangent = tangent_spectrum(&jac);
    tangent.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let remaining = &tangent[continuum_dimension.min(tangent.len())..];
    let max_re = remaining.iter().map(|z| z.re).reduce(f64::max);
    out.max_real_part_nonzero = max_re;

    out.classification = if max_off.is_some_and(|v| v > SPECTRAL_TOLERANCE) {
        Classification::Unstable
    } else {
        match max_re {
            None => Classification::Stable,
            Some(re) if re > SPECTRAL_TOLERANCE => Classification::Unstable,
            Some(re) if re < -SPECTRAL_TOLERANCE => Classification::Stable,
            Some(_) if continuum_dimension > 0 => Classification::DegenerateZeroEigenvalue,
            Some(_) => Classification::Inconclusive,
        }
    };
    Ok(out)
}

/// The segment of two-valued equilibria of a regular bipartite graph:
/// `p` on part A, `q = 2/m - p` on part B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaDescriptor {
    pub part_a: Vec<usize>,
    pub part_b: Vec<usize>,
    pub vertex_count: usize,
    pub degree: usize,
}

impl OmegaDescriptor {
    /// `p + q`.
    pub fn mass(&self) -> f64 {
        2.0 / self.vertex_count as f64
    }

    pub fn point(&self, p: f64) -> Vec<f64> {
        let q = self.mass() - p;
        let mut x = vec![0.0; self.vertex_count];
        for &i in &self.part_a {
            x[i] = p;
        }
        for &i in &self.part_b {
            x[i] = q;
        }
        x
    }

    /// Euclidean distance to the segment; the optimal `p` solves a clamped quadratic.
    pub fn distance(&self, x: &[f64]) -> f64 {
        distance(x, &self.point(self.nearest_parameter(x)))
    }

    /// Minimizer over `p in [0, 2/m]` of `|x - point(p)|`.
    pub fn nearest_parameter(&self, x: &[f64]) -> f64 {
        let sum_a: f64 = self.part_a.iter().map(|&i| x[i]).sum();
        let sum_b: f64 = self.part_b.iter().map(|&i| x[i]).sum();
        let nb = self.part_b.len() as f64;
        let p = (sum_a - sum_b + nb * self.mass()) / self.vertex_count as f64;
        p.clamp(0.0, self.mass())
    }
}

pub fn omega_set(graph: &Graph) -> Result<OmegaDescriptor, EquilibriaError> {
    let info = graph.analyze();
    match (info.regular_degree, info.bipartition.is_bipartite) {
        (Some(degree), true) => Ok(OmegaDescriptor {
            part_a: info.bipartition.part_a,
            part_b: info.bipartition.part_b,
            vertex_count: graph.vertex_count(),
            degree,
        }),
        _ => Err(EquilibriaError::NotRegularBipartite),
    }
}

/// Jacobian structure at an interior point of the two-valued segment (exponent 1).
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteSpectrumReport {
    pub p: f64,
    pub q: f64,
    pub mu: f64,
    pub nu: f64,
    pub degree: usize,
    /// Block matrix `[[r nu I, -mu M], [-nu M^T, r mu I]]` in part-ordered labels.
    pub s_matrix: DMatrix<f64>,
    pub s_eigenvalues: Vec<Complex<f64>>,
    pub jacobian_eigenvalues: Vec<Complex<f64>>,
    /// `max |JF - (-I + S/r)|` after relabeling by parts.
    pub relation_error: f64,
    /// Second-smallest `|Re|` among the Jacobian eigenvalues.
    pub second_smallest_abs_real: f64,
    pub zero_is_simple: bool,
    pub nonzero_have_negative_real_part: bool,
    pub complex_real_parts_equal_half_degree: bool,
    pub degree_is_largest_real_eigenvalue: bool,
    pub degree_is_simple: bool,
}

impl BipartiteSpectrumReport {
    pub fn all_hold(&self) -> bool {
        self.zero_is_simple
            && self.nonzero_have_negative_real_part
            && self.complex_real_parts_equal_half_degree
            && self.degree_is_largest_real_eigenvalue
            && self.degree_is_simple
    }
}

pub fn bipartite_spectrum(graph: &Graph, p: f64) -> Result<BipartiteSpectrumReport, EquilibriaError> {
    let omega = omega_set(graph)?;
    let q = omega.mass() - p;
    if !(p > 0.0 && q > 0.0) {
        return Err(EquilibriaError::NotInOmegaInterior(format!(
            "p = {p}, q = {q}"
        )));
    }
    let model = Model::uniform(graph.clone(), 1.0).expect("exponent 1 is valid");
    let r = omega.degree as f64;
    let (mu, nu) = (p / (p + q), q / (p + q));
    let order: Vec<usize> = omega.part_a.iter().chain(&omega.part_b).copied().collect();
    let half = omega.part_a.len();
    let m = graph.vertex_count();
    let mut s = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            let (i, j) = (order[a], order[b]);
            s[(a, b)] = match (a < half, b < half) {
                _ if a == b => r * if a < half { nu } else { mu },
                (true, false) if graph.is_adjacent(i, j) => -mu,
                (false, true) if graph.is_adjacent(i, j) => -nu,
                _ => 0.0,
            };
        }
    }
    let x = omega.point(p);
    let jac = dynamics::jacobian(&model, &x)?;
    let mut relation_error: f64 = 0.0;
    for a in 0..m {
        for b in 0..m {
            let predicted = s[(a, b)] / r - if a == b { 1.0 } else { 0.0 };
            relation_error = relation_error.max((jac[(order[a], order[b])] - predicted).abs());
        }
    }

    let jf_eigs = eigenvalues(&jac);
    let s_eigs = eigenvalues(&s);
    let mut by_abs_re: Vec<f64> = jf_eigs.iter().map(|z| z.re.abs()).collect();
    by_abs_re.sort_by(f64::total_cmp);
    let zero_index = jf_eigs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(k, _)| k)
        .expect("nonempty spectrum");
    let second = by_abs_re.get(1).copied().unwrap_or(f64::INFINITY);
    let zero_is_simple = jf_eigs[zero_index].norm() <= 1e-8 && second >= 1e-6;
    let nonzero_have_negative_real_part = jf_eigs
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != zero_index)
        .all(|(_, z)| z.re < 0.0);
    let complex_real_parts_equal_half_degree = s_eigs
        .iter()
        .filter(|z| z.im.abs() > 1e-8)
        .all(|z| (z.re - r / 2.0).abs() <= 1e-8);
    let real: Vec<f64> = s_eigs
        .iter()
        .filter(|z| z.im.abs() <= 1e-8)
        .map(|z| z.re)
        .collect();
    let near_r = real.iter().filter(|&&v| (v - r).abs() <= 1e-6).count();
    let degree_is_largest_real_eigenvalue =
        near_r >= 1 && real.iter().all(|&v| v <= r + 1e-8);
    Ok(BipartiteSpectrumReport {
        p,
        q,
        mu,
        nu,
        degree: omega.degree,
        s_matrix: s,
        s_eigenvalues: s_eigs,
        jacobian_eigenvalues: jf_eigs,
        relation_error,
        second_smallest_abs_real: second,
        zero_is_simple,
        nonzero_have_negative_real_part,
        complex_real_parts_equal_half_degree,
        degree_is_largest_real_eigenvalue,
        degree_is_simple: near_r == 1,
    })
}

/// The unique interior equilibrium of the star on `m` vertices for `0 < alpha < 1`:
/// each leaf gets `1 / (m - 1 + (m - 1)^(1/(1-alpha)))`, the center the rest.
pub fn star_closed_form(m: usize, alpha: f64) -> Result<Vec<f64>, EquilibriaError> {
    if m < 3 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(EquilibriaError::ClosedFormDomain { m, alpha });
    }
    let leaves = (m - 1) as f64;
    let center = leaves.powf(1.0 / (1.0 - alpha));
    let denom = leaves + center;
    let mut x = vec![1.0 / denom; m];
    x[m - 1] = center / denom;
    Ok(x)
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
