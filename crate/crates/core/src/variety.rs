//! Geometry of `B(n,r) = { R : diag(R R^T) = e, R^T e = 0 }`.
//!
//! Smooth points are those of rank at least two; the rank-one points
//! `a b^T` with `a` a balanced sign vector are singular. The metric
//! projection onto `B(n,r)` is computed from the geometric median `b` of the
//! rows of `Y`: when `b` is not one of the rows, the projection is
//! `normalize_rows(Y - e b^T)`; when it is, no nearest point of that form
//! exists and the caller shortens its step.

use std::cell::OnceCell;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{sym_eig, thin_svd, ThinSvd};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VarietyError {
    #[error("point is not feasible (row error {row_err:e}, column-sum error {col_err:e})")]
    Infeasible { row_err: f64, col_err: f64 },
    #[error("base point is near-singular (condition {cond:e})")]
    NearSingular { cond: f64 },
    #[error("row {row} is numerically zero")]
    ZeroRow { row: usize },
    #[error("geometric median sits on row {vertex}: no projection of this form")]
    EmptyFiber { vertex: usize },
    #[error("geometric median did not converge (gradient {grad:e})")]
    MedianNotConverged { grad: f64 },
    #[error("retraction failed after {0} backtracks")]
    BacktrackExhausted(usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("shape mismatch")]
    Shape,
}

/// Maximum row-norm error and maximum absolute column sum.
pub fn feasibility_residuals<T: Real>(r: &DMatrix<T>) -> (T, T) {
    let row = r
        .row_iter()
        .map(|row| (row.norm_squared() - T::one()).abs())
        .fold(T::zero(), |a, b| a.max(b));
    (row, r.row_sum().amax())
}

/// A factor `R` on `B(n,r)` with a lazily computed thin SVD.
#[derive(Debug, Clone)]
pub struct VarietyPoint<T: Real> {
    r: DMatrix<T>,
    svd: OnceCell<ThinSvd<T>>,
}

impl<T: Real> VarietyPoint<T> {
    /// Wrap `r` after checking feasibility to `T::FEAS_TOL`.
    pub fn new(r: DMatrix<T>) -> Result<Self, VarietyError> {
        if r.iter().any(|v| !v.is_finite_val()) {
            return Err(VarietyError::NonFinite);
        }
        let (row_err, col_err) = feasibility_residuals(&r);
        let tol = T::lit(T::FEAS_TOL);
        let n = T::from_usize_lossy(r.nrows());
        if row_err > tol || col_err > tol * n.sqrt() {
            return Err(VarietyError::Infeasible { row_err: row_err.as_f64(), col_err: col_err.as_f64() });
        }
        Ok(Self::new_unchecked(r))
    }

    /// Wrap `r` without checking; the caller vouches for feasibility.
    pub fn new_unchecked(r: DMatrix<T>) -> Self {
        VarietyPoint { r, svd: OnceCell::new() }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.r
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.r
    }

    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    pub fn rank_bound(&self) -> usize {
        self.r.ncols()
    }

    pub fn svd(&self) -> &ThinSvd<T> {
        self.svd.get_or_init(|| thin_svd(&self.r).expect("feasible point has finite entries"))
    }

    pub fn spectral_norm(&self) -> T {
        self.svd().spectral_norm()
    }

    pub fn residuals(&self) -> (T, T) {
        feasibility_residuals(&self.r)
    }
}

/// `||R||_2^2 >= (1 - delta) n`, i.e. the point lies in the singular neighbourhood.
pub fn is_singular<T: Real>(p: &VarietyPoint<T>, delta: T) -> bool {
    let n = T::from_usize_lossy(p.n());
    let s = p.spectral_norm();
    s * s >= (T::one() - delta) * n * (T::one() - T::default_epsilon() * T::lit(16.0))
}

/// A tangent direction, stored as a dense `n x r` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector<T: Real>(pub DMatrix<T>);

impl<T: Real> TangentVector<T> {
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.0
    }

    pub fn norm(&self) -> T {
        self.0.norm()
    }

    pub fn dot(&self, other: &TangentVector<T>) -> T {
        self.0.dot(&other.0)
    }
}

/// Condition number beyond which a base is treated as near-singular.
const MAX_COND: f64 = 1e10;

/// Orthogonal projector onto the tangent space at a smooth point.
///
/// Holds the eigendecomposition of `I - R^T R / n` so that several
/// projections at the same base share one factorization.
pub struct TangentProjector<'a, T: Real> {
    r: &'a DMatrix<T>,
    q: DMatrix<T>,
    inv: DVector<T>,
}

impl<'a, T: Real> TangentProjector<'a, T> {
    pub fn new(base: &'a VarietyPoint<T>) -> Result<Self, VarietyError> {
        Self::from_matrix(base.matrix())
    }

    pub fn from_matrix(r: &'a DMatrix<T>) -> Result<Self, VarietyError> {
        let n = T::from_usize_lossy(r.nrows());
        let k = r.ncols();
        let m = DMatrix::identity(k, k) - r.tr_mul(r) / n;
        let (vals, q) = sym_eig(&m);
        let hi = vals.max().max(T::zero());
        let lo = vals.min();
        if lo <= T::zero() || hi / lo > T::lit(MAX_COND) {
            let cond = if lo <= T::zero() { f64::INFINITY } else { (hi / lo).as_f64() };
            return Err(VarietyError::NearSingular { cond });
        }
        let inv = vals.map(|v| T::one() / v);
        Ok(TangentProjector { r, q, inv })
    }

    fn solve(&self, rhs: &DVector<T>) -> DVector<T> {
        let t = self.q.tr_mul(rhs).component_mul(&self.inv);
        &self.q * t
    }

    /// Multiplier `lambda` for the row-norm constraints in the projection of `c`.
    pub fn lambda(&self, c: &DMatrix<T>) -> DVector<T> {
        let n = T::from_usize_lossy(self.r.nrows());
        let jc = crate::linalg::center_apply(c);
        let d = DVector::from_fn(self.r.nrows(), |i, _| jc.row(i).dot(&self.r.row(i)));
        let z = self.solve(&self.r.tr_mul(&d));
        d + (self.r * z) / n
    }

    /// `J (C - diag(lambda) R)`, the nearest tangent vector to `c`.
    pub fn project(&self, c: &DMatrix<T>) -> TangentVector<T> {
        let lambda = self.lambda(c);
        TangentVector(project_with_lambda(self.r, c, &lambda))
    }
}

/// `J (C - diag(lambda) R)`.
pub fn project_with_lambda<T: Real>(r: &DMatrix<T>, c: &DMatrix<T>, lambda: &DVector<T>) -> DMatrix<T> {
    let mut h = c.clone();
    for i in 0..r.nrows() {
        let li = lambda[i];
        for j in 0..r.ncols() {
            h[(i, j)] -= li * r[(i, j)];
        }
    }
    crate::linalg::center_apply(&h)
}

pub fn project_tangent<T: Real>(base: &VarietyPoint<T>, c: &DMatrix<T>) -> Result<TangentVector<T>, VarietyError> {
    Ok(TangentProjector::new(base)?.project(c))
}

/// Riemannian gradient of a function with Euclidean gradient `euclid_grad`.
pub fn riemannian_gradient<T: Real>(
    base: &VarietyPoint<T>,
    euclid_grad: &DMatrix<T>,
) -> Result<TangentVector<T>, VarietyError> {
    project_tangent(base, euclid_grad)
}

pub fn normalize_rows<T: Real>(y: &DMatrix<T>) -> Result<DMatrix<T>, VarietyError> {
    let mut out = y.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let nrm = row.norm();
        if !(nrm >= T::lit(T::TINY)) {
            return Err(VarietyError::ZeroRow { row: i });
        }
        row /= nrm;
    }
    Ok(out)
}

/// Result of [`geometric_median`].
#[derive(Debug, Clone)]
pub struct Median<T: Real> {
    pub point: DVector<T>,
    /// Index of the data row the median coincides with, if any.
    pub vertex: Option<usize>,
    pub converged: bool,
    pub iterations: usize,
    /// Norm of the first-order residual at `point` (zero when `vertex` is set).
    pub grad_norm: T,
}

impl<T: Real> Median<T> {
    pub fn at_vertex(&self) -> bool {
        self.vertex.is_some()
    }
}

/// Default stopping tolerance for the median of the rows of `y`.
pub fn median_tolerance<T: Real>(y: &DMatrix<T>) -> T {
    let n = T::from_usize_lossy(y.nrows());
    let mean_norm = y.row_iter().fold(T::zero(), |a, r| a + r.norm()) / n;
    let base = if T::FEAS_TOL < 1e-6 { 1e-12 } else { 1e-6 };
    T::lit(base) * (T::one() + mean_norm)
}

struct MedianEval<T: Real> {
    dist: Vec<T>,
    value: T,
    nearest: usize,
}

fn eval_median<T: Real>(y: &DMatrix<T>, b: &DVector<T>) -> MedianEval<T> {
    let mut dist = Vec::with_capacity(y.nrows());
    let mut value = T::zero();
    let mut nearest = 0;
    for (i, row) in y.row_iter().enumerate() {
        let d = row
            .iter()
            .zip(b.iter())
            .fold(T::zero(), |a, (x, c)| a + (*x - *c) * (*x - *c))
            .sqrt();
        if d < dist.get(nearest).copied().unwrap_or(d + T::one()) {
            nearest = i;
        }
        value += d;
        dist.push(d);
    }
    MedianEval { dist, value, nearest }
}

/// Whether row `k` of `y` is a geometric median: the pull of the other rows
/// does not exceed the multiplicity of `y_k`.
fn vertex_is_median<T: Real>(y: &DMatrix<T>, k: usize, same: T) -> bool {
    let yk = y.row(k);
    let mut pull = DVector::<T>::zeros(y.ncols());
    let mut mult = T::zero();
    for (j, row) in y.row_iter().enumerate() {
        let diff = (yk - row).transpose();
        let d = diff.norm();
        if j == k || d <= same {
            mult += T::one();
        } else {
            pull += diff / d;
        }
    }
    pull.norm() <= mult
}

/// Weiszfeld iteration with Newton polishing and a decisive vertex test.
///
/// Starts from the row mean. At every iterate the nearest data row is
/// tested with the vertex criterion, so a median lying on a row is reported
/// as such instead of being approached slowly.
pub fn geometric_median<T: Real>(y: &DMatrix<T>, tol: T, max_iter: usize) -> Median<T> {
    let (n, k) = y.shape();
    let scale = T::one() + y.amax();
    let same = T::lit(1e-14) * scale;
    let mut b = DVector::from_fn(k, |j, _| y.column(j).sum()) / T::from_usize_lossy(n);

    let mut ev = eval_median(y, &b);
    if ev.dist[ev.nearest] <= T::lit(1e-12) * scale {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6d656469616e);
        let mut dir = DVector::from_fn(k, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(z)
        });
        dir.normalize_mut();
        b += dir * (T::lit(1e-8) * scale);
        ev = eval_median(y, &b);
    }

    let mut grad_norm = T::max_value().unwrap_or(T::lit(f64::MAX));
    for it in 0..max_iter {
        let k_near = ev.nearest;
        if vertex_is_median(y, k_near, same) {
            return Median {
                point: y.row(k_near).transpose(),
                vertex: Some(k_near),
                converged: true,
                iterations: it,
                grad_norm: T::zero(),
            };
        }

        // Gradient and weights over rows not coinciding with b.
        let mut grad = DVector::<T>::zeros(k);
        let mut wsum = T::zero();
        let mut wy = DVector::<T>::zeros(k);
        let mut coincide = T::zero();
        for (i, row) in y.row_iter().enumerate() {
            let d = ev.dist[i];
            if d <= same {
                coincide += T::one();
                continue;
            }
            let w = T::one() / d;
            let rt = row.transpose();
            grad += (&b - &rt) * w;
            wy += rt * w;
            wsum += w;
        }
        grad_norm = grad.norm();
        if coincide == T::zero() && grad_norm <= tol {
            return Median { point: b, vertex: None, converged: true, iterations: it, grad_norm };
        }

        let weiszfeld = &wy / wsum;
        let mut next = if coincide > T::zero() {
            // Vardi-Zhang step off a data row that is not a median.
            let eta = (coincide / grad_norm).min(T::one());
            &weiszfeld * (T::one() - eta) + &b * eta
        } else {
            weiszfeld
        };
        if coincide == T::zero() {
            if let Some(step) = newton_step(y, &b, &ev.dist, &grad) {
                let trial = &b + step;
                let tev = eval_median(y, &trial);
                if tev.value <= ev.value * (T::one() + T::default_epsilon() * T::lit(4.0)) {
                    b = trial;
                    ev = tev;
                    continue;
                }
            }
        }
        std::mem::swap(&mut b, &mut next);
        ev = eval_median(y, &b);
    }
    Median { point: b, vertex: None, converged: false, iterations: max_iter, grad_norm }
}

fn newton_step<T: Real>(y: &DMatrix<T>, b: &DVector<T>, dist: &[T], grad: &DVector<T>) -> Option<DVector<T>> {
    let k = y.ncols();
    let mut h = DMatrix::<T>::zeros(k, k);
    for (i, row) in y.row_iter().enumerate() {
        let d = dist[i];
        let u = (b - row.transpose()) / d;
        let w = T::one() / d;
        for p in 0..k {
            h[(p, p)] += w;
            for q in 0..k {
                h[(p, q)] -= w * u[p] * u[q];
            }
        }
    }
    let chol = h.cholesky()?;
    let step = -chol.solve(grad);
    step.iter().all(|v| v.is_finite_val()).then_some(step)
}

/// Metric projection of `y` onto `B(n,r)` through the geometric median.
pub fn project_onto_variety<T: Real>(y: &DMatrix<T>) -> Result<VarietyPoint<T>, VarietyError> {
    if y.iter().any(|v| !v.is_finite_val()) {
        return Err(VarietyError::NonFinite);
    }
    let tol = median_tolerance(y);
    let med = geometric_median(y, tol, 500);
    if let Some(vertex) = med.vertex {
        return Err(VarietyError::EmptyFiber { vertex });
    }
    let mut shifted = y.clone();
    for mut row in shifted.row_iter_mut() {
        row -= med.point.transpose();
    }
    let r = normalize_rows(&shifted)?;
    let col = r.row_sum().amax();
    let n = T::from_usize_lossy(y.nrows());
    if !med.converged && col > T::lit(T::FEAS_TOL) * n.sqrt() {
        return Err(VarietyError::MedianNotConverged { grad: med.grad_norm.as_f64() });
    }
    VarietyPoint::new(r)
}

/// Outcome of [`retract`].
#[derive(Debug, Clone)]
pub struct Retraction<T: Real> {
    pub point: VarietyPoint<T>,
    pub backtracks: usize,
    /// Multiplier finally applied to the direction.
    pub step: T,
}

/// `Proj_B(R + H)`, dividing `H` by `sigma` while the projection does not exist.
pub fn retract<T: Real>(
    base: &VarietyPoint<T>,
    h: &DMatrix<T>,
    sigma: T,
    max_backtracks: usize,
) -> Result<Retraction<T>, VarietyError> {
    if h.shape() != base.matrix().shape() {
        return Err(VarietyError::Shape);
    }
    let mut step = T::one();
    for backtracks in 0..=max_backtracks {
        let y = base.matrix() + h * step;
        match project_onto_variety(&y) {
            Ok(point) => return Ok(Retraction { point, backtracks, step }),
            Err(VarietyError::EmptyFiber { .. })
            | Err(VarietyError::ZeroRow { .. })
            | Err(VarietyError::MedianNotConverged { .. }) => step /= sigma,
            Err(e) => return Err(e),
        }
    }
    Err(VarietyError::BacktrackExhausted(max_backtracks))
}

/// A balanced sign vector `a`, standing for the singular point `a e_1^T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingularPoint {
    signs: Vec<i8>,
}

impl SingularPoint {
    /// Accepts `signs` when every entry is `+-1` and they sum to zero.
    pub fn new(signs: Vec<i8>) -> Option<SingularPoint> {
        let ok = signs.iter().all(|s| *s == 1 || *s == -1) && signs.iter().map(|s| *s as i64).sum::<i64>() == 0;
        (ok && !signs.is_empty()).then_some(SingularPoint { signs })
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn n(&self) -> usize {
        self.signs.len()
    }

    pub fn vector<T: Real>(&self) -> DVector<T> {
        DVector::from_iterator(self.n(), self.signs.iter().map(|s| T::lit(*s as f64)))
    }

    /// The factor `a e_1^T` with `r` columns.
    pub fn factor<T: Real>(&self, r: usize) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n(), r);
        for (i, s) in self.signs.iter().enumerate() {
            m[(i, 0)] = T::lit(*s as f64);
        }
        m
    }

    /// Cut value `<L, a a^T> = sum_edges w (a_i - a_j)^2`.
    pub fn cut_value(&self, g: &crate::graph_io::Graph) -> f64 {
        g.edges()
            .iter()
            .map(|e| {
                let d = (self.signs[e.i] - self.signs[e.j]) as f64;
                e.w * d * d
            })
            .sum()
    }
}

/// `sgn(u) e_1^T` for the top left singular vector `u`, if it is balanced.
///
/// The sign of `u` is fixed by making its first nonzero entry positive.
pub fn round_to_singular<T: Real>(p: &VarietyPoint<T>) -> Option<SingularPoint> {
    let n = p.n();
    if n % 2 == 1 {
        return None;
    }
    let svd = p.svd();
    let u = svd.u.column(0);
    let flip = u.iter().find(|v| **v != T::zero()).is_some_and(|v| *v < T::zero());
    let mut signs = Vec::with_capacity(n);
    for v in u.iter() {
        if *v == T::zero() {
            return None;
        }
        let s = if *v > T::zero() { 1 } else { -1 };
        signs.push(if flip { -s } else { s });
    }
    SingularPoint::new(signs)
}

/// Membership of `H` in the tangent cone at `a e_1^T`: zero first column,
/// `e^T H_1 = 0` and `a^T diag(H_1 H_1^T) = 0`.
pub fn tangent_cone_member<T: Real>(a: &SingularPoint, h: &DMatrix<T>, tol: T) -> bool {
    if h.nrows() != a.n() || h.ncols() < 2 {
        return false;
    }
    let av = a.vector::<T>();
    let h1 = h.columns(1, h.ncols() - 1);
    let quad = (0..a.n()).fold(T::zero(), |acc, i| acc + av[i] * h1.row(i).norm_squared());
    h.column(0).amax() <= tol && h1.row_sum().amax() <= tol && quad.abs() <= tol
}

/// Membership of `W` in the second-order tangent set at `a e_1^T` along `H`.
pub fn second_tangent_member<T: Real>(a: &SingularPoint, h: &DMatrix<T>, w: &DMatrix<T>, tol: T) -> bool {
    if w.shape() != h.shape() || !tangent_cone_member(a, h, tol) {
        return false;
    }
    let n = a.n();
    let av = a.vector::<T>();
    let h1 = h.columns(1, h.ncols() - 1);
    let w1 = w.columns(1, w.ncols() - 1);
    let first_ok = (0..n).all(|i| (w[(i, 0)] + av[i] * h1.row(i).norm_squared()).abs() <= tol);
    if !first_ok || w1.row_sum().amax() > tol {
        return false;
    }
    // H_1 = a lambda^T exactly when it equals its projection onto that family.
    let lambda = h1.tr_mul(&av) / T::from_usize_lossy(n);
    let along_a = (h1 - &av * lambda.transpose()).norm() <= tol;
    let cross = if along_a {
        (0..n).fold(T::zero(), |acc, i| acc + av[i] * w1.row(i).norm_squared())
    } else {
        (0..n).fold(T::zero(), |acc, i| acc + av[i] * h1.row(i).dot(&w1.row(i)))
    };
    cross.abs() <= tol
}

/// Standard-normal `n x r` matrix from `rng`.
pub fn random_matrix<T: Real, R: rand::Rng>(n: usize, r: usize, rng: &mut R) -> DMatrix<T> {
    DMatrix::from_fn(n, r, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        T::lit(z)
    })
}

/// Random feasible point: a Gaussian draw projected onto `B(n,r)`.
pub fn random_point<T: Real>(n: usize, r: usize, seed: u64) -> Result<VarietyPoint<T>, VarietyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = VarietyError::BacktrackExhausted(0);
    for _ in 0..10 {
        match project_onto_variety(&random_matrix::<T, _>(n, r, &mut rng)) {
            Ok(p) => return Ok(p),
            Err(e) => last = e,
        }
    }
    Err(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inner;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Dense least-squares projection onto `{H : H^T e = 0, diag(H R^T) = 0}`.
    fn dense_projection(r: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, k) = r.shape();
        let mut a = DMatrix::zeros(k + n, n * k);
        for j in 0..k {
            for i in 0..n {
                a[(j, i + n * j)] = 1.0;
            }
        }
        for i in 0..n {
            for j in 0..k {
                a[(k + i, i + n * j)] = r[(i, j)];
            }
        }
        let cv = DVector::from_column_slice(c.as_slice());
        let aat = &a * a.transpose();
        let y = aat.cholesky().expect("constraints independent").solve(&(&a * &cv));
        let h = cv - a.transpose() * y;
        DMatrix::from_column_slice(n, k, h.as_slice())
    }

    #[test]
    fn projection_matches_dense_kkt() {
        let mut g = rng(1);
        let p = random_point::<f64>(20, 5, 7).unwrap();
        let c = random_matrix::<f64, _>(20, 5, &mut g);
        let h = project_tangent(&p, &c).unwrap();
        assert!((h.matrix() - dense_projection(p.matrix(), &c)).amax() < 1e-10);
        assert!(project_tangent(&p, &DMatrix::zeros(20, 5)).unwrap().norm() == 0.0);
        assert!(project_tangent(&p, p.matrix()).unwrap().norm() < 1e-10);
    }

    #[test]
    fn projection_idempotent_and_self_adjoint() {
        let mut g = rng(2);
        let p = random_point::<f64>(15, 4, 3).unwrap();
        let proj = TangentProjector::new(&p).unwrap();
        let c1 = random_matrix::<f64, _>(15, 4, &mut g);
        let c2 = random_matrix::<f64, _>(15, 4, &mut g);
        let h1 = proj.project(&c1);
        assert!((proj.project(h1.matrix()).0 - h1.matrix()).amax() < 1e-12);
        let h2 = proj.project(&c2);
        assert!((inner(h1.matrix(), &c2) - inner(&c1, h2.matrix())).abs() < 1e-10);
        assert!(h1.matrix().row_sum().amax() < 1e-12);
        let diag = (0..15).map(|i| h1.matrix().row(i).dot(&p.matrix().row(i)).abs()).fold(0.0, f64::max);
        assert!(diag < 1e-12);
    }

    #[test]
    fn singular_base_is_rejected() {
        let a = SingularPoint::new(vec![1, -1, 1, -1]).unwrap();
        let p = VarietyPoint::new(a.factor::<f64>(3)).unwrap();
        assert!(matches!(project_tangent(&p, p.matrix()), Err(VarietyError::NearSingular { .. })));
    }

    #[test]
    fn singularity_test() {
        let a = SingularPoint::new(vec![1, 1, -1, -1, 1, -1]).unwrap();
        let p = VarietyPoint::new(a.factor::<f64>(2)).unwrap();
        assert!(is_singular(&p, 1e-9));
        // Rows alternating between two orthogonal directions: ||R||_2^2 = n/2.
        let r = DMatrix::from_row_slice(4, 2, &[1., 0., 0., 1., -1., 0., 0., -1.]);
        let p = VarietyPoint::new(r).unwrap();
        assert!(!is_singular(&p, 0.02));
        assert!(is_singular(&p, 0.5));
    }

    #[test]
    fn normalize() {
        let p = random_point::<f64>(10, 3, 1).unwrap();
        assert!((normalize_rows(p.matrix()).unwrap() - p.matrix()).amax() < 1e-15);
        assert!((normalize_rows(&(p.matrix() * 2.0)).unwrap() - p.matrix()).amax() < 1e-15);
        let y = random_matrix::<f64, _>(8, 3, &mut rng(4));
        let z = normalize_rows(&y).unwrap();
        assert!(z.row_iter().all(|r| (r.norm() - 1.0).abs() < 1e-14));
        let mut y = y;
        y.row_mut(2).fill(0.0);
        assert_eq!(normalize_rows(&y).unwrap_err(), VarietyError::ZeroRow { row: 2 });
    }

    #[test]
    fn median_symmetric_cross() {
        let y = DMatrix::from_row_slice(4, 2, &[1., 0., -1., 0., 0., 1., 0., -1.]);
        let m = geometric_median(&y, 1e-12, 500);
        assert!(!m.at_vertex());
        assert!(m.point.amax() < 1e-12);
    }

    fn example_rows(eps: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(4, 2, &[0., 1., 0., 1. - eps / 2., 0., -1., -eps / 2., -1. + eps / 2.])
    }

    #[test]
    fn median_on_vertex_example() {
        let eps = 0.1;
        let m = geometric_median(&example_rows(eps), 1e-12, 500);
        assert_eq!(m.vertex, Some(1));
        assert!((m.point[0]).abs() < 1e-15 && (m.point[1] - (1.0 - eps / 2.0)).abs() < 1e-15);
        assert!(matches!(project_onto_variety(&example_rows(eps)), Err(VarietyError::EmptyFiber { vertex: 1 })));
    }

    #[test]
    fn median_matches_grid_search() {
        let mut g = rng(5);
        let y = random_matrix::<f64, _>(7, 3, &mut g);
        let m = geometric_median(&y, 1e-12, 500);
        let obj = |b: &DVector<f64>| y.row_iter().map(|r| (r.transpose() - b).norm()).sum::<f64>();
        // Coarse grid then coordinate refinement.
        let mut best = DVector::zeros(3);
        let mut fbest = f64::INFINITY;
        for i in -10..=10 {
            for j in -10..=10 {
                for k in -10..=10 {
                    let b = DVector::from_vec(vec![i as f64, j as f64, k as f64]) * 0.2;
                    let f = obj(&b);
                    if f < fbest {
                        fbest = f;
                        best = b;
                    }
                }
            }
        }
        let mut h = 0.1;
        while h > 1e-9 {
            let mut moved = false;
            for d in 0..3 {
                for s in [-1.0, 1.0] {
                    let mut b = best.clone();
                    b[d] += s * h;
                    let f = obj(&b);
                    if f < fbest {
                        fbest = f;
                        best = b;
                        moved = true;
                    }
                }
            }
            if !moved {
                h /= 2.0;
            }
        }
        assert!((m.point - best).norm() < 1e-6);
    }

    #[test]
    fn retract_zero_step_and_feasibility() {
        let p = random_point::<f64>(20, 5, 9).unwrap();
        let out = retract(&p, &DMatrix::zeros(20, 5), 2.0, 30).unwrap();
        assert!((out.point.matrix() - p.matrix()).amax() < 1e-12);
        let mut g = rng(6);
        let h = project_tangent(&p, &random_matrix(20, 5, &mut g)).unwrap().into_matrix() * 0.3;
        let out = retract(&p, &h, 2.0, 30).unwrap();
        let (row, col) = out.point.residuals();
        assert!(row < 1e-10 && col < 1e-10);
    }

    #[test]
    fn retraction_is_first_order() {
        let p = random_point::<f64>(12, 4, 2).unwrap();
        let h = project_tangent(&p, &random_matrix(12, 4, &mut rng(8))).unwrap().into_matrix();
        let h = &h / h.norm();
        let mut ratios = Vec::new();
        for t in [1e-1, 1e-2, 1e-3, 1e-4] {
            let y = p.matrix() + &h * t;
            let q = retract(&p, &(&h * t), 2.0, 0).unwrap();
            ratios.push((q.point.matrix() - y).norm() / t);
        }
        for w in ratios.windows(2) {
            assert!(w[1] < 0.2 * w[0], "{ratios:?}");
        }
    }

    #[test]
    fn rounding() {
        let a = SingularPoint::new(vec![1, -1, -1, 1, 1, -1, 1, -1]).unwrap();
        let p = VarietyPoint::new(a.factor::<f64>(3)).unwrap();
        assert_eq!(round_to_singular(&p), Some(a.clone()));
        let flipped = VarietyPoint::new(-a.factor::<f64>(3)).unwrap();
        assert_eq!(round_to_singular(&flipped), Some(a));
        let odd = random_point::<f64>(7, 3, 1).unwrap();
        assert_eq!(round_to_singular(&odd), None);
        assert!(SingularPoint::new(vec![1, 1, -1]).is_none());
        assert!(SingularPoint::new(vec![1, 0, -1, 0]).is_none());
    }

    #[test]
    fn rounding_recovers_perturbed_sign_vector() {
        let a = SingularPoint::new(vec![1, 1, -1, 1, -1, -1, 1, -1]).unwrap();
        let mut g = rng(10);
        let mut h = random_matrix::<f64, _>(8, 3, &mut g);
        h.column_mut(0).fill(0.0);
        let h = crate::linalg::center_apply(&h);
        let y = a.factor::<f64>(3) + h * 1e-4;
        let p = project_onto_variety(&y).unwrap();
        assert_eq!(round_to_singular(&p), Some(a.clone()));
        let n = 8.0;
        let s = p.spectral_norm();
        let delta = 1.0 - s * s / n;
        let ra = a.factor::<f64>(3);
        let gap = (&ra * ra.transpose() - p.matrix() * p.matrix().transpose()).norm();
        assert!(gap <= 2.0 * delta.sqrt() * n);
    }

    #[test]
    fn cone_membership() {
        let a = SingularPoint::new(vec![1, -1, 1, -1]).unwrap();
        let av = a.vector::<f64>();
        let lam = [0.3, -0.7];
        let mut h = DMatrix::zeros(4, 3);
        for i in 0..4 {
            h[(i, 1)] = av[i] * lam[0];
            h[(i, 2)] = av[i] * lam[1];
        }
        assert!(tangent_cone_member(&a, &h, 1e-12));
        let mut bad = h.clone();
        bad[(0, 0)] = 0.1;
        assert!(!tangent_cone_member(&a, &bad, 1e-12));

        let mut w = DMatrix::zeros(4, 3);
        for i in 0..4 {
            w[(i, 0)] = -av[i] * h.row(i).norm_squared();
        }
        assert!(second_tangent_member(&a, &h, &w, 1e-12));
        // Case H_1 = a lambda^T needs a^T diag(W_1 W_1^T) = 0.
        let mut w_bad = w.clone();
        w_bad[(0, 1)] = 1.0;
        w_bad[(2, 1)] = -1.0;
        assert!(!second_tangent_member(&a, &h, &w_bad, 1e-12));
    }

    #[test]
    fn f32_projection_smoke() {
        let p = random_point::<f32>(16, 4, 1).unwrap();
        let (row, col) = p.residuals();
        assert!(row < 1e-5 && col < 1e-4);
        let h = project_tangent(&p, &random_matrix(16, 4, &mut rng(1))).unwrap();
        assert!(h.matrix().row_sum().amax() < 1e-4);
    }
}
