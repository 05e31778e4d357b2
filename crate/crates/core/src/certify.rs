//! Dual certificates and relative KKT residues.
//!
//! For a factor `R` and a multiplier `lambda` the slack is
//! `S = L - Diag(lambda)`, and the residues are
//!
//! * `Rp`: row-norm violation `||diag(R R^T) - e|| / (1 + sqrt(n))`;
//! * `Rd`: `max(0, -lambda_min(J S J)) / (1 + ||L||_F)`;
//! * `Rc`: `|<S, R R^T>| / (1 + ||L||_F)`.
//!
//! With the spectral bound `||R||_2^2 <= alpha` the block of left singular
//! vectors at the bound is deflated out of `S` first.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph_io::Laplacian;
use crate::linalg::{center_vec, lanczos_min_eig, spectral_split, sym_eig, thin_svd};
use crate::scalar::Real;
use crate::variety::{TangentProjector, VarietyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error(transparent)]
    Variety(#[from] VarietyError),
    #[error("normal equations are ill-conditioned (condition {0:e})")]
    IllConditioned(f64),
}

/// Settings for the extreme-eigenvalue computations behind `Rd`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigSettings {
    fn default() -> Self {
        EigSettings { tol: 1e-9, max_iter: 20_000, seed: 0x5eed }
    }
}

#[derive(Debug, Clone)]
pub struct Certificate<T: Real> {
    /// Multiplier of the row-norm constraints.
    pub lambda: DVector<T>,
    /// Multiplier of `R^T e = 0`.
    pub mu: DVector<T>,
    pub rp: T,
    pub rd: T,
    pub rc: T,
    /// Smallest eigenvalue of the (deflated) centered slack.
    pub lambda_min: T,
    /// False when the eigensolver stopped early; `rd` then uses its best estimate.
    pub eig_converged: bool,
}

fn row_violation<T: Real>(r: &DMatrix<T>) -> T {
    let n = T::from_usize_lossy(r.nrows());
    let v = r.row_iter().fold(T::zero(), |acc, row| {
        let d = row.norm_squared() - T::one();
        acc + d * d
    });
    v.sqrt() / (T::one() + n.sqrt())
}

/// `S x = L x - lambda o x`.
fn slack_apply<T: Real>(lap: &Laplacian<T>, lambda: &DVector<T>, x: &DVector<T>) -> DVector<T> {
    lap.apply_vec(x).expect("shape") - lambda.component_mul(x)
}

fn slack_apply_mat<T: Real>(lap: &Laplacian<T>, lambda: &DVector<T>, x: &DMatrix<T>) -> DMatrix<T> {
    let mut y = lap.apply(x).expect("shape");
    for (i, mut row) in y.row_iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v -= lambda[i] * x[(i, j)];
        }
    }
    y
}

/// Multiplier of `R^T e = 0`: the column mean of `C - diag(lambda) R`.
fn column_multiplier<T: Real>(r: &DMatrix<T>, c: &DMatrix<T>, lambda: &DVector<T>) -> DVector<T> {
    let n = T::from_usize_lossy(r.nrows());
    let mut m = c.clone();
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            m[(i, j)] -= lambda[i] * r[(i, j)];
        }
    }
    m.row_sum().transpose() / n
}

/// Residues for a given row multiplier `lambda` (no spectral bound).
pub fn residues_with_multiplier<T: Real>(
    r: &DMatrix<T>,
    lap: &Laplacian<T>,
    lambda: &DVector<T>,
    eig: &EigSettings,
) -> Certificate<T> {
    let scale = T::one() + lap.frobenius_norm();
    let n = lap.n();
    let op = |x: &DVector<T>| center_vec(&slack_apply(lap, lambda, &center_vec(x)));
    let (lambda_min, eig_converged) = min_eig(op, n, eig);
    let sr = slack_apply_mat(lap, lambda, r);
    let rc = r.dot(&sr).abs() / scale;
    let lr = lap.apply(r).expect("shape");
    Certificate {
        mu: column_multiplier(r, &lr, lambda),
        lambda: lambda.clone(),
        rp: row_violation(r),
        rd: (-lambda_min).max(T::zero()) / scale,
        rc,
        lambda_min,
        eig_converged,
    }
}

fn min_eig<T: Real, F: FnMut(&DVector<T>) -> DVector<T>>(op: F, n: usize, eig: &EigSettings) -> (T, bool) {
    match lanczos_min_eig(op, n, T::lit(eig.tol), eig.max_iter, eig.seed) {
        Ok(r) => (r.value, true),
        Err(e) => (e.best().map_or(T::zero(), |b| b.value), false),
    }
}

/// Residues of the bisection SDP at a smooth factor, using `lambda = lambda^R_{LR}`.
pub fn residues_bisection<T: Real>(
    r: &DMatrix<T>,
    lap: &Laplacian<T>,
    eig: &EigSettings,
) -> Result<Certificate<T>, CertifyError> {
    let proj = TangentProjector::from_matrix(r)?;
    let lr = lap.apply(r).expect("shape");
    let lambda = proj.lambda(&lr);
    Ok(residues_with_multiplier(r, lap, &lambda, eig))
}

/// Residues of the equipartition SDP with spectral bound `alpha`.
///
/// `lambda = lambda^R_{LR - 2RZ}`; the block `U1` of left singular vectors
/// with `s^2 >= alpha (1 - tau_alpha)` is deflated from the slack.
pub fn residues_equipartition<T: Real>(
    r: &DMatrix<T>,
    z: &DMatrix<T>,
    lap: &Laplacian<T>,
    alpha: T,
    tau_alpha: T,
    eig: &EigSettings,
) -> Result<Certificate<T>, CertifyError> {
    let proj = TangentProjector::from_matrix(r)?;
    let lr = lap.apply(r).expect("shape");
    let c = &lr - (r * z) * T::lit(2.0);
    let lambda = proj.lambda(&c);
    let scale = T::one() + lap.frobenius_norm();
    let n = lap.n();

    let svd = thin_svd(r).map_err(|_| VarietyError::NonFinite)?;
    let split = spectral_split(&svd, alpha, tau_alpha);
    let u1 = split.u1;
    let su1 = slack_apply_mat(lap, &lambda, &u1);
    let m1 = u1.tr_mul(&su1);
    let m1 = (&m1 + m1.transpose()) * T::lit(0.5);
    let top = if m1.nrows() > 0 { sym_eig(&m1).0.max() } else { T::zero() };

    let deflated = |x: &DVector<T>| {
        let jx = center_vec(x);
        let mut y = slack_apply(lap, &lambda, &jx);
        if u1.ncols() > 0 {
            let c = &m1 * u1.tr_mul(&jx);
            y -= &u1 * c;
        }
        center_vec(&y)
    };
    let (lambda_min, eig_converged) = min_eig(deflated, n, eig);

    let rrt_sr = r.dot(&slack_apply_mat(lap, &lambda, r));
    let u1r = u1.tr_mul(r);
    let defl = (&m1 * &u1r).dot(&u1r);
    let rc = (rrt_sr - defl).abs() / scale;
    let rp = row_violation(r).max(svd.spectral_norm() - alpha.sqrt());
    let rd = top.max((-lambda_min).max(T::zero())) / scale;
    Ok(Certificate {
        mu: column_multiplier(r, &c, &lambda),
        lambda,
        rp,
        rd: rd.max(T::zero()),
        rc,
        lambda_min,
        eig_converged,
    })
}

/// Least-squares multipliers `(y, z)` with `diag(y) R + e z^T` closest to `M = C_eff + Theta`.
///
/// Solves `[[I, R], [R^T, n I]] (y; z) = (diag(R M^T); M^T e)` through the
/// `r x r` Schur complement `n I - R^T R`.
pub fn recover_duals<T: Real>(
    r: &DMatrix<T>,
    theta: &DMatrix<T>,
    c_eff: &DMatrix<T>,
) -> Result<(DVector<T>, DVector<T>), CertifyError> {
    let n = r.nrows();
    let k = r.ncols();
    let m = c_eff + theta;
    let b1 = DVector::from_fn(n, |i, _| r.row(i).dot(&m.row(i)));
    let b2 = m.row_sum().transpose();
    let schur = DMatrix::identity(k, k) * T::from_usize_lossy(n) - r.tr_mul(r);
    let (vals, q) = sym_eig(&schur);
    let lo = vals.min();
    let hi = vals.max();
    if lo <= T::zero() || hi / lo > T::lit(1e12) {
        let cond = if lo <= T::zero() { f64::INFINITY } else { (hi / lo).as_f64() };
        return Err(CertifyError::IllConditioned(cond));
    }
    let rhs = b2 - r.tr_mul(&b1);
    let z = &q * q.tr_mul(&rhs).component_div(&vals);
    let y = b1 - r * &z;
    Ok((y, z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Bisect,
    Equipart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Relative gradient below tolerance at a smooth point.
    Converged,
    /// Stopped at a singular point shown optimal by the escape certificate.
    CertifiedSingular,
    MaxIterations,
    LineSearchFailed,
    /// A near-singular point could not be rounded, certified or escaped.
    NearSingular,
    /// More singular-point events than the configured limit.
    EventLimit,
    /// The augmented Lagrangian made no progress.
    Stalled,
}

impl Termination {
    pub fn is_success(self) -> bool {
        matches!(self, Termination::Converged | Termination::CertifiedSingular)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankDrop {
    pub iteration: usize,
    pub from: usize,
    pub to: usize,
}

/// Summary of one solve. Floating-point fields are `f64` regardless of the
/// scalar type used internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub kind: ProblemKind,
    pub n: usize,
    pub k: usize,
    pub r_initial: usize,
    pub r_final: usize,
    /// `<L, R R^T>`.
    pub obj: f64,
    /// `1/2 <L, R R^T>`.
    pub f: f64,
    pub rp: Option<f64>,
    pub rd: Option<f64>,
    pub rc: Option<f64>,
    pub eig_converged: bool,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub singular_events: usize,
    pub escapes: usize,
    pub rank_drops: Vec<RankDrop>,
    pub termination: Termination,
    /// Final penalty parameter and feasibility measures (equipartition only).
    pub beta: Option<f64>,
    pub pfeas: Option<f64>,
    pub dfeas: Option<f64>,
    pub seed: u64,
    pub wall_time_secs: f64,
}

impl SolveReport {
    /// Residues all finite and within `tol` (`Rd` within `10 tol`).
    pub fn residues_within(&self, tol: f64) -> bool {
        match (self.rp, self.rd, self.rc) {
            (Some(rp), Some(rd), Some(rc)) => rp <= tol && rc <= tol && rd <= 10.0 * tol,
            _ => false,
        }
    }
}
