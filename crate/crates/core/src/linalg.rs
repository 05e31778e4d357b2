//! Dense and matrix-free kernels shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
}

/// `X - e (e^T X) / n`.
pub fn center_apply<T: Real>(x: &DMatrix<T>) -> DMatrix<T> {
    let n = T::from_usize_lossy(x.nrows());
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}

pub fn center_vec<T: Real>(x: &DVector<T>) -> DVector<T> {
    let mean = x.sum() / T::from_usize_lossy(x.len());
    x.add_scalar(-mean)
}

/// Thin SVD `R = U diag(s) V^T` with `min(n, r)` triplets, `s` descending.
#[derive(Debug, Clone)]
pub struct ThinSvd<T: Real> {
    pub u: DMatrix<T>,
    pub s: DVector<T>,
    pub v: DMatrix<T>,
    /// Number of singular values above `max(n, r) * eps * s_1`.
    pub rank: usize,
}

impl<T: Real> ThinSvd<T> {
    pub fn spectral_norm(&self) -> T {
        if self.s.is_empty() {
            T::zero()
        } else {
            self.s[0]
        }
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        let mut us = self.u.clone();
        for (k, mut c) in us.column_iter_mut().enumerate() {
            c *= self.s[k];
        }
        us * self.v.transpose()
    }
}

pub fn thin_svd<T: Real>(r: &DMatrix<T>) -> Result<ThinSvd<T>, LinalgError> {
    if r.iter().any(|v| !v.is_finite_val()) {
        return Err(LinalgError::NonFinite);
    }
    let (n, c) = r.shape();
    let (u, s, v) = if n > 4 * c {
        // Tall factor: QR first, then the small c x c SVD.
        let qr = r.clone().qr();
        let q = qr.q();
        let svd = qr.r().svd(true, true);
        (q * svd.u.unwrap(), svd.singular_values, svd.v_t.unwrap().transpose())
    } else {
        let svd = r.clone().svd(true, true);
        (svd.u.unwrap(), svd.singular_values, svd.v_t.unwrap().transpose())
    };
    let k = s.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
    let u = DMatrix::from_fn(n, k, |i, j| u[(i, order[j])]);
    let v = DMatrix::from_fn(c, k, |i, j| v[(i, order[j])]);
    let s = DVector::from_fn(k, |j, _| s[order[j]]);
    let cut = if k == 0 {
        T::zero()
    } else {
        s[0] * T::default_epsilon() * T::from_usize_lossy(n.max(c))
    };
    let rank = s.iter().filter(|&&x| x > cut).count();
    Ok(ThinSvd { u, s, v, rank })
}

/// Symmetric eigendecomposition with eigenvalues in ascending order.
pub fn sym_eig<T: Real>(m: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let eig = SymmetricEigen::new(m.clone());
    let k = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = DVector::from_fn(k, |j, _| eig.eigenvalues[order[j]]);
    let vecs = DMatrix::from_fn(k, k, |i, j| eig.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

fn check_symmetric<T: Real>(m: &DMatrix<T>) -> Result<(), LinalgError> {
    let asym = (m - m.transpose()).amax();
    let scale = T::one() + m.amax();
    if asym > T::lit(T::FEAS_TOL) * scale {
        return Err(LinalgError::NotSymmetric(asym.as_f64()));
    }
    Ok(())
}

fn spectral_clip<T: Real>(m: &DMatrix<T>, keep: impl Fn(T) -> T) -> Result<DMatrix<T>, LinalgError> {
    check_symmetric(m)?;
    let sym = (m + m.transpose()) * T::lit(0.5);
    let (vals, vecs) = sym_eig(&sym);
    let mut scaled = vecs.clone();
    for (k, mut c) in scaled.column_iter_mut().enumerate() {
        c *= keep(vals[k]);
    }
    Ok(scaled * vecs.transpose())
}

/// Frobenius projection onto the negative semidefinite cone.
pub fn project_nsd<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>, LinalgError> {
    spectral_clip(m, |l| l.min(T::zero()))
}

/// Frobenius projection onto the positive semidefinite cone.
pub fn project_psd<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>, LinalgError> {
    spectral_clip(m, |l| l.max(T::zero()))
}

/// Split of the left singular vectors of `R` at `s_i^2 >= alpha (1 - tau)`.
#[derive(Debug, Clone)]
pub struct SpectralSplit<T: Real> {
    /// Columns of `U` whose squared singular value reaches the bound.
    pub u1: DMatrix<T>,
    /// Orthonormal basis of `range(R)`; its complement is the `U3` block.
    pub range: DMatrix<T>,
    pub tau_alpha: T,
}

impl<T: Real> SpectralSplit<T> {
    /// Width of the kernel-complement block.
    pub fn u3_width(&self) -> usize {
        self.range.nrows() - self.range.ncols()
    }

    /// Orthogonal projection onto the `U3` block, `(I - U U^T) x`.
    pub fn project_u3(&self, x: &DVector<T>) -> DVector<T> {
        x - &self.range * (self.range.transpose() * x)
    }
}

pub fn spectral_split<T: Real>(svd: &ThinSvd<T>, alpha: T, tau_alpha: T) -> SpectralSplit<T> {
    let cut = alpha * (T::one() - tau_alpha);
    let k1 = svd.s.iter().take_while(|&&s| s * s >= cut).count();
    SpectralSplit {
        u1: svd.u.columns(0, k1).into_owned(),
        range: svd.u.columns(0, svd.rank).into_owned(),
        tau_alpha,
    }
}

/// Ritz pair returned by [`lanczos_min_eig`].
#[derive(Debug, Clone)]
pub struct Ritz<T: Real> {
    pub value: T,
    pub vector: DVector<T>,
    /// `||S v - value v||`.
    pub residual: T,
    pub matvecs: usize,
}

#[derive(Debug, Error)]
pub enum LanczosError<T: Real> {
    #[error("operator dimension is zero")]
    Empty,
    #[error(
        "Lanczos stopped after {} products without converging (best {}, residual {})",
        best.matvecs, best.value, best.residual
    )]
    NotConverged { best: Ritz<T> },
}

impl<T: Real> LanczosError<T> {
    /// Best Ritz pair seen before giving up, if any.
    pub fn best(&self) -> Option<&Ritz<T>> {
        match self {
            LanczosError::NotConverged { best } => Some(best),
            LanczosError::Empty => None,
        }
    }
}

/// Krylov dimension between explicit restarts.
const KRYLOV_DIM: usize = 80;

/// Smallest eigenvalue of a symmetric operator by restarted Lanczos with
/// full reorthogonalization.
///
/// Converged when `||S v - lambda v|| <= tol (1 + |lambda|)`. `max_iter`
/// bounds the number of operator products.
pub fn lanczos_min_eig<T, F>(
    mut apply: F,
    n: usize,
    tol: T,
    max_iter: usize,
    seed: u64,
) -> Result<Ritz<T>, LanczosError<T>>
where
    T: Real,
    F: FnMut(&DVector<T>) -> DVector<T>,
{
    if n == 0 {
        return Err(LanczosError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start = DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::lit(z)
    });
    start.normalize_mut();

    let m = n.min(KRYLOV_DIM);
    let mut products = 0usize;
    let mut best: Option<Ritz<T>> = None;
    loop {
        let mut basis: Vec<DVector<T>> = vec![start.clone()];
        let mut alpha: Vec<T> = Vec::with_capacity(m);
        let mut beta: Vec<T> = Vec::with_capacity(m);
        let mut anorm = T::zero();
        loop {
            let j = basis.len() - 1;
            let mut w = apply(&basis[j]);
            products += 1;
            let a = w.dot(&basis[j]);
            w.axpy(-a, &basis[j], T::one());
            if j > 0 {
                w.axpy(-beta[j - 1], &basis[j - 1], T::one());
            }
            for _ in 0..2 {
                for q in &basis {
                    let c = w.dot(q);
                    w.axpy(-c, q, T::one());
                }
            }
            alpha.push(a);
            let b = w.norm();
            anorm = anorm.max(a.abs() + b + beta.last().copied().unwrap_or(T::zero()));
            let breakdown = b <= T::default_epsilon() * T::lit(100.0) * (T::one() + anorm);
            if breakdown || basis.len() == m || products >= max_iter {
                break;
            }
            beta.push(b);
            basis.push(w / b);
        }

        let k = alpha.len();
        let mut tri = DMatrix::zeros(k, k);
        for i in 0..k {
            tri[(i, i)] = alpha[i];
            if i + 1 < k {
                tri[(i, i + 1)] = beta[i];
                tri[(i + 1, i)] = beta[i];
            }
        }
        let (_, vecs) = sym_eig(&tri);
        let mut x = DVector::zeros(n);
        for (i, q) in basis.iter().enumerate() {
            x.axpy(vecs[(i, 0)], q, T::one());
        }
        x.normalize_mut();
        let sx = apply(&x);
        products += 1;
        // Rayleigh quotient of the normalized Ritz vector is at least as accurate as theta.
        let value = x.dot(&sx);
        let residual = (sx - &x * value).norm();
        let ritz = Ritz { value, vector: x.clone(), residual, matvecs: products };
        let converged = residual <= tol * (T::one() + value.abs());
        if best.as_ref().is_none_or(|b| residual < b.residual) {
            best = Some(ritz.clone());
        }
        if converged {
            return Ok(ritz);
        }
        if products >= max_iter {
            let mut best = best.unwrap();
            best.matvecs = products;
            return Err(LanczosError::NotConverged { best });
        }
        start = x;
    }
}

/// Largest eigenvalue via [`lanczos_min_eig`] on the negated operator.
pub fn lanczos_max_eig<T, F>(
    mut apply: F,
    n: usize,
    tol: T,
    max_iter: usize,
    seed: u64,
) -> Result<Ritz<T>, LanczosError<T>>
where
    T: Real,
    F: FnMut(&DVector<T>) -> DVector<T>,
{
    let flip = |mut r: Ritz<T>| {
        r.value = -r.value;
        r
    };
    match lanczos_min_eig(|x| -apply(x), n, tol, max_iter, seed) {
        Ok(r) => Ok(flip(r)),
        Err(LanczosError::NotConverged { best }) => Err(LanczosError::NotConverged { best: flip(best) }),
        Err(e) => Err(e),
    }
}

/// `A^T B` Frobenius inner product.
pub fn inner<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}
