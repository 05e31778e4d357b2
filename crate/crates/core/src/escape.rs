//! Optimality test and escape directions at singular points `a e_1^T`.
//!
//! With `C_eff = L - Diag((L a) o a)` and `P` an orthonormal basis of `e^perp`,
//! the reduced problem is
//!
//! ```text
//! min <C_P, Y>  s.t.  <B, Y> = 0,  tr Y = n,  Y >= 0,
//! C_P = P^T C_eff P,  B = P^T Diag(a) P.
//! ```
//!
//! Its value is zero exactly when `a a^T` solves the bisection SDP. A
//! negative value comes with a factor `G` whose image `H = P G` gives the
//! descent curve `[a - t^2/2 a o diag(H H^T), t H]`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::certify::{residues_with_multiplier, Certificate, EigSettings};
use crate::graph_io::Laplacian;
use crate::linalg::{lanczos_min_eig, thin_svd};
use crate::scalar::Real;
use crate::variety::{project_onto_variety, random_matrix, SingularPoint, VarietyPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EscapeError {
    #[error("singular points need even n, got {0}")]
    OddDimension(usize),
    #[error("sign vector has length {got}, Laplacian has {want} rows")]
    Dimension { got: usize, want: usize },
    #[error("escape needs r > 1")]
    RankTooSmall,
    #[error("direction has non-negative curvature {0:e}")]
    NotDescent(f64),
    #[error("escape step shrank below {0:e} without sufficient decrease")]
    StepUnderflow(f64),
    #[error("escape subproblem inconclusive: primal value {value:e}, dual bound {dual:e}")]
    Inconclusive { value: f64, dual: f64 },
}

/// Householder reflector `Q = I - 2 v v^T / |v|^2` with `v = e/sqrt(n) - e_1`.
///
/// `Q` maps `e_1` to `e/sqrt(n)`, so its trailing `n - 1` columns form an
/// orthonormal basis `P` of `e^perp` with `P P^T = J`.
#[derive(Debug, Clone)]
pub struct CenterBasis<T: Real> {
    v: DVector<T>,
    scale: T,
}

impl<T: Real> CenterBasis<T> {
    pub fn new(n: usize) -> Self {
        let s = T::one() / T::from_usize_lossy(n).sqrt();
        let mut v = DVector::from_element(n, s);
        v[0] -= T::one();
        let nv = v.norm_squared();
        let scale = if nv > T::zero() { T::lit(2.0) / nv } else { T::zero() };
        CenterBasis { v, scale }
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    fn reflect(&self, x: &mut DMatrix<T>) {
        let w = x.tr_mul(&self.v) * self.scale;
        x.ger(-T::one(), &self.v, &w, T::one());
    }

    /// `P X` for an `(n-1) x k` matrix.
    pub fn apply(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let mut y = DMatrix::zeros(self.n(), x.ncols());
        y.rows_mut(1, self.n() - 1).copy_from(x);
        self.reflect(&mut y);
        y
    }

    /// `P^T Y` for an `n x k` matrix.
    pub fn apply_t(&self, y: &DMatrix<T>) -> DMatrix<T> {
        let mut z = y.clone();
        self.reflect(&mut z);
        z.rows(1, self.n() - 1).into_owned()
    }

    pub fn dense(&self) -> DMatrix<T> {
        self.apply(&DMatrix::identity(self.n() - 1, self.n() - 1))
    }
}

/// The reduced escape problem at `a e_1^T`, with operators applied implicitly.
pub struct EscapeProblem<'a, T: Real> {
    a: SingularPoint,
    av: DVector<T>,
    lap: &'a Laplacian<T>,
    shift: DVector<T>,
    basis: CenterBasis<T>,
}

pub fn build_escape<'a, T: Real>(a: &SingularPoint, lap: &'a Laplacian<T>) -> Result<EscapeProblem<'a, T>, EscapeError> {
    let n = lap.n();
    if a.n() != n {
        return Err(EscapeError::Dimension { got: a.n(), want: n });
    }
    if n % 2 == 1 {
        return Err(EscapeError::OddDimension(n));
    }
    let av = a.vector::<T>();
    let la = lap.apply_vec(&av).expect("dimension checked");
    let shift = la.component_mul(&av);
    Ok(EscapeProblem { a: a.clone(), av, lap, shift, basis: CenterBasis::new(n) })
}

impl<'a, T: Real> EscapeProblem<'a, T> {
    pub fn n(&self) -> usize {
        self.av.len()
    }

    pub fn sign_point(&self) -> &SingularPoint {
        &self.a
    }

    pub fn basis(&self) -> &CenterBasis<T> {
        &self.basis
    }

    /// `C_eff X = L X - Diag((L a) o a) X`.
    pub fn apply_ceff(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let mut y = self.lap.apply(x).expect("dimension checked");
        for (i, mut row) in y.row_iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v -= self.shift[i] * x[(i, j)];
            }
        }
        y
    }

    pub fn apply_cp(&self, g: &DMatrix<T>) -> DMatrix<T> {
        self.basis.apply_t(&self.apply_ceff(&self.basis.apply(g)))
    }

    pub fn apply_b(&self, g: &DMatrix<T>) -> DMatrix<T> {
        let mut h = self.basis.apply(g);
        for (i, mut row) in h.row_iter_mut().enumerate() {
            row *= self.av[i];
        }
        self.basis.apply_t(&h)
    }

    /// `<B, G G^T> = a^T diag(H H^T)` with `H = P G`.
    pub fn constraint(&self, g: &DMatrix<T>) -> T {
        let h = self.basis.apply(g);
        (0..self.n()).fold(T::zero(), |acc, i| acc + self.av[i] * h.row(i).norm_squared())
    }

    pub fn value(&self, g: &DMatrix<T>) -> T {
        g.dot(&self.apply_cp(g))
    }

    /// Second-order model `F(H) = 1/2 <C_eff H, H>` for an `n x k` direction.
    pub fn curvature(&self, h: &DMatrix<T>) -> T {
        h.dot(&self.apply_ceff(h)) * T::lit(0.5)
    }

    /// Dense `C_P` and `B`; for small instances and tests.
    pub fn dense(&self) -> (DMatrix<T>, DMatrix<T>) {
        let id = DMatrix::identity(self.n() - 1, self.n() - 1);
        let cp = self.apply_cp(&id);
        let b = self.apply_b(&id);
        ((&cp + cp.transpose()) * T::lit(0.5), (&b + b.transpose()) * T::lit(0.5))
    }

    /// `lambda_min(C_P - y B)` and the `B`-weight of its eigenvector.
    fn dual_eval(&self, y: T, eig: &EigSettings) -> (T, T, bool) {
        let m = self.n() - 1;
        let op = |x: &DVector<T>| {
            let g = DMatrix::from_column_slice(m, 1, x.as_slice());
            let out = self.apply_cp(&g) - self.apply_b(&g) * y;
            DVector::from_column_slice(out.as_slice())
        };
        let (ritz, ok) = match lanczos_min_eig(op, m, T::lit(eig.tol), eig.max_iter, eig.seed) {
            Ok(r) => (r, true),
            Err(e) => (e.best().cloned().expect("nonempty operator"), false),
        };
        let v = DMatrix::from_column_slice(m, 1, ritz.vector.as_slice());
        (ritz.value, self.constraint(&v), ok)
    }

    /// Maximize the concave function `y -> lambda_min(C_P - y B)` from `y0`.
    ///
    /// Returns `(y, lambda_min)`; `n * lambda_min` is the escape SDP value.
    pub fn dual_bound(&self, y0: T, eig: &EigSettings) -> (T, T, bool) {
        let (f0, slope0, mut ok) = self.dual_eval(y0, eig);
        if slope0 == T::zero() {
            return (y0, f0, ok);
        }
        let mut best = (y0, f0);
        // The slope of lambda_min in y is -v^T B v.
        let mut step = T::one() + y0.abs();
        let dir = if slope0 < T::zero() { T::one() } else { -T::one() };
        let mut prev = y0;
        let mut bracketed = false;
        let (mut lo, mut hi) = (y0, y0);
        for _ in 0..60 {
            let y = prev + dir * step;
            let (f, slope, okk) = self.dual_eval(y, eig);
            ok &= okk;
            if f > best.1 {
                best = (y, f);
            }
            // Concavity: the derivative -slope changes sign once we pass the maximizer.
            if (dir > T::zero() && slope >= T::zero()) || (dir < T::zero() && slope <= T::zero()) {
                if dir > T::zero() {
                    lo = prev;
                    hi = y;
                } else {
                    lo = y;
                    hi = prev;
                }
                bracketed = true;
                break;
            }
            prev = y;
            step *= T::lit(2.0);
        }
        if !bracketed {
            return (best.0, best.1, ok);
        }
        // Golden-section search on the bracket.
        let phi = T::lit(0.618_033_988_749_894_9);
        let mut x1 = hi - (hi - lo) * phi;
        let mut x2 = lo + (hi - lo) * phi;
        let mut f1 = self.dual_eval(x1, eig).0;
        let mut f2 = self.dual_eval(x2, eig).0;
        for _ in 0..80 {
            if (hi - lo).abs() <= T::lit(1e-13) * (T::one() + lo.abs()) {
                break;
            }
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + (hi - lo) * phi;
                f2 = self.dual_eval(x2, eig).0;
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - (hi - lo) * phi;
                f1 = self.dual_eval(x1, eig).0;
            }
        }
        for (y, f) in [(x1, f1), (x2, f2)] {
            if f > best.1 {
                best = (y, f);
            }
        }
        (best.0, best.1, ok)
    }
}

/// Settings for the escape subproblem.
#[derive(Debug, Clone)]
pub struct EscapeConfig {
    /// Columns of the subproblem factor (at least 2).
    pub rank: usize,
    /// Relative stationarity tolerance of the inner solves.
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// `|value| <= value_tol (1 + ||L||_F)` counts as zero.
    pub value_tol: f64,
    pub seed: u64,
    pub eig: EigSettings,
}

impl Default for EscapeConfig {
    fn default() -> Self {
        EscapeConfig {
            rank: 3,
            inner_tol: 1e-8,
            max_outer: 40,
            max_inner: 2000,
            value_tol: 1e-8,
            seed: 0x65736361,
            eig: EigSettings::default(),
        }
    }
}

/// Output of [`solve_escape`].
#[derive(Debug, Clone)]
pub struct EscapeSolve<T: Real> {
    /// `<C_P, G G^T>`.
    pub value: T,
    pub factor: DMatrix<T>,
    /// Multiplier of `<B, Y> = 0`.
    pub multiplier: T,
    /// `|<B, G G^T>|`.
    pub infeasibility: T,
    pub converged: bool,
}

fn sphere_grad<T: Real>(g: &DMatrix<T>, egrad: &DMatrix<T>, n: T) -> DMatrix<T> {
    egrad - g * (g.dot(egrad) / n)
}

fn to_sphere<T: Real>(g: DMatrix<T>, n: T) -> DMatrix<T> {
    let s = n.sqrt() / g.norm();
    g * s
}

/// Augmented Lagrangian on the sphere `||G||^2 = n` for the reduced SDP.
pub fn solve_escape<T: Real>(prob: &EscapeProblem<'_, T>, cfg: &EscapeConfig) -> EscapeSolve<T> {
    let n = prob.n();
    let nn = T::from_usize_lossy(n);
    let p = cfg.rank.max(1);
    let scale = T::one() + prob.lap.frobenius_norm();
    let feas_tol = T::lit(1e-10) * nn;
    let neg_exit = T::lit(10.0 * cfg.value_tol) * scale;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut g = to_sphere(random_matrix::<T, _>(n - 1, p, &mut rng), nn);
    let mut y = T::zero();
    let mut rho = T::one() / scale;
    let mut c_prev = prob.constraint(&g).abs();
    let mut converged = false;

    for _ in 0..cfg.max_outer {
        let stationary = inner_sphere(prob, &mut g, y, rho, cfg);
        let c = prob.constraint(&g);
        let value = prob.value(&g);
        if c.abs() <= feas_tol && (value <= -neg_exit || stationary) {
            converged = stationary;
            if value <= -neg_exit {
                break;
            }
        }
        y -= rho * c;
        if converged {
            break;
        }
        if c.abs() > T::lit(0.25) * c_prev {
            rho *= T::lit(10.0);
        }
        c_prev = c.abs();
    }
    let c = prob.constraint(&g);
    EscapeSolve { value: prob.value(&g), factor: g, multiplier: y, infeasibility: c.abs(), converged }
}

/// Riemannian BB descent on the sphere for the augmented Lagrangian.
/// Returns whether the stationarity tolerance was met.
fn inner_sphere<T: Real>(prob: &EscapeProblem<'_, T>, g: &mut DMatrix<T>, y: T, rho: T, cfg: &EscapeConfig) -> bool {
    let nn = T::from_usize_lossy(prob.n());
    let eval = |g: &DMatrix<T>| {
        let c = prob.constraint(g);
        let cg = prob.apply_cp(g);
        let bg = prob.apply_b(g);
        let val = g.dot(&cg) - y * c + rho * T::lit(0.5) * c * c;
        let egrad = (cg - bg * (y - rho * c)) * T::lit(2.0);
        (val, sphere_grad(g, &egrad, nn))
    };
    let (mut f, mut grad) = eval(g);
    let gscale = T::one() + nn.sqrt();
    let mut alpha = T::one() / (T::one() + grad.norm());
    let mut hist = vec![f];
    for _ in 0..cfg.max_inner {
        let gn = grad.norm();
        if gn / gscale <= T::lit(cfg.inner_tol) {
            return true;
        }
        let fmax = hist.iter().copied().fold(f, |a, b| a.max(b));
        let mut tau = alpha;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = to_sphere(&*g - &grad * tau, nn);
            let (ft, gt) = eval(&trial);
            if ft <= fmax - T::lit(1e-4) * tau * gn * gn {
                accepted = Some((trial, ft, gt));
                break;
            }
            tau *= T::lit(0.5);
        }
        let Some((trial, ft, gt)) = accepted else {
            return false;
        };
        let s = &trial - &*g;
        let yv = &gt - &grad;
        let sy = s.dot(&yv);
        alpha = if sy > T::zero() { s.norm_squared() / sy } else { tau * T::lit(2.0) };
        alpha = alpha.min(T::lit(1e6)).max(T::lit(1e-10));
        *g = trial;
        f = ft;
        grad = gt;
        hist.push(f);
        if hist.len() > 6 {
            hist.remove(0);
        }
    }
    false
}

/// Dual certificate for an optimal singular point.
#[derive(Debug, Clone)]
pub struct SingularDual<T: Real> {
    /// Multiplier of `tr Y = n` (the dual value is `n y1`).
    pub y1: T,
    /// Multiplier of `<B, Y> = 0`.
    pub y2: T,
    /// Diagonal dual `mu = (L a) o a + y1 e + y2 a` of the bisection SDP.
    pub mu: DVector<T>,
    pub certificate: Certificate<T>,
}

#[derive(Debug, Clone)]
pub enum EscapeOutcome<T: Real> {
    CertifiedOptimal(SingularDual<T>),
    /// `h` is `n x (r-1)` with `e^T h = 0`, `a^T diag(h h^T) = 0`, `|h|^2 = n`.
    Direction { h: DMatrix<T>, curvature: T },
}

/// Decide whether `a a^T` is optimal, or produce an escape direction.
pub fn certify_or_direction<T: Real>(
    a: &SingularPoint,
    lap: &Laplacian<T>,
    r: usize,
    cfg: &EscapeConfig,
) -> Result<EscapeOutcome<T>, EscapeError> {
    if r < 2 {
        return Err(EscapeError::RankTooSmall);
    }
    let prob = build_escape(a, lap)?;
    let n = prob.n();
    let nn = T::from_usize_lossy(n);
    let scale = T::one() + lap.frobenius_norm();
    let thr = T::lit(cfg.value_tol) * scale;

    let mut sub = cfg.clone();
    sub.rank = cfg.rank.min(r - 1).max(1);
    let sol = solve_escape(&prob, &sub);

    if sol.value < -thr && sol.infeasibility <= T::lit(1e-8) * nn {
        let h = truncate_direction(&prob, &sol.factor, r - 1);
        let curvature = prob.curvature(&h);
        if curvature < -T::lit(1e-10) {
            return Ok(EscapeOutcome::Direction { h, curvature });
        }
    }

    let (y2, lmin, _) = prob.dual_bound(sol.multiplier, &cfg.eig);
    if nn * lmin < -thr {
        return Err(EscapeError::Inconclusive { value: sol.value.as_f64(), dual: (nn * lmin).as_f64() });
    }
    let y1 = lmin;
    let mu = &prob.shift + DVector::from_element(n, y1) + &prob.av * y2;
    let factor = a.factor::<T>(r);
    let certificate = residues_with_multiplier(&factor, lap, &mu, &cfg.eig);
    Ok(EscapeOutcome::CertifiedOptimal(SingularDual { y1, y2, mu, certificate }))
}

/// `P G`, truncated to at most `max_rank` columns and padded with zeros.
fn truncate_direction<T: Real>(prob: &EscapeProblem<'_, T>, g: &DMatrix<T>, max_rank: usize) -> DMatrix<T> {
    let n = prob.n();
    let h = prob.basis.apply(g);
    let svd = thin_svd(&h).expect("finite factor");
    let keep = svd
        .s
        .iter()
        .take_while(|&&s| s > T::lit(1e-8) * svd.spectral_norm())
        .count()
        .min(max_rank);
    let mut out = DMatrix::zeros(n, max_rank);
    for j in 0..keep {
        let col = svd.u.column(j) * svd.s[j];
        out.set_column(j, &col);
    }
    out
}

/// Point on the escape curve `[a - t^2/2 a o diag(H H^T), t H]`.
pub fn escape_curve<T: Real>(a: &SingularPoint, h: &DMatrix<T>, t: T) -> DMatrix<T> {
    let n = a.n();
    let av = a.vector::<T>();
    let mut y = DMatrix::zeros(n, h.ncols() + 1);
    for i in 0..n {
        y[(i, 0)] = av[i] * (T::one() - T::lit(0.5) * t * t * h.row(i).norm_squared());
        for j in 0..h.ncols() {
            y[(i, j + 1)] = t * h[(i, j)];
        }
    }
    y
}

/// Accepted escape step.
#[derive(Debug, Clone)]
pub struct EscapeStep<T: Real> {
    pub point: VarietyPoint<T>,
    pub t: T,
    pub value: T,
}

/// Move off `a e_1^T` along `h`, halving `t` from 1 until the projected curve
/// point decreases `f = 1/2 <L, R R^T>` by at least `|F(h)| t^2 / 2`.
pub fn escape_step<T: Real>(
    a: &SingularPoint,
    h: &DMatrix<T>,
    lap: &Laplacian<T>,
    f_ref: T,
) -> Result<EscapeStep<T>, EscapeError> {
    let prob = build_escape(a, lap)?;
    let curv = prob.curvature(h);
    if !(curv < T::zero()) {
        return Err(EscapeError::NotDescent(curv.as_f64()));
    }
    let mut t = T::one();
    let floor = T::lit(1e-8);
    while t >= floor {
        if let Ok(point) = project_onto_variety(&escape_curve(a, h, t)) {
            let value = cut_objective(lap, point.matrix());
            if value <= f_ref - T::lit(0.5) * curv.abs() * t * t && point.svd().rank >= 2 {
                return Ok(EscapeStep { point, t, value });
            }
        }
        t *= T::lit(0.5);
    }
    Err(EscapeError::StepUnderflow(floor.as_f64()))
}

/// `1/2 <L, R R^T>`.
pub fn cut_objective<T: Real>(lap: &Laplacian<T>, r: &DMatrix<T>) -> T {
    r.dot(&lap.apply(r).expect("shape")) * T::lit(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{cycle, disjoint_cliques};
    use crate::graph_io::{laplacian, Graph};
    use crate::linalg::sym_eig;

    fn signs(v: &[i8]) -> SingularPoint {
        SingularPoint::new(v.to_vec()).unwrap()
    }

    /// `n * max_y lambda_min(C_P - y B)` by a dense grid plus golden refinement.
    fn dense_escape_value(cp: &DMatrix<f64>, b: &DMatrix<f64>, n: usize) -> f64 {
        let lam = |y: f64| sym_eig(&(cp - b * y)).0[0];
        let mut best = (0.0, lam(0.0));
        for k in -4000..=4000 {
            let y = k as f64 * 0.01;
            let v = lam(y);
            if v > best.1 {
                best = (y, v);
            }
        }
        let (mut lo, mut hi) = (best.0 - 0.01, best.0 + 0.01);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if lam(m1) < lam(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        n as f64 * lam(0.5 * (lo + hi)).max(best.1)
    }

    #[test]
    fn basis_is_orthonormal_complement() {
        let b = CenterBasis::<f64>::new(7);
        let p = b.dense();
        assert!((p.transpose() * &p - DMatrix::identity(6, 6)).amax() < 1e-12);
        let j = DMatrix::identity(7, 7) - DMatrix::from_element(7, 7, 1.0 / 7.0);
        assert!((&p * p.transpose() - j).amax() < 1e-12);
    }

    #[test]
    fn b_has_zero_trace() {
        let g = Graph::unweighted(8, [(0, 1)]).unwrap();
        let l: Laplacian<f64> = laplacian(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let mut s: Vec<i8> = [1i8, 1, 1, 1, -1, -1, -1, -1].to_vec();
            use rand::seq::SliceRandom;
            s.shuffle(&mut rng);
            let prob = build_escape(&signs(&s), &l).unwrap();
            let (_, b) = prob.dense();
            assert!(b.trace().abs() < 1e-12);
        }
    }

    #[test]
    fn zero_cost_is_certified() {
        let l: Laplacian<f64> = laplacian(&Graph::unweighted(4, []).unwrap());
        for a in [[1, 1, -1, -1], [1, -1, 1, -1], [1, -1, -1, 1]] {
            let prob = build_escape(&signs(&a), &l).unwrap();
            assert_eq!(solve_escape(&prob, &EscapeConfig::default()).value, 0.0);
            let out = certify_or_direction(&signs(&a), &l, 3, &EscapeConfig::default()).unwrap();
            assert!(matches!(out, EscapeOutcome::CertifiedOptimal(_)));
        }
    }

    #[test]
    fn four_cycle_escape_value_matches_dense() {
        let l: Laplacian<f64> = laplacian(&cycle(4));
        for a in [[1i8, 1, -1, -1], [1, -1, 1, -1]] {
            let prob = build_escape(&signs(&a), &l).unwrap();
            let (cp, b) = prob.dense();
            let dense = dense_escape_value(&cp, &b, 4);
            let sol = solve_escape(&prob, &EscapeConfig::default());
            assert!((sol.value - dense).abs() < 1e-6, "{a:?}: {} vs {}", sol.value, dense);
        }
    }

    #[test]
    fn four_cycle_one_optimal_one_escapes() {
        let l: Laplacian<f64> = laplacian(&cycle(4));
        let cfg = EscapeConfig::default();
        let good = certify_or_direction(&signs(&[1, 1, -1, -1]), &l, 3, &cfg).unwrap();
        let EscapeOutcome::CertifiedOptimal(dual) = good else { panic!("expected certificate") };
        assert!(dual.certificate.rd <= 1e-8 && dual.certificate.rc <= 1e-8);

        let a = signs(&[1, -1, 1, -1]);
        let bad = certify_or_direction(&a, &l, 3, &cfg).unwrap();
        let EscapeOutcome::Direction { h, curvature } = bad else { panic!("expected direction") };
        assert!(curvature < -1e-10);
        assert!(h.row_sum().amax() < 1e-8);
        assert!((h.norm_squared() - 4.0).abs() < 1e-8);
        let mut cone = DMatrix::zeros(4, 3);
        cone.columns_mut(1, 2).copy_from(&h);
        assert!(crate::variety::tangent_cone_member(&a, &cone, 1e-8));

        let f_ref = cut_objective(&l, &a.factor::<f64>(3));
        assert_eq!(f_ref, 8.0);
        let step = escape_step(&a, &h, &l, f_ref).unwrap();
        assert!(step.value < f_ref);
        assert!(step.point.svd().rank >= 2);
    }

    #[test]
    fn escape_decrease_matches_curvature() {
        let l: Laplacian<f64> = laplacian(&cycle(4));
        let a = signs(&[1, -1, 1, -1]);
        let EscapeOutcome::Direction { h, curvature } =
            certify_or_direction(&a, &l, 3, &EscapeConfig::default()).unwrap()
        else {
            panic!("expected direction")
        };
        let f0 = cut_objective(&l, &a.factor::<f64>(3));
        let mut ratios = Vec::new();
        for t in [1e-1, 1e-2] {
            let p = project_onto_variety(&escape_curve(&a, &h, t)).unwrap();
            ratios.push((f0 - cut_objective(&l, p.matrix())) / (t * t));
        }
        assert!((ratios[1] - curvature.abs()).abs() < (ratios[0] - curvature.abs()).abs() + 1e-9);
        assert!((ratios[1] - curvature.abs()).abs() < 1e-2 * curvature.abs());
    }

    #[test]
    fn clique_pair_indicator_is_certified() {
        let l: Laplacian<f64> = laplacian(&disjoint_cliques(2, 4));
        let a = signs(&[1, 1, 1, 1, -1, -1, -1, -1]);
        let out = certify_or_direction(&a, &l, 4, &EscapeConfig::default()).unwrap();
        let EscapeOutcome::CertifiedOptimal(dual) = out else { panic!("expected certificate") };
        let s = l.to_dense() - DMatrix::from_diagonal(&dual.mu);
        let j = DMatrix::identity(8, 8) - DMatrix::from_element(8, 8, 0.125);
        assert!(sym_eig(&(&j * s * &j)).0[0] >= -1e-8);
    }

    #[test]
    fn six_cycle_value_matches_dense() {
        let l: Laplacian<f64> = laplacian(&cycle(6));
        let prob = build_escape(&signs(&[1, 1, 1, -1, -1, -1]), &l).unwrap();
        let (cp, b) = prob.dense();
        let dense = dense_escape_value(&cp, &b, 6);
        let sol = solve_escape(&prob, &EscapeConfig::default());
        assert!(sol.value <= 1e-8);
        assert!((sol.value - dense).abs() < 1e-6, "{} vs {}", sol.value, dense);
    }

    #[test]
    fn rejects_non_descent() {
        let l: Laplacian<f64> = laplacian(&cycle(4));
        let a = signs(&[1, 1, -1, -1]);
        assert!(matches!(escape_step(&a, &DMatrix::zeros(4, 2), &l, 8.0), Err(EscapeError::NotDescent(_))));
    }
}
