//! k-equipartition SDP (`k >= 3`): the spectral bound `R^T R <= alpha I`,
//! `alpha = n / (k - 1)`, is handled by an augmented Lagrangian with an
//! NSD multiplier `Z`; every inner problem is a smooth minimization on
//! `B(n,r)` solved by the same BB method as bisection.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::bisection::{default_rank, minimize_on_variety, BbConfig, Objective, SmoothStatus, Solution, SolveError};
use crate::certify::{residues_equipartition, EigSettings, ProblemKind, SolveReport, Termination};
use crate::escape::cut_objective;
use crate::graph_io::Laplacian;
use crate::linalg::{project_nsd, project_psd};
use crate::scalar::Real;
use crate::variety::{random_point, TangentProjector};

#[derive(Debug, Clone)]
pub struct AlmConfig {
    /// Relative Riemannian gradient tolerance of each inner solve.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub beta0: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Outer tolerance on `pfeas` and `dfeas`.
    pub tol: f64,
    pub max_outer: usize,
    /// Outer iterations without a 1% improvement of `max(pfeas, dfeas)` before giving up.
    pub stall_limit: usize,
    pub seed: u64,
    /// Factor width; `default_rank(n, k)` when `None`.
    pub rank: Option<usize>,
    /// Threshold for singular values at the bound, relative to `alpha`.
    pub tau_alpha: f64,
    pub bb: BbConfig,
    pub eig: EigSettings,
}

impl Default for AlmConfig {
    fn default() -> Self {
        AlmConfig {
            inner_tol: 1e-6,
            inner_max_iter: 200,
            beta0: 0.1,
            beta_min: 0.1,
            beta_max: 10.0,
            tol: 1e-6,
            max_outer: 2000,
            stall_limit: 50,
            seed: 1,
            rank: None,
            tau_alpha: 1e-6,
            bb: BbConfig::default(),
            eig: EigSettings::default(),
        }
    }
}

fn shifted_gram<T: Real>(r: &DMatrix<T>, alpha: T) -> DMatrix<T> {
    let g = r.tr_mul(r);
    let g = (&g + g.transpose()) * T::lit(0.5);
    g - DMatrix::identity(r.ncols(), r.ncols()) * alpha
}

/// `Pi_-(Z - beta (R^T R - alpha I))`.
pub fn shifted_multiplier<T: Real>(r: &DMatrix<T>, z: &DMatrix<T>, beta: T, alpha: T) -> DMatrix<T> {
    let m = z - shifted_gram(r, alpha) * beta;
    let m = (&m + m.transpose()) * T::lit(0.5);
    project_nsd(&m).expect("finite symmetric argument")
}

/// `1/2 <L, R R^T> + (||Pi_-(Z - beta (R^T R - alpha I))||^2 - ||Z||^2) / (2 beta)`.
pub fn aug_lagrangian_value<T: Real>(r: &DMatrix<T>, z: &DMatrix<T>, beta: T, lap: &Laplacian<T>, alpha: T) -> T {
    let w = shifted_multiplier(r, z, beta, alpha);
    cut_objective(lap, r) + (w.norm_squared() - z.norm_squared()) / (beta * T::lit(2.0))
}

/// Euclidean gradient `L R - 2 R Pi_-(Z - beta (R^T R - alpha I))`.
pub fn aug_lagrangian_grad<T: Real>(
    r: &DMatrix<T>,
    z: &DMatrix<T>,
    beta: T,
    lap: &Laplacian<T>,
    alpha: T,
) -> DMatrix<T> {
    let w = shifted_multiplier(r, z, beta, alpha);
    lap.apply(r).expect("shape") - (r * w) * T::lit(2.0)
}

/// `Y = Pi_+(alpha I - R^T R)`.
pub fn recover_slack_y<T: Real>(r: &DMatrix<T>, alpha: T) -> DMatrix<T> {
    project_psd(&-shifted_gram(r, alpha)).expect("finite factor")
}

pub struct AlmObjective<'a, T: Real> {
    pub lap: &'a Laplacian<T>,
    pub z: &'a DMatrix<T>,
    pub beta: T,
    pub alpha: T,
}

impl<T: Real> Objective<T> for AlmObjective<'_, T> {
    fn eval(&self, r: &DMatrix<T>) -> (T, DMatrix<T>) {
        let w = shifted_multiplier(r, self.z, self.beta, self.alpha);
        let lr = self.lap.apply(r).expect("shape");
        let value = r.dot(&lr) * T::lit(0.5) + (w.norm_squared() - self.z.norm_squared()) / (self.beta * T::lit(2.0));
        (value, lr - (r * w) * T::lit(2.0))
    }
}

/// Primal and dual infeasibility of `(R, Z)`.
pub fn feasibility_measures<T: Real>(r: &DMatrix<T>, z: &DMatrix<T>, lap: &Laplacian<T>, alpha: T) -> (T, T) {
    let y = recover_slack_y(r, alpha);
    let viol = project_psd(&shifted_gram(r, alpha)).expect("finite factor");
    let rn = r.norm();
    let (yn, zn) = (y.norm(), z.norm());
    let pfeas = viol.norm() / (T::one() + yn + rn);
    let c = lap.apply(r).expect("shape") - (r * z) * T::lit(2.0);
    let grad = match TangentProjector::from_matrix(r) {
        Ok(p) => p.project(&c).norm(),
        Err(_) => T::lit(f64::INFINITY),
    };
    let d1 = grad / (T::one() + rn + zn);
    let d2 = (&y - project_psd(&(&y + z)).expect("finite")).norm() / (T::one() + yn + zn);
    (pfeas, d1.max(d2))
}

/// Augmented Lagrangian outer loop. The penalty `beta` shrinks by 1.2 when
/// the primal side is far ahead, grows by 1.2 when it lags, and stays in
/// `[beta_min, beta_max]`.
pub fn solve_equipartition<T: Real>(lap: &Laplacian<T>, k: usize, cfg: &AlmConfig) -> Result<Solution<T>, SolveError> {
    if k < 3 {
        return Err(SolveError::Config("equipartition needs k >= 3".into()));
    }
    cfg.bb.validate()?;
    let clock = Instant::now();
    let n = lap.n();
    if n < k {
        return Err(SolveError::Config(format!("n = {n} is smaller than k = {k}")));
    }
    let r0 = cfg.rank.unwrap_or_else(|| default_rank(n, k));
    let alpha = T::from_usize_lossy(n) / T::from_usize_lossy(k - 1);
    let mut point = random_point::<T>(n, r0, cfg.seed).map_err(SolveError::Start)?;
    let mut z = DMatrix::<T>::zeros(r0, r0);
    let mut beta = cfg.beta0;
    let tol = T::lit(cfg.tol);

    let inner_cfg = BbConfig {
        tol: cfg.inner_tol,
        max_iter: cfg.inner_max_iter,
        rank_period: 0,
        ..cfg.bb.clone()
    };

    let mut inner = 0usize;
    let mut outer = 0usize;
    let mut best = T::lit(f64::INFINITY);
    let mut since_best = 0usize;
    let (mut pfeas, mut dfeas) = (T::lit(f64::INFINITY), T::lit(f64::INFINITY));

    let termination = loop {
        if outer >= cfg.max_outer {
            break Termination::MaxIterations;
        }
        outer += 1;
        let bt = T::lit(beta);
        let obj = AlmObjective { lap, z: &z, beta: bt, alpha };
        let run = minimize_on_variety(&obj, point, &inner_cfg, None, inner);
        inner += run.iterations;
        point = run.point;
        if run.status == SmoothStatus::NearSingular {
            break Termination::NearSingular;
        }
        z = shifted_multiplier(point.matrix(), &z, bt, alpha);
        (pfeas, dfeas) = feasibility_measures(point.matrix(), &z, lap, alpha);
        if pfeas <= tol && dfeas <= tol {
            break Termination::Converged;
        }
        let merit = pfeas.max(dfeas);
        if merit < best * T::lit(0.99) {
            best = merit;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.stall_limit {
                break Termination::Stalled;
            }
        }
        let (p, d) = (pfeas.as_f64(), dfeas.as_f64());
        if p < d / 1000.0 {
            beta = (beta / 1.2).max(cfg.beta_min);
        } else if p >= (d / 1000.0).max(10.0 * cfg.tol) {
            beta = (beta * 1.2).min(cfg.beta_max);
        }
    };

    let factor = point.into_matrix();
    let certificate =
        residues_equipartition(&factor, &z, lap, alpha, T::lit(cfg.tau_alpha), &cfg.eig).ok();
    let f = cut_objective(lap, &factor).as_f64();
    let report = SolveReport {
        kind: ProblemKind::Equipart,
        n,
        k,
        r_initial: r0,
        r_final: factor.ncols(),
        obj: 2.0 * f,
        f,
        rp: certificate.as_ref().map(|c| c.rp.as_f64()),
        rd: certificate.as_ref().map(|c| c.rd.as_f64()),
        rc: certificate.as_ref().map(|c| c.rc.as_f64()),
        eig_converged: certificate.as_ref().is_some_and(|c| c.eig_converged),
        inner_iterations: inner,
        outer_iterations: outer,
        singular_events: 0,
        escapes: 0,
        rank_drops: Vec::new(),
        termination,
        beta: Some(beta),
        pfeas: Some(pfeas.as_f64()),
        dfeas: Some(dfeas.as_f64()),
        seed: cfg.seed,
        wall_time_secs: clock.elapsed().as_secs_f64(),
    };
    Ok(Solution { factor, report, certificate, singular_dual: None, multiplier: Some(z) })
}
