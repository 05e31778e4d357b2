//! Minimum-bisection SDP through its factorization on `B(n,r)`.
//!
//! The smooth part is a Riemannian gradient method with Barzilai–Borwein
//! steps and a nonmonotone line search whose trial points are full metric
//! projections onto `B(n,r)`. Whenever an iterate comes close to a rank-one
//! point, the outer loop rounds it to a balanced sign vector and either
//! certifies that point or steps off it along an escape curve.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{residues_bisection, Certificate, EigSettings, ProblemKind, RankDrop, SolveReport, Termination};
use crate::escape::{certify_or_direction, cut_objective, escape_step, EscapeConfig, EscapeOutcome, SingularDual};
use crate::graph_io::Laplacian;
use crate::scalar::Real;
use crate::variety::{
    is_singular, project_onto_variety, random_point, round_to_singular, TangentProjector, VarietyError,
    VarietyPoint,
};

/// A smooth function of the factor `R`.
pub trait Objective<T: Real> {
    /// Value and Euclidean gradient at `r`.
    fn eval(&self, r: &DMatrix<T>) -> (T, DMatrix<T>);
}

/// `f(R) = 1/2 <L, R R^T>` with gradient `L R`.
pub struct CutObjective<'a, T: Real> {
    pub lap: &'a Laplacian<T>,
}

impl<T: Real> Objective<T> for CutObjective<'_, T> {
    fn eval(&self, r: &DMatrix<T>) -> (T, DMatrix<T>) {
        let lr = self.lap.apply(r).expect("factor has n rows");
        (r.dot(&lr) * T::lit(0.5), lr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BbVariant {
    Bb1,
    Bb2,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("could not draw a feasible starting point: {0}")]
    Start(VarietyError),
}

#[derive(Debug, Clone)]
pub struct BbConfig {
    /// Sufficient-decrease constant.
    pub gamma: f64,
    /// Inverse steps outside `[eps_bb, 1/eps_bb]` are reset.
    pub eps_bb: f64,
    /// Backtracking factor.
    pub sigma_ls: f64,
    /// Nonmonotone memory.
    pub memory: usize,
    /// Stop when `||grad f|| / (1 + ||R||_F) < tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub seed: u64,
    /// Initial singular-neighbourhood threshold.
    pub delta0: f64,
    pub variant: BbVariant,
    /// Check for a singular-value gap every `rank_period` iterations (0 disables).
    pub rank_period: usize,
    pub rank_ratio: f64,
}

impl Default for BbConfig {
    fn default() -> Self {
        BbConfig {
            gamma: 1e-4,
            eps_bb: 1e-10,
            sigma_ls: 0.5,
            memory: 5,
            tol: 1e-6,
            max_iter: 20_000,
            max_halvings: 60,
            seed: 1,
            delta0: 0.02,
            variant: BbVariant::Bb1,
            rank_period: 10,
            rank_ratio: 10.0,
        }
    }
}

impl BbConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: &str| Err(SolveError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.sigma_ls > 0.0 && self.sigma_ls < 1.0) {
            return bad("sigma_ls must lie in (0, 1)");
        }
        if !(self.delta0 > 0.0 && self.delta0 < 0.5) {
            return bad("delta0 must lie in (0, 1/2)");
        }
        if !(self.tol > 0.0) || !(self.eps_bb > 0.0 && self.eps_bb < 1.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }
}

/// `k - 1 + ceil(sqrt(2 (n + 1)))`.
pub fn default_rank(n: usize, k: usize) -> usize {
    let root = (2.0 * (n as f64 + 1.0)).sqrt().ceil() as usize;
    k - 1 + root
}

/// Fallback inverse step used on the first iteration and after a reset.
pub fn fallback_step<T: Real>(gnorm: T) -> T {
    if gnorm > T::one() {
        T::one()
    } else if gnorm >= T::lit(1e-5) {
        T::one() / gnorm
    } else {
        T::lit(1e5)
    }
}

/// Barzilai–Borwein inverse step from the previous gradient `g`, the
/// gradient change `y` and the accepted step `tau`.
///
/// BB1 is `|<g, y>| / (tau ||g||^2)`, BB2 is `||y||^2 / (tau |<g, y>|)`.
pub fn bb_step<T: Real>(g: &DMatrix<T>, y: &DMatrix<T>, tau: T, variant: BbVariant) -> T {
    let gy = g.dot(y).abs();
    match variant {
        BbVariant::Bb1 => gy / (tau * g.norm_squared()),
        BbVariant::Bb2 => y.norm_squared() / (tau * gy),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothStatus {
    Converged,
    HitSingular,
    MaxIterations,
    LineSearchFailed,
    NearSingular,
}

#[derive(Debug, Clone)]
pub struct SmoothRun<T: Real> {
    pub status: SmoothStatus,
    pub point: VarietyPoint<T>,
    pub value: T,
    /// `||grad|| / (1 + ||R||_F)` at `point`.
    pub grad_rel: T,
    pub iterations: usize,
    pub rank_drops: Vec<RankDrop>,
}

/// Factor truncated at the largest singular-value ratio above `ratio`,
/// keeping at least `min_rank` columns. `None` when there is no such gap.
pub fn truncate_rank<T: Real>(p: &VarietyPoint<T>, ratio: T, min_rank: usize) -> Option<DMatrix<T>> {
    let svd = p.svd();
    let k = svd.s.len();
    let mut best: Option<(usize, T)> = None;
    for i in 0..k.saturating_sub(1) {
        let q = if svd.s[i + 1] > T::zero() { svd.s[i] / svd.s[i + 1] } else { T::lit(f64::INFINITY) };
        if q > ratio && best.is_none_or(|(_, b)| q > b) {
            best = Some((i, q));
        }
    }
    let keep = (best?.0 + 1).max(min_rank);
    if keep >= p.rank_bound() {
        return None;
    }
    let mut out = svd.u.columns(0, keep).into_owned();
    for j in 0..keep {
        out.column_mut(j).scale_mut(svd.s[j]);
    }
    Some(out)
}

/// Rank reduction: truncate at a large singular-value gap and re-project.
/// Returns the point unchanged when there is no gap.
pub fn rank_adapt<T: Real>(p: &VarietyPoint<T>, ratio: T) -> Result<VarietyPoint<T>, VarietyError> {
    match truncate_rank(p, ratio, 2) {
        Some(m) => project_onto_variety(&m),
        None => Ok(p.clone()),
    }
}

fn projected<T: Real>(p: &VarietyPoint<T>, egrad: &DMatrix<T>) -> Option<DMatrix<T>> {
    TangentProjector::new(p).ok().map(|proj| proj.project(egrad).into_matrix())
}

/// Riemannian BB descent for `obj` on `B(n,r)` from `start`.
///
/// Every accepted iterate has a value no larger than at `start`. With
/// `delta` set, the run stops at the first new iterate whose spectral norm
/// satisfies `||R||_2^2 >= (1 - delta) n`. `iter_offset` only shifts the
/// iteration numbers recorded for rank drops.
pub fn minimize_on_variety<T: Real, O: Objective<T>>(
    obj: &O,
    start: VarietyPoint<T>,
    cfg: &BbConfig,
    delta: Option<T>,
    iter_offset: usize,
) -> SmoothRun<T> {
    let mut point = start;
    let (mut f, eg) = obj.eval(point.matrix());
    let f_start = f;
    let rscale = T::one() + point.matrix().norm();
    let mut drops = Vec::new();
    let Some(mut grad) = projected(&point, &eg) else {
        return SmoothRun {
            status: SmoothStatus::NearSingular,
            point,
            value: f,
            grad_rel: T::lit(f64::NAN),
            iterations: 0,
            rank_drops: drops,
        };
    };
    let mut hist: VecDeque<T> = VecDeque::from([f]);
    let mut alpha = fallback_step(grad.norm());
    let (gamma, eps, sigma) = (T::lit(cfg.gamma), T::lit(cfg.eps_bb), T::lit(cfg.sigma_ls));
    let tol = T::lit(cfg.tol);

    let finish = |status, point, value, grad: &DMatrix<T>, iterations, drops| SmoothRun {
        status,
        point,
        value,
        grad_rel: grad.norm() / rscale,
        iterations,
        rank_drops: drops,
    };

    for it in 0..cfg.max_iter {
        let gn = grad.norm();
        if gn / rscale < tol {
            return finish(SmoothStatus::Converged, point, f, &grad, it, drops);
        }
        if alpha <= eps || alpha >= T::one() / eps || !alpha.is_finite_val() {
            alpha = fallback_step(gn);
        }
        let mut tau = T::one() / alpha;
        let fref = hist.iter().copied().fold(f, |a, b| a.max(b));
        let mut accepted = None;
        for _ in 0..cfg.max_halvings {
            let y = point.matrix() - &grad * tau;
            if let Ok(p) = project_onto_variety(&y) {
                let (fp, egp) = obj.eval(p.matrix());
                if fp <= fref - gamma * tau * gn * gn {
                    accepted = Some((p, fp, egp));
                    break;
                }
            }
            tau *= sigma;
        }
        let Some((p, fp, egp)) = accepted else {
            return finish(SmoothStatus::LineSearchFailed, point, f, &grad, it, drops);
        };
        if delta.is_some_and(|d| is_singular(&p, d)) {
            let g = projected(&p, &egp).unwrap_or_else(|| DMatrix::from_element(1, 1, T::lit(f64::NAN)));
            return finish(SmoothStatus::HitSingular, p, fp, &g, it + 1, drops);
        }
        let Ok(proj) = TangentProjector::new(&p) else {
            return SmoothRun {
                status: SmoothStatus::NearSingular,
                point: p,
                value: fp,
                grad_rel: T::lit(f64::NAN),
                iterations: it + 1,
                rank_drops: drops,
            };
        };
        let g_new = proj.project(&egp).into_matrix();
        let yv = &g_new - proj.project(&grad).into_matrix();
        alpha = bb_step(&grad, &yv, tau, cfg.variant);
        drop(proj);
        point = p;
        f = fp;
        grad = g_new;
        hist.push_back(f);
        while hist.len() > cfg.memory + 1 {
            hist.pop_front();
        }

        if cfg.rank_period > 0 && (it + 1) % cfg.rank_period == 0 {
            if let Some(m) = truncate_rank(&point, T::lit(cfg.rank_ratio), 2) {
                if let Ok(q) = project_onto_variety(&m) {
                    let (fq, egq) = obj.eval(q.matrix());
                    if fq <= f_start {
                        if let Some(gq) = projected(&q, &egq) {
                            drops.push(RankDrop {
                                iteration: iter_offset + it + 1,
                                from: point.rank_bound(),
                                to: q.rank_bound(),
                            });
                            point = q;
                            f = fq;
                            grad = gq;
                            hist.clear();
                            hist.push_back(f);
                            alpha = fallback_step(grad.norm());
                            if delta.is_some_and(|d| is_singular(&point, d)) {
                                return finish(SmoothStatus::HitSingular, point, f, &grad, it + 1, drops);
                            }
                        }
                    }
                }
            }
        }
    }
    finish(SmoothStatus::MaxIterations, point, f, &grad, cfg.max_iter, drops)
}

/// [`minimize_on_variety`] for the bisection objective.
pub fn solve_smooth<T: Real>(
    lap: &Laplacian<T>,
    start: VarietyPoint<T>,
    cfg: &BbConfig,
    delta: T,
) -> SmoothRun<T> {
    minimize_on_variety(&CutObjective { lap }, start, cfg, Some(delta), 0)
}

#[derive(Debug, Clone)]
pub struct BisectConfig {
    pub bb: BbConfig,
    /// Factor width; `default_rank(n, 2)` when `None`.
    pub rank: Option<usize>,
    /// Limit on singular-point events.
    pub max_events: usize,
    pub eig: EigSettings,
    pub escape: EscapeConfig,
}

impl Default for BisectConfig {
    fn default() -> Self {
        BisectConfig {
            bb: BbConfig::default(),
            rank: None,
            max_events: 50,
            eig: EigSettings::default(),
            escape: EscapeConfig::default(),
        }
    }
}

/// Final factor, report and certificate of a solve.
#[derive(Debug, Clone)]
pub struct Solution<T: Real> {
    pub factor: DMatrix<T>,
    pub report: SolveReport,
    pub certificate: Option<Certificate<T>>,
    /// Present when the run stopped at a certified singular point.
    pub singular_dual: Option<SingularDual<T>>,
    /// Multiplier of the spectral bound (equipartition only).
    pub multiplier: Option<DMatrix<T>>,
}

struct Tally {
    pub inner: usize,
    pub outer: usize,
    pub events: usize,
    pub escapes: usize,
    pub drops: Vec<RankDrop>,
}

/// Smooth descent with rounding, certification and escapes at
/// singular points.
pub fn solve_bisection<T: Real>(lap: &Laplacian<T>, cfg: &BisectConfig) -> Result<Solution<T>, SolveError> {
    cfg.bb.validate()?;
    let clock = Instant::now();
    let n = lap.n();
    let r0 = cfg.rank.unwrap_or_else(|| default_rank(n, 2));
    if r0 < 2 {
        return Err(SolveError::Config("rank must be at least 2".into()));
    }
    let mut point = random_point::<T>(n, r0, cfg.bb.seed).map_err(SolveError::Start)?;
    let mut delta = T::lit(cfg.bb.delta0);
    let mut tally = Tally { inner: 0, outer: 0, events: 0, escapes: 0, drops: Vec::new() };
    let obj = CutObjective { lap };

    let termination = loop {
        tally.outer += 1;
        let run = minimize_on_variety(&obj, point, &cfg.bb, Some(delta), tally.inner);
        tally.inner += run.iterations;
        tally.drops.extend(run.rank_drops.iter().copied());
        point = run.point;
        match run.status {
            SmoothStatus::Converged => break Termination::Converged,
            SmoothStatus::MaxIterations => break Termination::MaxIterations,
            SmoothStatus::LineSearchFailed => break Termination::LineSearchFailed,
            SmoothStatus::NearSingular => break Termination::NearSingular,
            SmoothStatus::HitSingular => {}
        }
        tally.events += 1;
        if tally.events > cfg.max_events {
            break Termination::EventLimit;
        }
        let r = point.rank_bound();
        if let Some(a) = round_to_singular(&point) {
            match certify_or_direction(&a, lap, r, &cfg.escape) {
                Ok(EscapeOutcome::CertifiedOptimal(dual)) => {
                    let factor = a.factor::<T>(r);
                    let report = build_report(lap, &factor, Some(&dual.certificate), Termination::CertifiedSingular, &tally, r0, cfg.bb.seed, clock);
                    return Ok(Solution {
                        factor,
                        certificate: Some(dual.certificate.clone()),
                        singular_dual: Some(dual),
                        multiplier: None,
                        report,
                    });
                }
                Ok(EscapeOutcome::Direction { h, .. }) => {
                    let f_round = cut_objective(lap, &a.factor::<T>(r));
                    if let Ok(step) = escape_step(&a, &h, lap, f_round) {
                        if step.value < run.value {
                            point = step.point;
                            tally.escapes += 1;
                        }
                    }
                }
                Err(_) => {}
            }
        }
        delta *= T::lit(0.5);
    };

    let factor = point.into_matrix();
    let certificate = residues_bisection(&factor, lap, &cfg.eig).ok();
    let report = build_report(lap, &factor, certificate.as_ref(), termination, &tally, r0, cfg.bb.seed, clock);
    Ok(Solution { factor, report, certificate, singular_dual: None, multiplier: None })
}

#[allow(clippy::too_many_arguments)]
fn build_report<T: Real>(
    lap: &Laplacian<T>,
    factor: &DMatrix<T>,
    cert: Option<&Certificate<T>>,
    termination: Termination,
    tally: &Tally,
    r0: usize,
    seed: u64,
    clock: Instant,
) -> SolveReport {
    let f = cut_objective(lap, factor).as_f64();
    SolveReport {
        kind: ProblemKind::Bisect,
        n: lap.n(),
        k: 2,
        r_initial: r0,
        r_final: factor.ncols(),
        obj: 2.0 * f,
        f,
        rp: cert.map(|c| c.rp.as_f64()),
        rd: cert.map(|c| c.rd.as_f64()),
        rc: cert.map(|c| c.rc.as_f64()),
        eig_converged: cert.is_some_and(|c| c.eig_converged),
        inner_iterations: tally.inner,
        outer_iterations: tally.outer,
        singular_events: tally.events,
        escapes: tally.escapes,
        rank_drops: tally.drops.clone(),
        termination,
        beta: None,
        pfeas: None,
        dfeas: None,
        seed,
        wall_time_secs: clock.elapsed().as_secs_f64(),
    }
}
