//! Projected Nesterov proximal-gradient solver.
//!
//! One iteration extrapolates the two latest iterates, projects onto the
//! feasible set, takes an inexact proximal-gradient step, and accepts once
//! the local majorization condition holds. The step size adapts both ways:
//! backtracking shrinks it, and after a patience window without shrinks an
//! increase is attempted. Restarts reset the momentum when the extrapolated
//! point leaves the likelihood domain or the objective increases.

use std::time::Instant;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::models::NllModel;
use crate::operators::{ensure_finite, DenseVector};
use crate::prox::{solve_prox, ConvexSet, InnerStopRule, Regularizer, SparsityPenalty};

/// Relative inner-tolerance fallback used when the displacement-based
/// thresholds are not yet defined (first outer iteration, stagnation).
pub const EPS_PRIME: f64 = 1e-5;

/// Continuation schedule: stages solve the same problem with weights
/// `u_k = max(u, start_factor * U * decay^k)` warm-started in sequence.
#[derive(Debug, Clone, Copy)]
pub struct ContinuationConfig {
    /// First stage weight as a fraction of the zero-solution bound `U`.
    pub start_factor: f64,
    /// Geometric decay between stages, in (0,1).
    pub decay: f64,
    /// Optional cap on the number of stages.
    pub stages: Option<usize>,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            start_factor: 0.1,
            decay: 0.2,
            stages: None,
        }
    }
}

/// Tuning constants of the solver.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Momentum growth control, `>= 2`.
    pub gamma: f64,
    /// Momentum offset, in `[0, 1/4]`.
    pub b: f64,
    /// Step-size patience `n`: iterations without step events before an
    /// increase attempt. `None` disables increases (backtracking only).
    pub patience: Option<usize>,
    /// Patience increment `m` applied after a failed increase attempt.
    pub patience_increment: usize,
    /// Step-size adaptation factor, in (0,1).
    pub xi: f64,
    /// Inner-iteration tolerance factor, in (0,1).
    pub eta: f64,
    /// Outer convergence threshold; `0` runs to `max_iterations`.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub max_inner_iterations: usize,
    /// Momentum restart on objective increase / domain exit.
    pub restart: bool,
    /// Force the step ratio `B = 1` in the momentum recursion (valid when
    /// the step size never increases; recovers the classical sequence).
    pub unit_step_ratio: bool,
    pub continuation: Option<ContinuationConfig>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            b: 0.0,
            patience: Some(4),
            patience_increment: 4,
            xi: 0.8,
            eta: 1e-2,
            epsilon: 1e-6,
            max_iterations: 10_000,
            max_inner_iterations: 100,
            restart: true,
            unit_step_ratio: false,
            continuation: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 2.0) {
            return Err(Error::InvalidInput(format!(
                "gamma must be >= 2, got {}",
                self.gamma
            )));
        }
        if !(0.0..=0.25).contains(&self.b) {
            return Err(Error::InvalidInput(format!(
                "b must lie in [0, 1/4], got {}",
                self.b
            )));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::InvalidInput(format!(
                "xi must lie in (0,1), got {}",
                self.xi
            )));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "eta must lie in (0,1), got {}",
                self.eta
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidInput("epsilon must be nonnegative".into()));
        }
        if self.max_iterations == 0 || self.max_inner_iterations == 0 {
            return Err(Error::InvalidInput(
                "iteration limits must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Backtracking-only variant (`n = infinity`).
    pub fn backtracking_only(mut self) -> Self {
        self.patience = None;
        self
    }

    /// Aggressive variant (`n = m = 0`): an increase attempt every iteration.
    pub fn aggressive(mut self) -> Self {
        self.patience = Some(0);
        self.patience_increment = 0;
        self
    }
}

/// Why the momentum was reset while producing an iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartKind {
    None,
    Domain,
    Function,
    /// Scheduled momentum reset (used by the Auslender-Teboulle baseline).
    Periodic,
}

impl RestartKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RestartKind::None => "none",
            RestartKind::Domain => "domain",
            RestartKind::Function => "function",
            RestartKind::Periodic => "periodic",
        }
    }
}

/// Per-iteration record of an accepted iterate.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Composite objective `L + u * penalty` (iterates stay feasible).
    pub f: f64,
    /// Data-fidelity value at the iterate.
    pub nll: f64,
    pub beta: f64,
    pub theta: f64,
    /// Extrapolation weight used for this iterate.
    pub extrapolation: f64,
    pub restart: RestartKind,
    pub backtracks: usize,
    pub inner_iterations: usize,
    /// Precision proxy reported by the proximal solve.
    pub eps_hat: f64,
    /// Absolute inner threshold in force (NaN when the relative fallback
    /// rule was used).
    pub inner_threshold: f64,
    /// Squared displacement `||x_i - x_{i-1}||^2`.
    pub delta: f64,
    /// Majorization margin `Q - L` at acceptance (>= -tolerance).
    pub major_slack: f64,
    pub cum_nll_evals: usize,
    pub seconds: f64,
}

/// Stream of per-iteration records.
#[derive(Debug, Clone, Default)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_f(&self) -> Option<f64> {
        self.records.last().map(|r| r.f)
    }

    /// Appends another trace, continuing iteration numbering and the
    /// cumulative evaluation/time columns.
    pub fn extend_continued(&mut self, other: SolverTrace) {
        let (iter0, evals0, secs0) = self
            .records
            .last()
            .map(|r| (r.iteration, r.cum_nll_evals, r.seconds))
            .unwrap_or((0, 0, 0.0));
        for mut rec in other.records {
            rec.iteration += iter0;
            rec.cum_nll_evals += evals0;
            rec.seconds += secs0;
            self.records.push(rec);
        }
    }
}

/// Solve outcome: final iterate, convergence flag, and the trace.
pub struct SolverRun {
    pub x: DenseVector,
    pub converged: bool,
    pub f_final: f64,
    pub trace: SolverTrace,
    /// Total data-fidelity evaluations (values plus gradients).
    pub nll_evals: usize,
}

/// Momentum recursion: `theta_i = 1` for `i <= 1`, else
/// `1/gamma + sqrt(b + B * theta_prev^2)` with `B` the step ratio.
pub fn theta_update(theta_prev: f64, step_ratio: f64, gamma: f64, b: f64, i: usize) -> f64 {
    if i <= 1 {
        1.0
    } else {
        1.0 / gamma + (b + step_ratio * theta_prev * theta_prev).sqrt()
    }
}

/// Inner-iteration stop rule for the proximal solve of one outer
/// iteration: displacement-based for TV, residual-based for l1, with a
/// relative fallback when the governing quantity is undefined or zero.
pub fn inner_stop_rule(
    penalty: &SparsityPenalty,
    eta_eff: f64,
    delta_prev: Option<f64>,
    psi_diff_norm: Option<f64>,
) -> InnerStopRule {
    let threshold = match penalty {
        SparsityPenalty::IsotropicTv { .. } => delta_prev.map(|d| eta_eff * d.sqrt()),
        SparsityPenalty::L1Analysis { .. } => psi_diff_norm.map(|n| eta_eff * n),
    };
    match threshold {
        Some(t) if t > 0.0 => InnerStopRule::Absolute { threshold: t },
        _ => InnerStopRule::Relative { factor: EPS_PRIME },
    }
}

/// Barzilai-Borwein estimate of the initial step size from one projected
/// gradient probe. Falls back to the norm-ratio secant and finally to 1.
pub fn bb_initial_step(model: &NllModel, x0: &DenseVector, set: &ConvexSet) -> Result<f64> {
    if !model.in_domain(x0) {
        return Err(Error::DomainViolation(
            "BB probe requires a start inside the likelihood domain".into(),
        ));
    }
    let g0 = model.gradient(x0)?;
    let g0_norm = g0.dot(&g0).sqrt();
    let mut t0 = 1e-3 * (1.0 + x0.dot(x0).sqrt()) / (1.0 + g0_norm);

    // Shrink the probe until it stays inside the domain.
    let mut x1 = set.project(&(x0 - &(&g0 * t0)));
    let mut tries = 0;
    while !model.in_domain(&x1) && tries < 8 {
        t0 *= 0.1;
        x1 = set.project(&(x0 - &(&g0 * t0)));
        tries += 1;
    }
    if !model.in_domain(&x1) {
        return Ok(1.0);
    }

    let dx = &x1 - x0;
    let dx_sq = dx.dot(&dx);
    if dx_sq == 0.0 {
        return Ok(1.0);
    }
    let g1 = model.gradient(&x1)?;
    let dg = &g1 - &g0;
    let denom = dx.dot(&dg);
    if denom > 0.0 {
        return Ok(dx_sq / denom);
    }
    let dg_norm = dg.dot(&dg).sqrt();
    if dg_norm > 0.0 {
        return Ok(dx_sq.sqrt() / dg_norm);
    }
    Ok(1.0)
}

struct PenaltyCache<'a> {
    reg: &'a Regularizer,
}

impl<'a> PenaltyCache<'a> {
    /// Analysis coefficients for l1 regularizers, `None` for TV.
    fn coeffs(&self, x: &DenseVector) -> Result<Option<DenseVector>> {
        match &self.reg.sparsity {
            SparsityPenalty::L1Analysis { psi } => Ok(Some(psi.adjoint_apply(x)?)),
            SparsityPenalty::IsotropicTv { .. } => Ok(None),
        }
    }

    fn penalty(&self, x: &DenseVector, coeffs: Option<&DenseVector>) -> Result<f64> {
        match (&self.reg.sparsity, coeffs) {
            (SparsityPenalty::L1Analysis { .. }, Some(c)) => Ok(c.mapv(f64::abs).sum()),
            _ => self.reg.penalty_value(x),
        }
    }
}

/// Runs the projected Nesterov proximal-gradient iteration.
pub fn pnpg_solve(
    model: &NllModel,
    reg: &Regularizer,
    x0: &DenseVector,
    cfg: &SolverConfig,
) -> Result<SolverRun> {
    run_iteration(model, reg, x0, cfg)
}

/// Unconstrained variant: identical iteration over the whole space
/// (sparsity penalty only, projection inactive).
pub fn npgs_solve(
    model: &NllModel,
    reg: &Regularizer,
    x0: &DenseVector,
    cfg: &SolverConfig,
) -> Result<SolverRun> {
    let unconstrained = reg.with_set(ConvexSet::WholeSpace);
    run_iteration(model, &unconstrained, x0, cfg)
}

/// Upper bound `U` on the useful regularization weight: at `u >= U` the
/// zero vector minimizes the unconstrained objective. Uses the analysis
/// coefficients of the gradient at zero for l1 and the plain gradient
/// sup-norm as the TV surrogate.
pub fn weight_upper_bound(model: &NllModel, reg: &Regularizer) -> Result<f64> {
    let zero = Array1::zeros(model.signal_len());
    let g0 = model.gradient(&zero)?;
    let bound = match &reg.sparsity {
        SparsityPenalty::L1Analysis { psi } => psi
            .adjoint_apply(&g0)?
            .iter()
            .fold(0.0f64, |a, &v| a.max(v.abs())),
        SparsityPenalty::IsotropicTv { .. } => {
            g0.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
        }
    };
    Ok(bound)
}

/// Solves a decreasing-weight sequence of problems, warm-starting each
/// stage from the last, with a loose threshold on all but the final stage.
pub fn continuation_solve(
    model: &NllModel,
    reg: &Regularizer,
    x0: &DenseVector,
    cfg: &SolverConfig,
) -> Result<SolverRun> {
    let schedule_cfg = cfg.continuation.ok_or_else(|| {
        Error::InvalidInput("continuation_solve requires cfg.continuation".into())
    })?;
    if !(schedule_cfg.start_factor > 0.0) || !(schedule_cfg.decay > 0.0 && schedule_cfg.decay < 1.0)
    {
        return Err(Error::InvalidInput(
            "continuation needs start_factor > 0 and decay in (0,1)".into(),
        ));
    }

    let u_target = reg.weight;
    let bound = weight_upper_bound(model, reg)?;
    let mut weights = Vec::new();
    let mut u = schedule_cfg.start_factor * bound;
    while u > u_target {
        weights.push(u);
        u *= schedule_cfg.decay;
        if let Some(cap) = schedule_cfg.stages {
            if weights.len() + 1 >= cap {
                break;
            }
        }
    }
    weights.push(u_target);

    let mut warm = x0.clone();
    let mut trace = SolverTrace::default();
    let mut converged = false;
    let mut nll_evals = 1; // the U-bound gradient above
    let mut f_final = f64::INFINITY;

    let last = weights.len() - 1;
    for (k, &u_k) in weights.iter().enumerate() {
        let stage_reg = reg.with_weight(u_k)?;
        let mut stage_cfg = *cfg;
        stage_cfg.continuation = None;
        if k != last {
            stage_cfg.epsilon = 1e-4;
        }
        let run = run_iteration(model, &stage_reg, &warm, &stage_cfg)?;
        warm = run.x;
        converged = run.converged;
        f_final = run.f_final;
        nll_evals += run.nll_evals;
        trace.extend_continued(run.trace);
    }

    Ok(SolverRun {
        x: warm,
        converged,
        f_final,
        trace,
        nll_evals,
    })
}

#[derive(Default)]
struct EvalCounter {
    values: usize,
    gradients: usize,
}

impl EvalCounter {
    fn total(&self) -> usize {
        self.values + self.gradients
    }
}

fn norm_sq(v: &DenseVector) -> f64 {
    v.dot(v)
}

fn run_iteration(
    model: &NllModel,
    reg: &Regularizer,
    x0: &DenseVector,
    cfg: &SolverConfig,
) -> Result<SolverRun> {
    cfg.validate()?;
    if model.signal_len() != reg.signal_len() {
        return Err(Error::dim(
            "model vs regularizer",
            model.signal_len(),
            reg.signal_len(),
        ));
    }
    ensure_finite("solver start", x0)?;
    if x0.len() != model.signal_len() {
        return Err(Error::dim("solver start", model.signal_len(), x0.len()));
    }

    let clock = Instant::now();
    let mut evals = EvalCounter::default();
    let cache = PenaltyCache { reg };

    // Projected start must be inside the domain with finite objective.
    let x_start = reg.set.project(x0);
    if !model.in_domain(&x_start) {
        return Err(Error::InvalidInput(
            "projected start lies outside the likelihood domain".into(),
        ));
    }
    let l_start = model.value(&x_start)?;
    evals.values += 1;
    if !l_start.is_finite() {
        return Err(Error::InvalidInput(
            "objective is not finite at the projected start".into(),
        ));
    }
    let coeffs_start = cache.coeffs(&x_start)?;
    let f_start = l_start + reg.weight * cache.penalty(&x_start, coeffs_start.as_ref())?;

    let beta_bb = bb_initial_step(model, &x_start, &reg.set)?;
    evals.gradients += 2;

    // State: accepted iterates x^{(i-1)}, x^{(i-2)} and their bookkeeping.
    let mut x_im1 = x_start;
    let mut x_im2 = x_im1.clone();
    let mut coeffs_im1 = coeffs_start;
    let mut coeffs_im2 = coeffs_im1.clone();
    let mut l_im1 = l_start;
    let mut f_im1 = f_start;
    let mut theta_prev = 1.0f64;
    let mut beta_curr = if beta_bb.is_finite() && beta_bb > 0.0 {
        beta_bb
    } else {
        1.0
    };
    let mut beta_prev = beta_curr;
    let mut kappa: usize = 0;
    let mut n_eff = cfg.patience;
    let mut eta_eff = cfg.eta;
    let mut delta_prev: Option<f64> = None;

    let mut best_x = x_im1.clone();
    let mut best_f = f_im1;
    let mut trace = SolverTrace::default();
    let mut converged = false;

    let mut i = 1usize;
    let mut consecutive_restarts = 0usize;
    let mut pending_restart = RestartKind::None;

    while i <= cfg.max_iterations {
        kappa += 1;
        let mut backtracks = 0usize;
        let mut restart_flag = pending_restart;
        pending_restart = RestartKind::None;

        // l1 inner threshold driver: ||Psi^T (x^{(i-1)} - x^{(i-2)})||.
        let psi_diff_norm = match (&coeffs_im1, &coeffs_im2) {
            (Some(a), Some(b)) if i > 1 => {
                Some((a - b).mapv(|e| e * e).sum().sqrt())
            }
            _ => None,
        };
        let base_rule = inner_stop_rule(
            &reg.sparsity,
            eta_eff,
            if i > 1 { delta_prev } else { None },
            psi_diff_norm,
        );

        // Backtracking search for a step size satisfying majorization.
        let (x_cand, l_cand, theta_i, extrapolation, prox_info, major_slack, rule_threshold);
        loop {
            let step_ratio = if cfg.unit_step_ratio {
                1.0
            } else {
                beta_prev / beta_curr
            };
            let theta = theta_update(theta_prev, step_ratio, cfg.gamma, cfg.b, i);
            let momentum = (theta_prev - 1.0) / theta;
            let mut xbar = &x_im1 + &((&x_im1 - &x_im2) * momentum);
            reg.set.project_inplace(&mut xbar);

            if !model.in_domain(&xbar) {
                // Domain restart: drop the momentum and redo this pass.
                theta_prev = 1.0;
                if restart_flag == RestartKind::None {
                    restart_flag = RestartKind::Domain;
                }
                continue;
            }

            let grad = model.gradient(&xbar)?;
            evals.gradients += 1;
            let l_xbar = model.value(&xbar)?;
            evals.values += 1;

            let target = &xbar - &(&grad * beta_curr);
            let lambda = beta_curr * reg.weight;
            let mut rule = base_rule;
            let mut prox = solve_prox(
                &target,
                lambda,
                reg,
                coeffs_im1.as_ref(),
                &rule,
                cfg.max_inner_iterations,
            )?;
            let mut delta_cand = norm_sq(&(&prox.x - &x_im1));
            // Keep the proximal error below the displacement (the
            // monotonicity condition); one retry with a tighter rule.
            if prox.precision_proxy > delta_cand.sqrt() && delta_cand > 0.0 {
                rule = rule.tightened(0.1);
                prox = solve_prox(
                    &target,
                    lambda,
                    reg,
                    coeffs_im1.as_ref(),
                    &rule,
                    cfg.max_inner_iterations,
                )?;
                delta_cand = norm_sq(&(&prox.x - &x_im1));
            }
            let _ = delta_cand;

            let l_new = model.value(&prox.x)?;
            evals.values += 1;
            let diff = &prox.x - &xbar;
            let q = l_xbar + diff.dot(&grad) + norm_sq(&diff) / (2.0 * beta_curr);
            let slack = q - l_new;
            if l_new.is_finite() && slack >= -1e-12 * (1.0 + l_new.abs()) {
                rule_threshold = match rule {
                    InnerStopRule::Absolute { threshold } => threshold,
                    InnerStopRule::Relative { .. } => f64::NAN,
                };
                x_cand = prox.x;
                l_cand = l_new;
                theta_i = theta;
                extrapolation = momentum;
                prox_info = (prox.inner_iterations, prox.precision_proxy);
                major_slack = slack;
                break;
            }

            // Majorization failed: shrink, and widen the patience window
            // if this was a failed increase attempt.
            if beta_curr > beta_prev {
                if let (Some(n), true) = (n_eff, cfg.patience_increment > 0) {
                    n_eff = Some(n + cfg.patience_increment);
                }
            }
            beta_curr *= cfg.xi;
            kappa = 0;
            backtracks += 1;
            if beta_curr < 1e-300 {
                return Err(Error::InvalidInput(
                    "step size underflow during backtracking".into(),
                ));
            }
        }

        let coeffs_cand = cache.coeffs(&x_cand)?;
        let f_cand = l_cand + reg.weight * cache.penalty(&x_cand, coeffs_cand.as_ref())?;

        // Function restart: discard the iterate and redo with the momentum
        // reset; tighten the inner tolerance on consecutive restarts, and
        // fall back to the previous iterate after three in a row.
        if cfg.restart && i > 1 && f_cand > f_im1 {
            consecutive_restarts += 1;
            if consecutive_restarts <= 3 {
                if consecutive_restarts >= 2 {
                    eta_eff /= 10.0;
                }
                theta_prev = 1.0;
                kappa = 0;
                pending_restart = RestartKind::Function;
                continue;
            }
        }
        let (x_acc, l_acc, f_acc, coeffs_acc) =
            if cfg.restart && i > 1 && f_cand > f_im1 {
                // Livelock guard: keep the previous iterate.
                (x_im1.clone(), l_im1, f_im1, coeffs_im1.clone())
            } else {
                (x_cand, l_cand, f_cand, coeffs_cand)
            };
        consecutive_restarts = 0;

        let delta_i = norm_sq(&(&x_acc - &x_im1));
        trace.records.push(IterationRecord {
            iteration: i,
            f: f_acc,
            nll: l_acc,
            beta: beta_curr,
            theta: theta_i,
            extrapolation,
            restart: restart_flag,
            backtracks,
            inner_iterations: prox_info.0,
            eps_hat: prox_info.1,
            inner_threshold: rule_threshold,
            delta: delta_i,
            major_slack,
            cum_nll_evals: evals.total(),
            seconds: clock.elapsed().as_secs_f64(),
        });

        if f_acc <= best_f {
            best_f = f_acc;
            best_x = x_acc.clone();
        }

        // Shift the iterate window.
        x_im2 = std::mem::replace(&mut x_im1, x_acc);
        coeffs_im2 = std::mem::replace(&mut coeffs_im1, coeffs_acc);
        l_im1 = l_acc;
        f_im1 = f_acc;
        theta_prev = theta_i;
        beta_prev = beta_curr;
        delta_prev = Some(delta_i);

        // Outer convergence test, with an absolute floor for the zero
        // solution.
        if cfg.epsilon > 0.0 {
            let sqrt_delta = delta_i.sqrt();
            let xn = norm_sq(&x_im1).sqrt();
            if sqrt_delta <= cfg.epsilon * xn || sqrt_delta <= cfg.epsilon * 1e-6 {
                converged = true;
                break;
            }
        }

        // Step-size adaptation for the next iteration.
        if let Some(n) = n_eff {
            if kappa >= n {
                kappa = 0;
                beta_curr /= cfg.xi;
            }
        }

        i += 1;
    }

    let (x_out, f_out) = if converged {
        (x_im1, f_im1)
    } else {
        (best_x, best_f)
    };
    Ok(SolverRun {
        x: x_out,
        converged,
        f_final: f_out,
        trace,
        nll_evals: evals.total(),
    })
}
