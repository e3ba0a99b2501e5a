//! Reference solvers for head-to-head comparisons: the Auslender-Teboulle
//! accelerated scheme, generalized forward-backward splitting, and
//! primal-dual splitting. All minimize the same composite objective
//! `L(x) + u (||Psi^T x||_1 + I_C(x))`.

use std::time::Instant;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::models::NllModel;
use crate::operators::{ensure_finite, spectral_norm_sq, DenseVector};
use crate::prox::{
    solve_prox, soft_threshold, InnerStopRule, Regularizer, SparsityPenalty,
};
use crate::solver::{
    bb_initial_step, theta_update, IterationRecord, RestartKind, SolverRun, SolverTrace,
    EPS_PRIME,
};

/// Tuning for the Auslender-Teboulle solver.
#[derive(Debug, Clone, Copy)]
pub struct AtConfig {
    pub xi: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub max_inner_iterations: usize,
    /// Momentum sequence reset period (iterations).
    pub restart_period: usize,
}

impl Default for AtConfig {
    fn default() -> Self {
        Self {
            xi: 0.8,
            epsilon: 1e-6,
            max_iterations: 10_000,
            max_inner_iterations: 100,
            restart_period: 200,
        }
    }
}

/// Auslender-Teboulle accelerated proximal gradient with an aggressive
/// step-size search (an increase attempt every iteration) and periodic
/// momentum restart. Intermediate points are convex combinations of
/// feasible points, so no explicit projection is needed.
pub fn at_solve(
    model: &NllModel,
    reg: &Regularizer,
    x0: &DenseVector,
    cfg: &AtConfig,
) -> Result<SolverRun> {
    if !(cfg.xi > 0.0 && cfg.xi < 1.0) {
        return Err(Error::InvalidInput("xi must lie in (0,1)".into()));
    }
    if cfg.restart_period == 0 {
        return Err(Error::InvalidInput("restart period must be positive".into()));
    }
    ensure_finite("at start", x0)?;
    if model.signal_len() != reg.signal_len() || x0.len() != model.signal_len() {
        return Err(Error::dim("at start", model.signal_len(), x0.len()));
    }

    let clock = Instant::now();
    let mut values = 0usize;
    let mut gradients = 0usize;

    let x_start = reg.set.project(x0);
    if !model.in_domain(&x_start) {
        return Err(Error::InvalidInput(
            "projected start lies outside the likelihood domain".into(),
        ));
    }

    let mut beta_curr = bb_initial_step(model, &x_start, &reg.set)?;
    gradients += 2;
    let mut beta_prev = beta_curr;

    let mut x_prev = x_start.clone();
    let mut x_aux = x_start; // the auxiliary sequence
    let mut theta_prev = 1.0f64;
    let mut local_i = 0usize; // iterations since the last restart
    let rule = InnerStopRule::Relative { factor: EPS_PRIME };

    let mut trace = SolverTrace::default();
    let mut converged = false;

    for i in 1..=cfg.max_iterations {
        let mut restart_flag = RestartKind::None;
        if local_i >= cfg.restart_period {
            // Reset the momentum sequence entirely.
            local_i = 0;
            theta_prev = 1.0;
            restart_flag = RestartKind::Periodic;
        }
        local_i += 1;

        // Aggressive search: attempt a larger step every iteration.
        beta_curr = beta_prev / cfg.xi;

        let mut backtracks = 0usize;
        let (x_new, aux_new, l_new, theta_i, inner, eps_hat, major_slack);
        loop {
            let ratio = beta_prev / beta_curr;
            let theta = theta_update(theta_prev, ratio, 2.0, 0.25, local_i);
            let mix = 1.0 / theta;
            let xbar = &x_prev * (1.0 - mix) + &x_aux * mix;
            debug_assert!(model.in_domain(&xbar));

            let grad = model.gradient(&xbar)?;
            gradients += 1;
            let l_xbar = model.value(&xbar)?;
            values += 1;

            let scale = theta * beta_curr;
            let target = &x_aux - &(&grad * scale);
            let prox = solve_prox(
                &target,
                scale * reg.weight,
                reg,
                None,
                &rule,
                cfg.max_inner_iterations,
            )?;
            let candidate = &x_prev * (1.0 - mix) + &prox.x * mix;

            let l_cand = model.value(&candidate)?;
            values += 1;
            let diff = &candidate - &xbar;
            let q = l_xbar + diff.dot(&grad) + diff.dot(&diff) / (2.0 * beta_curr);
            let slack = q - l_cand;
            if l_cand.is_finite() && slack >= -1e-12 * (1.0 + l_cand.abs()) {
                x_new = candidate;
                aux_new = prox.x;
                l_new = l_cand;
                theta_i = theta;
                inner = prox.inner_iterations;
                eps_hat = prox.precision_proxy;
                major_slack = slack;
                break;
            }
            beta_curr *= cfg.xi;
            backtracks += 1;
            if beta_curr < 1e-300 {
                return Err(Error::InvalidInput(
                    "step size underflow during backtracking".into(),
                ));
            }
        }

        let f_new = l_new + reg.weight * reg.penalty_value(&x_new)?;
        let delta = {
            let d = &x_new - &x_prev;
            d.dot(&d)
        };
        trace.records.push(IterationRecord {
            iteration: i,
            f: f_new,
            nll: l_new,
            beta: beta_curr,
            theta: theta_i,
            extrapolation: 1.0 / theta_i,
            restart: restart_flag,
            backtracks,
            inner_iterations: inner,
            eps_hat,
            inner_threshold: f64::NAN,
            delta,
            major_slack,
            cum_nll_evals: values + gradients,
            seconds: clock.elapsed().as_secs_f64(),
        });

        x_prev = x_new;
        x_aux = aux_new;
        theta_prev = theta_i;
        beta_prev = beta_curr;

        if cfg.epsilon > 0.0 {
            let sqrt_delta = delta.sqrt();
            let xn = x_prev.dot(&x_prev).sqrt();
            if sqrt_delta <= cfg.epsilon * xn || sqrt_delta <= cfg.epsilon * 1e-6 {
                converged = true;
                break;
            }
        }
    }

    let f_final = trace.final_f().unwrap_or(f64::INFINITY);
    Ok(SolverRun {
        x: x_prev,
        converged,
        f_final,
        trace,
        nll_evals: values + gradients,
    })
}

/// Tuning for the splitting baselines.
#[derive(Debug, Clone, Copy)]
pub struct SplittingConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Step numerator: `r = step_scale / ||Phi||_2^2` (forward-backward).
    pub step_scale: f64,
    /// Relaxation of the two auxiliary updates.
    pub relaxation: f64,
    /// Mixing weight of the two splitting branches.
    pub mixing: f64,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            max_iterations: 10_000,
            step_scale: 1.8,
            relaxation: 1.0,
            mixing: 0.5,
        }
    }
}

fn require_gaussian(model: &NllModel, who: &str) -> Result<()> {
    match model {
        NllModel::GaussianLinear { .. } => Ok(()),
        _ => Err(Error::InvalidInput(format!(
            "{who} needs a global Lipschitz constant and supports the Gaussian model only"
        ))),
    }
}

fn operator_norm_sq(model: &NllModel) -> Result<f64> {
    let est = spectral_norm_sq(model.op().as_ref(), 1e-10, 20_000)?;
    if est.value <= 0.0 {
        return Err(Error::InvalidInput("zero sensing operator".into()));
    }
    Ok(est.value)
}

/// Generalized forward-backward splitting with two branches: the l1
/// proximal map (closed form, square orthonormal dictionary required) and
/// the convex-set projection.
pub fn gfb_solve(
    model: &NllModel,
    reg: &Regularizer,
    x0: &DenseVector,
    cfg: &SplittingConfig,
) -> Result<SolverRun> {
    require_gaussian(model, "gfb_solve")?;
    let psi = match &reg.sparsity {
        SparsityPenalty::L1Analysis { psi } if psi.rows() == psi.cols() => psi,
        SparsityPenalty::L1Analysis { .. } => {
            return Err(Error::InvalidInput(
                "gfb_solve needs a square orthonormal dictionary".into(),
            ))
        }
        SparsityPenalty::IsotropicTv { .. } => {
            return Err(Error::InvalidInput(
                "gfb_solve supports the l1-analysis penalty only".into(),
            ))
        }
    };
    ensure_finite("gfb start", x0)?;

    let clock = Instant::now();
    let mut values = 0usize;
    let mut gradients = 0usize;
    let lip = operator_norm_sq(model)?;
    let r = cfg.step_scale / lip;
    let w = cfg.mixing;
    let lambda = cfg.relaxation;

    let mut x = reg.set.project(x0);
    let mut z1 = x.clone();
    let mut z2 = x.clone();
    let mut trace = SolverTrace::default();
    let mut converged = false;

    for i in 1..=cfg.max_iterations {
        let grad = model.gradient(&x)?;
        gradients += 1;
        let step = &grad * r;

        let arg1 = &(&x * 2.0) - &z1 - &step;
        let coeffs = psi.adjoint_apply(&arg1)?;
        let prox1 = psi.apply(&soft_threshold(&coeffs, r * reg.weight / w))?;
        z1 += &(&(&prox1 - &x) * lambda);

        let arg2 = &(&x * 2.0) - &z2 - &step;
        let proj2 = reg.set.project(&arg2);
        z2 += &(&(&proj2 - &x) * lambda);

        let x_new = &z1 * w + &z2 * (1.0 - w);
        let delta = {
            let d = &x_new - &x;
            d.dot(&d)
        };
        x = x_new;

        let l = model.value(&x)?;
        values += 1;
        let f = l + reg.weight * reg.penalty_value(&x)?;
        trace.records.push(IterationRecord {
            iteration: i,
            f,
            nll: l,
            beta: r,
            theta: f64::NAN,
            extrapolation: 0.0,
            restart: RestartKind::None,
            backtracks: 0,
            inner_iterations: 0,
            eps_hat: 0.0,
            inner_threshold: f64::NAN,
            delta,
            major_slack: f64::NAN,
            cum_nll_evals: values + gradients,
            seconds: clock.elapsed().as_secs_f64(),
        });

        if cfg.epsilon > 0.0 {
            let sqrt_delta = delta.sqrt();
            let xn = x.dot(&x).sqrt();
            if sqrt_delta <= cfg.epsilon * xn || sqrt_delta <= cfg.epsilon * 1e-6 {
                converged = true;
                break;
            }
        }
    }

    let f_final = trace.final_f().unwrap_or(f64::INFINITY);
    Ok(SolverRun {
        x,
        converged,
        f_final,
        trace,
        nll_evals: values + gradients,
    })
}

/// Primal-dual splitting with the dual confined to the box `[-u, u]^{p'}`.
/// Steps solve `tau (sigma + ||Phi||^2/2) = 1` with `sigma = tau`, making
/// the relaxation evaluate to 1.
pub fn pds_solve(
    model: &NllModel,
    reg: &Regularizer,
    x0: &DenseVector,
    cfg: &SplittingConfig,
) -> Result<SolverRun> {
    require_gaussian(model, "pds_solve")?;
    let psi = match &reg.sparsity {
        SparsityPenalty::L1Analysis { psi } => psi,
        SparsityPenalty::IsotropicTv { .. } => {
            return Err(Error::InvalidInput(
                "pds_solve supports the l1-analysis penalty only".into(),
            ))
        }
    };
    ensure_finite("pds start", x0)?;

    let clock = Instant::now();
    let mut values = 0usize;
    let mut gradients = 0usize;
    let lip = operator_norm_sq(model)?;
    // Positive root of tau^2 + tau L/2 = 1.
    let tau = (-lip / 2.0 + (lip * lip / 4.0 + 4.0).sqrt()) / 2.0;
    let sigma = tau;
    let rho = 2.0 - 0.5 * lip / (1.0 / tau - sigma);
    let u = reg.weight;

    let mut x = reg.set.project(x0);
    let mut z: DenseVector = Array1::zeros(psi.cols());
    let mut trace = SolverTrace::default();
    let mut converged = false;

    for i in 1..=cfg.max_iterations {
        let grad = model.gradient(&x)?;
        gradients += 1;

        let coeffs = psi.adjoint_apply(&x)?;
        let z_bar = (&z + &(&coeffs * sigma)).mapv(|v| v.clamp(-u, u));
        let dual_dir = psi.apply(&(&(&z_bar * 2.0) - &z))?;
        let x_bar = reg.set.project(&(&x - &(&grad * tau) - &(&dual_dir * tau)));

        z += &(&(&z_bar - &z) * rho);
        let x_new = &x + &(&(&x_bar - &x) * rho);
        let delta = {
            let d = &x_new - &x;
            d.dot(&d)
        };
        x = x_new;

        let l = model.value(&x)?;
        values += 1;
        let f = l + reg.weight * reg.penalty_value(&x)?;
        trace.records.push(IterationRecord {
            iteration: i,
            f,
            nll: l,
            beta: tau,
            theta: f64::NAN,
            extrapolation: 0.0,
            restart: RestartKind::None,
            backtracks: 0,
            inner_iterations: 0,
            eps_hat: 0.0,
            inner_threshold: f64::NAN,
            delta,
            major_slack: f64::NAN,
            cum_nll_evals: values + gradients,
            seconds: clock.elapsed().as_secs_f64(),
        });

        debug_assert!(z.iter().all(|&v| v.abs() <= u + 1e-12));

        if cfg.epsilon > 0.0 {
            let sqrt_delta = delta.sqrt();
            let xn = x.dot(&x).sqrt();
            if sqrt_delta <= cfg.epsilon * xn || sqrt_delta <= cfg.epsilon * 1e-6 {
                converged = true;
                break;
            }
        }
    }

    let f_final = trace.final_f().unwrap_or(f64::INFINITY);
    Ok(SolverRun {
        x,
        converged,
        f_final,
        trace,
        nll_evals: values + gradients,
    })
}
