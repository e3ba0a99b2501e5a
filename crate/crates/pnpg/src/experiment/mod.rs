//! Experiment harness: instance construction, regularization sweeps, and
//! machine-readable result export for the benchmark CLI.

pub mod export;
pub mod generators;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{at_solve, gfb_solve, pds_solve, AtConfig, SplittingConfig};
use crate::error::{Error, Result};
use crate::models::NllModel;
use crate::operators::{
    build_line_projector, build_pet_sensing, gaussian_sensing, DenseVector, OpRef,
    WaveletFamily, WaveletSpec, WaveletSynthesisOp,
};
use crate::prox::{ConvexSet, Regularizer, TvGrid};
use crate::solver::{
    continuation_solve, npgs_solve, pnpg_solve, weight_upper_bound, ContinuationConfig,
    SolverConfig, SolverRun, SolverTrace,
};

pub use generators::{
    detector_log_efficiency, gen_pet_phantom, gen_skyline, mix_seed, rse, simulate_gaussian_noiseless,
    simulate_poisson, PoissonSim,
};

/// Measurement family of an experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    PetPoisson {
        grid_n: usize,
        n_views: usize,
        n_radial: usize,
        target_counts: f64,
    },
    SkylineGaussian {
        p: usize,
        ratio: f64,
    },
}

impl Family {
    pub fn label(&self) -> &'static str {
        match self {
            Family::PetPoisson { .. } => "pet",
            Family::SkylineGaussian { .. } => "skyline",
        }
    }

    /// Desk-scale defaults.
    pub fn pet_default() -> Self {
        Family::PetPoisson {
            grid_n: 32,
            n_views: 30,
            n_radial: 32,
            target_counts: 1e6,
        }
    }

    pub fn skyline_default() -> Self {
        Family::SkylineGaussian { p: 1024, ratio: 0.34 }
    }
}

/// Sparsity penalty selector.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    L1,
    Tv,
}

impl RegKind {
    pub fn label(&self) -> &'static str {
        match self {
            RegKind::L1 => "l1",
            RegKind::Tv => "tv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(RegKind::L1),
            "tv" => Ok(RegKind::Tv),
            other => Err(Error::InvalidInput(format!("unknown regularizer '{other}'"))),
        }
    }
}

/// Solver selector for sweep runs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Pnpg,
    /// Backtracking-only step size (`n = infinity`).
    PnpgInf,
    /// Aggressive step search (`n = m = 0`).
    Pnpg0,
    PnpgCont,
    Npgs,
    At,
    Gfb,
    Pds,
}

impl SolverKind {
    pub fn label(&self) -> &'static str {
        match self {
            SolverKind::Pnpg => "pnpg",
            SolverKind::PnpgInf => "pnpg-inf",
            SolverKind::Pnpg0 => "pnpg0",
            SolverKind::PnpgCont => "pnpg-cont",
            SolverKind::Npgs => "npgs",
            SolverKind::At => "at",
            SolverKind::Gfb => "gfb",
            SolverKind::Pds => "pds",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pnpg" => Ok(SolverKind::Pnpg),
            "pnpg-inf" => Ok(SolverKind::PnpgInf),
            "pnpg0" => Ok(SolverKind::Pnpg0),
            "pnpg-cont" => Ok(SolverKind::PnpgCont),
            "npgs" => Ok(SolverKind::Npgs),
            "at" => Ok(SolverKind::At),
            "gfb" => Ok(SolverKind::Gfb),
            "pds" => Ok(SolverKind::Pds),
            other => Err(Error::InvalidInput(format!("unknown solver '{other}'"))),
        }
    }
}

/// Complete description of a sweep; serialized verbatim into the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub family: Family,
    pub regularizer: RegKind,
    /// Exponents of the regularization weight (`u = 10^a` for PET,
    /// `u = 10^a * U` for the skyline family).
    pub a_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub solvers: Vec<SolverKind>,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.a_grid.is_empty() {
            return Err(Error::InvalidInput("a-grid must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidInput("seeds must be nonempty".into()));
        }
        if self.solvers.is_empty() {
            return Err(Error::InvalidInput("solver list must be nonempty".into()));
        }
        Ok(())
    }
}

/// One sweep row; the trace is exported separately.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub family: String,
    pub solver: String,
    pub a: f64,
    pub seed: u64,
    pub rse: f64,
    pub f_final: f64,
    pub iterations: usize,
    pub nll_evals: usize,
    pub wall_seconds: f64,
    pub converged: bool,
}

/// Everything a solver needs for one measurement realization.
pub struct Instance {
    pub model: NllModel,
    pub x_true: DenseVector,
    pub x0: DenseVector,
    penalty: PenaltyProto,
    /// Multiplier mapping `10^a` to the actual weight.
    pub u_scale: f64,
}

enum PenaltyProto {
    L1 { psi: OpRef },
    Tv { grid: TvGrid },
}

impl Instance {
    /// Regularizer at exponent `a` over the nonnegative orthant.
    pub fn regularizer(&self, a: f64) -> Result<Regularizer> {
        let weight = 10f64.powf(a) * self.u_scale;
        match &self.penalty {
            PenaltyProto::L1 { psi } => Regularizer::l1_analysis(
                Arc::clone(psi),
                ConvexSet::NonnegativeOrthant,
                weight,
            ),
            PenaltyProto::Tv { grid } => {
                Regularizer::isotropic_tv(*grid, ConvexSet::NonnegativeOrthant, weight)
            }
        }
    }
}

/// Builds the measurement realization for `(family, regularizer, seed)`.
pub fn build_instance(family: &Family, reg: RegKind, seed: u64) -> Result<Instance> {
    match *family {
        Family::PetPoisson {
            grid_n,
            n_views,
            n_radial,
            target_counts,
        } => {
            let (activity, attenuation) = gen_pet_phantom(grid_n, seed)?;
            let projector = build_line_projector(grid_n, n_views, n_radial)?;
            let log_eff = detector_log_efficiency(projector.rows(), seed);
            let phi0: OpRef = Arc::new(build_pet_sensing(
                Arc::clone(&projector),
                &attenuation,
                &log_eff,
                1.0,
            )?);
            let sim = simulate_poisson(phi0, &activity, target_counts, seed)?;

            // Count-matched nonnegative backprojection start: scale the
            // adjoint image so its forward projection carries the observed
            // total counts.
            let back = sim.phi.adjoint_apply(&sim.y)?;
            let back = ConvexSet::NonnegativeOrthant.project(&back);
            let forward_total: f64 = sim.phi.apply(&back)?.sum();
            let y_total: f64 = sim.y.sum();
            let x0 = if forward_total > 0.0 {
                &back * (y_total / forward_total)
            } else {
                back
            };

            let model = NllModel::poisson_identity(sim.phi, sim.y, sim.intercept)?;
            let penalty = match reg {
                RegKind::L1 => {
                    let levels = (grid_n.trailing_zeros() as usize).min(6);
                    let spec = WaveletSpec::two_d(WaveletFamily::Haar, levels, grid_n)?;
                    PenaltyProto::L1 {
                        psi: WaveletSynthesisOp::shared(spec),
                    }
                }
                RegKind::Tv => PenaltyProto::Tv {
                    grid: TvGrid::Lattice {
                        rows: grid_n,
                        cols: grid_n,
                    },
                },
            };
            Ok(Instance {
                model,
                x_true: activity,
                x0,
                penalty,
                u_scale: 1.0,
            })
        }
        Family::SkylineGaussian { p, ratio } => {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "measurement ratio must lie in (0,1], got {ratio}"
                )));
            }
            let x_true = gen_skyline(p)?;
            let n = ((p as f64) * ratio).round() as usize;
            let phi: OpRef = Arc::new(gaussian_sensing(n, p, mix_seed(seed, 3))?);
            let y = simulate_gaussian_noiseless(&phi, &x_true)?;
            let x0 = phi.adjoint_apply(&y)? / p as f64;
            let model = NllModel::gaussian_linear(phi, y)?;

            let penalty = match reg {
                RegKind::L1 => {
                    let spec = WaveletSpec::one_d(WaveletFamily::Daubechies4, 3, p)?;
                    PenaltyProto::L1 {
                        psi: WaveletSynthesisOp::shared(spec),
                    }
                }
                RegKind::Tv => PenaltyProto::Tv {
                    grid: TvGrid::Chain { len: p },
                },
            };
            // Weight scale U: the smallest weight that zeroes the
            // unconstrained solution.
            let probe = match &penalty {
                PenaltyProto::L1 { psi } => {
                    Regularizer::l1_analysis(Arc::clone(psi), ConvexSet::WholeSpace, 1.0)?
                }
                PenaltyProto::Tv { grid } => {
                    Regularizer::isotropic_tv(*grid, ConvexSet::WholeSpace, 1.0)?
                }
            };
            let u_scale = weight_upper_bound(&model, &probe)?;
            Ok(Instance {
                model,
                x_true,
                x0,
                penalty,
                u_scale,
            })
        }
    }
}

/// Runs one `(solver, a)` cell on a prepared instance.
pub fn run_single(
    spec: &ExperimentSpec,
    instance: &Instance,
    solver: SolverKind,
    a: f64,
    seed: u64,
) -> Result<(RunResult, SolverTrace)> {
    let reg = instance.regularizer(a)?;
    let base_cfg = SolverConfig {
        epsilon: spec.epsilon,
        max_iterations: spec.max_iterations,
        ..SolverConfig::default()
    };

    let started = Instant::now();
    let run: SolverRun = match solver {
        SolverKind::Pnpg => pnpg_solve(&instance.model, &reg, &instance.x0, &base_cfg)?,
        SolverKind::PnpgInf => pnpg_solve(
            &instance.model,
            &reg,
            &instance.x0,
            &base_cfg.backtracking_only(),
        )?,
        SolverKind::Pnpg0 => pnpg_solve(
            &instance.model,
            &reg,
            &instance.x0,
            &base_cfg.aggressive(),
        )?,
        SolverKind::PnpgCont => {
            let cfg = SolverConfig {
                continuation: Some(ContinuationConfig::default()),
                ..base_cfg
            };
            continuation_solve(&instance.model, &reg, &instance.x0, &cfg)?
        }
        SolverKind::Npgs => npgs_solve(&instance.model, &reg, &instance.x0, &base_cfg)?,
        SolverKind::At => at_solve(
            &instance.model,
            &reg,
            &instance.x0,
            &AtConfig {
                epsilon: spec.epsilon,
                max_iterations: spec.max_iterations,
                ..AtConfig::default()
            },
        )?,
        SolverKind::Gfb => gfb_solve(
            &instance.model,
            &reg,
            &instance.x0,
            &SplittingConfig {
                epsilon: spec.epsilon,
                max_iterations: spec.max_iterations,
                ..SplittingConfig::default()
            },
        )?,
        SolverKind::Pds => pds_solve(
            &instance.model,
            &reg,
            &instance.x0,
            &SplittingConfig {
                epsilon: spec.epsilon,
                max_iterations: spec.max_iterations,
                ..SplittingConfig::default()
            },
        )?,
    };
    let wall_seconds = started.elapsed().as_secs_f64();

    let result = RunResult {
        run_id: run_id(spec, solver, a, seed),
        family: spec.family.label().to_string(),
        solver: solver.label().to_string(),
        a,
        seed,
        rse: rse(&run.x, &instance.x_true)?,
        f_final: run.f_final,
        iterations: run.trace.len(),
        nll_evals: run.nll_evals,
        wall_seconds,
        converged: run.converged,
    };
    Ok((result, run.trace))
}

pub fn run_id(spec: &ExperimentSpec, solver: SolverKind, a: f64, seed: u64) -> String {
    format!(
        "{}-{}-{}-a{}-s{}",
        spec.family.label(),
        spec.regularizer.label(),
        solver.label(),
        a,
        seed
    )
}

/// Sweep output: results plus the per-run traces keyed by run id.
pub struct SweepOutput {
    pub results: Vec<RunResult>,
    pub traces: Vec<(String, SolverTrace)>,
}

/// Runs the full `(solver, a, seed)` grid. Independent runs execute on a
/// worker pool; failures are recorded as NaN rows and the sweep continues.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepOutput> {
    use rayon::prelude::*;

    spec.validate()?;

    // One measurement realization per seed, shared across solvers and
    // weights.
    let mut instances = Vec::new();
    for &seed in &spec.seeds {
        let inst = build_instance(&spec.family, spec.regularizer, seed)?;
        instances.push((seed, Arc::new(inst)));
    }

    let mut tasks = Vec::new();
    for (seed, inst) in &instances {
        for &solver in &spec.solvers {
            for &a in &spec.a_grid {
                tasks.push((*seed, Arc::clone(inst), solver, a));
            }
        }
    }

    let execute = || -> Vec<(RunResult, SolverTrace)> {
        tasks
            .par_iter()
            .map(|(seed, inst, solver, a)| {
                match run_single(spec, inst, *solver, *a, *seed) {
                    Ok(pair) => pair,
                    Err(err) => {
                        eprintln!(
                            "run {} failed: {err}",
                            run_id(spec, *solver, *a, *seed)
                        );
                        (
                            RunResult {
                                run_id: run_id(spec, *solver, *a, *seed),
                                family: spec.family.label().to_string(),
                                solver: solver.label().to_string(),
                                a: *a,
                                seed: *seed,
                                rse: f64::NAN,
                                f_final: f64::NAN,
                                iterations: 0,
                                nll_evals: 0,
                                wall_seconds: 0.0,
                                converged: false,
                            },
                            SolverTrace::default(),
                        )
                    }
                }
            })
            .collect()
    };

    let mut pairs = match spec.threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(execute),
        _ => execute(),
    };

    pairs.sort_by(|a, b| a.0.run_id.cmp(&b.0.run_id));
    let mut results = Vec::with_capacity(pairs.len());
    let mut traces = Vec::with_capacity(pairs.len());
    for (res, trace) in pairs {
        traces.push((res.run_id.clone(), trace));
        results.push(res);
    }
    Ok(SweepOutput { results, traces })
}

/// Resolves the worker count: the `PNPG_THREADS` environment variable
/// overrides the flag.
pub fn resolve_threads(flag: Option<usize>) -> Option<usize> {
    match std::env::var("PNPG_THREADS") {
        Ok(v) => v.parse::<usize>().ok().filter(|&n| n > 0).or(flag),
        Err(_) => flag,
    }
}
