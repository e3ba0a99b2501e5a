//! Scratch calibration probe (not part of the deliverable test suite).
use std::sync::Arc;
use pnpg::experiment::*;
use pnpg::solver::*;
use pnpg::prox::*;
use pnpg::models::NllModel;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("pet");
    match which {
        "pet" => pet_sweep(),
        "adapt" => adapt_ratio(),
        "skyline" => skyline_probe(),
        "beta" => beta_traj(),
        "adapt2" => adapt_scan(),
        "adapt3" => adapt_wide(),
        "adapt4" => adapt_depth(),
        "adapt5" => adapt_geom(),
        "sky2" => sky2(),
        _ => eprintln!("unknown probe"),
    }
}

fn pet_sweep() {
    for reg_kind in [RegKind::Tv, RegKind::L1] {
        let family = Family::PetPoisson { grid_n: 32, n_views: 30, n_radial: 32, target_counts: 1e6 };
        let inst = build_instance(&family, reg_kind, 1).unwrap();
        println!("--- PET {:?} (counts 1e6, seed 1) ---", reg_kind);
        for a10 in (-8..=6).step_by(2) { // a from -4 to 3 step 1
            let a = a10 as f64 / 2.0;
            let reg = inst.regularizer(a).unwrap();
            let cfg = SolverConfig { epsilon: 1e-6, max_iterations: 3000, ..Default::default() };
            let t0 = std::time::Instant::now();
            match pnpg_solve(&inst.model, &reg, &inst.x0, &cfg) {
                Ok(run) => {
                    let r = rse(&run.x, &inst.x_true).unwrap();
                    println!("a={a:5.1}  rse={r:10.5}  iters={:5}  evals={:6}  conv={}  {:.2}s",
                        run.trace.len(), run.nll_evals, run.converged, t0.elapsed().as_secs_f64());
                }
                Err(e) => println!("a={a:5.1}  FAILED: {e}"),
            }
        }
    }
}

fn adapt_ratio() {
    let a: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let family = Family::PetPoisson { grid_n: 32, n_views: 30, n_radial: 32, target_counts: 1e6 };
    let inst = build_instance(&family, RegKind::L1, 1).unwrap();
    let reg = inst.regularizer(a).unwrap();
    // reference optimum
    let tight = SolverConfig { epsilon: 1e-11, max_iterations: 20_000, ..Default::default() };
    let reference = pnpg_solve(&inst.model, &reg, &inst.x0, &tight).unwrap();
    let f_star = reference.f_final;
    let f0 = {
        let l = inst.model.value(&inst.x0).unwrap();
        l + reg.weight * reg.penalty_value(&inst.x0).unwrap()
    };
    let target = f_star + 1e-4 * f0;
    println!("a={a} f0={f0:.4e} f*={f_star:.6e} target={target:.6e}");
    for (name, cfg) in [
        ("pnpg(4,4)", SolverConfig { epsilon: 1e-9, max_iterations: 20_000, ..Default::default() }),
        ("pnpg-inf", SolverConfig { epsilon: 1e-9, max_iterations: 20_000, ..Default::default() }.backtracking_only()),
        ("pnpg0", SolverConfig { epsilon: 1e-9, max_iterations: 20_000, ..Default::default() }.aggressive()),
    ] {
        let run = pnpg_solve(&inst.model, &reg, &inst.x0, &cfg).unwrap();
        let hit = run.trace.records.iter().find(|r| r.f <= target);
        match hit {
            Some(rec) => println!("{name:10}: evals to target = {:6} (iter {:5}), total iters {:5}", rec.cum_nll_evals, rec.iteration, run.trace.len()),
            None => println!("{name:10}: target NOT reached (final f {:.6e}, iters {})", run.f_final, run.trace.len()),
        }
    }
}

fn skyline_probe() {
    let family = Family::SkylineGaussian { p: 1024, ratio: 0.34 };
    for seed in [1u64, 2] {
        let inst = build_instance(&family, RegKind::L1, seed).unwrap();
        println!("--- skyline seed {seed} (U={:.4e}) ---", {
            let probe = inst.regularizer(0.0).unwrap(); probe.weight
        });
        for a in [-7.0f64, -6.0, -5.0, -4.0, -3.0, -2.0] {
            let reg = inst.regularizer(a).unwrap();
            let cfg = SolverConfig { epsilon: 1e-6, max_iterations: 10_000, ..Default::default() };
            let t0 = std::time::Instant::now();
            let pn = pnpg_solve(&inst.model, &reg, &inst.x0, &cfg).unwrap();
            let t1 = std::time::Instant::now();
            let np = npgs_solve(&inst.model, &reg, &inst.x0, &cfg).unwrap();
            println!("a={a:4.0}: pnpg rse={:9.5} ({:5} it, {:.1}s) | npgs rse={:9.5} ({:5} it, {:.1}s)",
                rse(&pn.x, &inst.x_true).unwrap(), pn.trace.len(), (t1 - t0).as_secs_f64(),
                rse(&np.x, &inst.x_true).unwrap(), np.trace.len(), t1.elapsed().as_secs_f64());
        }
    }
}

#[allow(dead_code)]
fn beta_traj() {
    let a: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let family = Family::PetPoisson { grid_n: 32, n_views: 30, n_radial: 32, target_counts: 1e6 };
    let inst = build_instance(&family, RegKind::L1, 1).unwrap();
    let reg = inst.regularizer(a).unwrap();
    for (name, cfg) in [
        ("pnpg(4,4)", SolverConfig { epsilon: 1e-9, max_iterations: 3000, ..Default::default() }),
        ("pnpg-inf", SolverConfig { epsilon: 1e-9, max_iterations: 3000, ..Default::default() }.backtracking_only()),
    ] {
        let run = pnpg_solve(&inst.model, &reg, &inst.x0, &cfg).unwrap();
        let betas: Vec<f64> = run.trace.records.iter().map(|r| r.beta).collect();
        let bt: usize = run.trace.records.iter().map(|r| r.backtracks).sum();
        let restarts: usize = run.trace.records.iter().filter(|r| r.restart != pnpg::solver::RestartKind::None).count();
        let inner: usize = run.trace.records.iter().map(|r| r.inner_iterations).sum();
        println!("{name}: beta first={:.3e} min={:.3e} max={:.3e} last={:.3e} | backtracks={bt} restarts={restarts} inner={inner} iters={}",
            betas[0], betas.iter().cloned().fold(f64::INFINITY, f64::min),
            betas.iter().cloned().fold(0.0, f64::max), betas.last().unwrap(), betas.len());
    }
}

#[allow(dead_code)]
fn adapt_scan() {
    for seed in [1u64, 2, 3] {
        let family = Family::PetPoisson { grid_n: 32, n_views: 30, n_radial: 32, target_counts: 1e6 };
        let inst = build_instance(&family, RegKind::L1, seed).unwrap();
        for a in [-1.0f64, -0.5, 0.0, 0.5, 1.0] {
            let reg = inst.regularizer(a).unwrap();
            let tight = SolverConfig { epsilon: 1e-11, max_iterations: 30_000, ..Default::default() };
            let reference = pnpg_solve(&inst.model, &reg, &inst.x0, &tight).unwrap();
            let f0 = inst.model.value(&inst.x0).unwrap() + reg.weight * reg.penalty_value(&inst.x0).unwrap();
            let target = reference.f_final + 1e-4 * f0;
            let cfg_a = SolverConfig { epsilon: 1e-9, max_iterations: 30_000, ..Default::default() };
            let cfg_i = cfg_a.backtracking_only();
            let ra = pnpg_solve(&inst.model, &reg, &inst.x0, &cfg_a).unwrap();
            let ri = pnpg_solve(&inst.model, &reg, &inst.x0, &cfg_i).unwrap();
            let ea = ra.trace.records.iter().find(|r| r.f <= target).map(|r| r.cum_nll_evals);
            let ei = ri.trace.records.iter().find(|r| r.f <= target).map(|r| r.cum_nll_evals);
            match (ea, ei) {
                (Some(ea), Some(ei)) => println!("seed {seed} a={a:4}: adaptive {ea:6} vs inf {ei:6}  ratio {:.3}", ea as f64 / ei as f64),
                _ => println!("seed {seed} a={a:4}: target unreached {ea:?} {ei:?}"),
            }
        }
    }
}

#[allow(dead_code)]
fn adapt_wide() {
    for seed in [1u64, 2, 3, 4, 5] {
        let family = Family::PetPoisson { grid_n: 32, n_views: 30, n_radial: 32, target_counts: 1e6 };
        let inst = build_instance(&family, RegKind::L1, seed).unwrap();
        for a in [-3.0f64, -2.5, -2.0, -1.5] {
            let reg = inst.regularizer(a).unwrap();
            let tight = SolverConfig { epsilon: 1e-11, max_iterations: 40_000, ..Default::default() };
            let reference = pnpg_solve(&inst.model, &reg, &inst.x0, &tight).unwrap();
            let f0 = inst.model.value(&inst.x0).unwrap() + reg.weight * reg.penalty_value(&inst.x0).unwrap();
            let target = reference.f_final + 1e-4 * f0;
            let cfg_a = SolverConfig { epsilon: 1e-9, max_iterations: 40_000, ..Default::default() };
            let cfg_i = cfg_a.backtracking_only();
            let ra = pnpg_solve(&inst.model, &reg, &inst.x0, &cfg_a).unwrap();
            let ri = pnpg_solve(&inst.model, &reg, &inst.x0, &cfg_i).unwrap();
            let ea = ra.trace.records.iter().find(|r| r.f <= target).map(|r| (r.cum_nll_evals, r.iteration));
            let ei = ri.trace.records.iter().find(|r| r.f <= target).map(|r| (r.cum_nll_evals, r.iteration));
            match (ea, ei) {
                (Some((ea, ia)), Some((ei, ii))) => println!("seed {seed} a={a:4}: adaptive {ea:6} (it {ia:5}) vs inf {ei:6} (it {ii:5})  ratio {:.3}", ea as f64 / ei as f64),
                _ => println!("seed {seed} a={a:4}: unreached"),
            }
        }
    }
}

#[allow(dead_code)]
fn adapt_depth() {
    for seed in [1u64, 3, 5] {
        let family = Family::PetPoisson { grid_n: 32, n_views: 30, n_radial: 32, target_counts: 1e6 };
        let inst = build_instance(&family, RegKind::L1, seed).unwrap();
        let a = -1.5f64;
        let reg = inst.regularizer(a).unwrap();
        let tight = SolverConfig { epsilon: 1e-11, max_iterations: 40_000, ..Default::default() };
        let reference = pnpg_solve(&inst.model, &reg, &inst.x0, &tight).unwrap();
        let f0 = inst.model.value(&inst.x0).unwrap() + reg.weight * reg.penalty_value(&inst.x0).unwrap();
        let cfg_a = SolverConfig { epsilon: 1e-9, max_iterations: 40_000, ..Default::default() };
        let cfg_i = cfg_a.backtracking_only();
        let ra = pnpg_solve(&inst.model, &reg, &inst.x0, &cfg_a).unwrap();
        let ri = pnpg_solve(&inst.model, &reg, &inst.x0, &cfg_i).unwrap();
        for frac in [1e-4f64, 1e-5, 1e-6, 1e-7] {
            let target = reference.f_final + frac * f0;
            let ea = ra.trace.records.iter().find(|r| r.f <= target).map(|r| r.cum_nll_evals);
            let ei = ri.trace.records.iter().find(|r| r.f <= target).map(|r| r.cum_nll_evals);
            if let (Some(ea), Some(ei)) = (ea, ei) {
                println!("seed {seed} frac={frac:8.0e}: adaptive {ea:6} vs inf {ei:6}  ratio {:.3}", ea as f64 / ei as f64);
            } else {
                println!("seed {seed} frac={frac:8.0e}: unreached");
            }
        }
    }
}

#[allow(dead_code)]
fn adapt_geom() {
    for (nv, nr) in [(60usize, 32usize), (30, 64), (60, 64)] {
        println!("--- geometry views={nv} radial={nr} ---");
        for seed in [1u64, 3, 5] {
            let family = Family::PetPoisson { grid_n: 32, n_views: nv, n_radial: nr, target_counts: 1e6 };
            let inst = build_instance(&family, RegKind::L1, seed).unwrap();
            let a = -1.0f64;
            let reg = inst.regularizer(a).unwrap();
            let tight = SolverConfig { epsilon: 1e-11, max_iterations: 40_000, ..Default::default() };
            let reference = pnpg_solve(&inst.model, &reg, &inst.x0, &tight).unwrap();
            let f0 = inst.model.value(&inst.x0).unwrap() + reg.weight * reg.penalty_value(&inst.x0).unwrap();
            let target = reference.f_final + 1e-4 * f0;
            let cfg_a = SolverConfig { epsilon: 1e-9, max_iterations: 40_000, ..Default::default() };
            let cfg_i = cfg_a.backtracking_only();
            let ra = pnpg_solve(&inst.model, &reg, &inst.x0, &cfg_a).unwrap();
            let ri = pnpg_solve(&inst.model, &reg, &inst.x0, &cfg_i).unwrap();
            let ea = ra.trace.records.iter().find(|r| r.f <= target).map(|r| r.cum_nll_evals);
            let ei = ri.trace.records.iter().find(|r| r.f <= target).map(|r| r.cum_nll_evals);
            if let (Some(ea), Some(ei)) = (ea, ei) {
                println!("seed {seed}: adaptive {ea:6} vs inf {ei:6}  ratio {:.3}", ea as f64 / ei as f64);
            } else {
                println!("seed {seed}: unreached");
            }
        }
    }
}

#[allow(dead_code)]
fn sky2() {
    use pnpg::operators::{dwt_forward, WaveletSpec, WaveletFamily};
    let p = 1024;
    let x = gen_skyline(p).unwrap();
    let spec = WaveletSpec::one_d(WaveletFamily::Daubechies4, 3, p).unwrap();
    let w = dwt_forward(&spec, &x).unwrap();
    let mut e: Vec<f64> = w.iter().map(|&c| c * c).collect();
    e.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let total: f64 = e.iter().sum();
    let top: f64 = e.iter().take(p / 20).sum();
    println!("top-5% energy: {:.5}", top / total);

    let family = Family::SkylineGaussian { p: 1024, ratio: 0.34 };
    for seed in [1u64, 2, 3] {
        let inst = build_instance(&family, RegKind::L1, seed).unwrap();
        for a in [-6.0f64, -5.0, -4.0, -3.0] {
            let reg = inst.regularizer(a).unwrap();
            let cfg = SolverConfig { epsilon: 1e-6, max_iterations: 10_000, ..Default::default() };
            let pn = pnpg_solve(&inst.model, &reg, &inst.x0, &cfg).unwrap();
            let np = npgs_solve(&inst.model, &reg, &inst.x0, &cfg).unwrap();
            println!("seed {seed} a={a:3}: pnpg rse={:8.5} ({:5} it) | npgs rse={:8.5} ({:5} it)",
                rse(&pn.x, &inst.x_true).unwrap(), pn.trace.len(),
                rse(&np.x, &inst.x_true).unwrap(), np.trace.len());
        }
    }
}
