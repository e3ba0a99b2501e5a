//! CSV/JSON export of sweep results and the readers behind the reporting
//! subcommands. Numeric columns use the shortest round-trip float format,
//! so re-running a manifest with fixed seeds reproduces every file
//! byte-for-byte except the timing columns.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::{ExperimentSpec, RunResult};
use crate::solver::SolverTrace;

pub const RESULTS_HEADER: &str =
    "run_id,family,solver,a,seed,rse,f_final,iterations,nll_evals,wall_seconds,converged";
pub const TRACE_HEADER: &str =
    "iteration,f,delta_f_vs_best,beta,theta,restart,inner_iters,eps_hat,cum_nll_evals,seconds";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `results.csv`, one trace CSV per run, and `manifest.json` into
/// the spec's output directory. Returns the results path.
pub fn export(
    spec: &ExperimentSpec,
    results: &[RunResult],
    traces: &[(String, SolverTrace)],
) -> Result<PathBuf> {
    let dir = &spec.out_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let trace_dir = dir.join("traces");
    fs::create_dir_all(&trace_dir).map_err(io_err(&trace_dir))?;

    // Best-known objective per (a, seed) group, for centered traces.
    let mut best_f: BTreeMap<(String, u64), f64> = BTreeMap::new();
    for ((run_id, trace), res) in traces.iter().zip(results.iter()) {
        debug_assert_eq!(run_id, &res.run_id);
        let key = (format!("{}", res.a), res.seed);
        let trace_min = trace
            .records
            .iter()
            .map(|r| r.f)
            .fold(f64::INFINITY, f64::min);
        let entry = best_f.entry(key).or_insert(f64::INFINITY);
        *entry = entry.min(trace_min);
    }

    let results_path = dir.join("results.csv");
    {
        let mut file = fs::File::create(&results_path).map_err(io_err(&results_path))?;
        writeln!(file, "{RESULTS_HEADER}").map_err(io_err(&results_path))?;
        for r in results {
            writeln!(
                file,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.run_id,
                r.family,
                r.solver,
                r.a,
                r.seed,
                r.rse,
                r.f_final,
                r.iterations,
                r.nll_evals,
                r.wall_seconds,
                r.converged
            )
            .map_err(io_err(&results_path))?;
        }
    }

    for ((run_id, trace), res) in traces.iter().zip(results.iter()) {
        let f_star = best_f
            .get(&(format!("{}", res.a), res.seed))
            .copied()
            .unwrap_or(f64::INFINITY);
        let path = trace_dir.join(format!("{run_id}.csv"));
        write_trace(&path, trace, f_star)?;
    }

    let manifest_path = dir.join("manifest.json");
    let manifest = serde_json::json!({
        "tool": "pnpg",
        "version": env!("CARGO_PKG_VERSION"),
        "spec": spec,
    });
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidInput(format!("manifest serialization: {e}")))?;
    fs::write(&manifest_path, body).map_err(io_err(&manifest_path))?;

    Ok(results_path)
}

/// Writes one per-iteration trace with the centered objective column.
pub fn write_trace(path: &Path, trace: &SolverTrace, f_star: f64) -> Result<()> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    writeln!(file, "{TRACE_HEADER}").map_err(io_err(path))?;
    for r in &trace.records {
        let delta_f = if f_star.is_finite() {
            r.f - f_star
        } else {
            f64::NAN
        };
        writeln!(
            file,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.f,
            delta_f,
            r.beta,
            r.theta,
            r.restart.as_str(),
            r.inner_iterations,
            r.eps_hat,
            r.cum_nll_evals,
            r.seconds
        )
        .map_err(io_err(path))?;
    }
    Ok(())
}

/// Reads `results.csv` back into rows.
pub fn read_results(path: &Path) -> Result<Vec<RunResult>> {
    let body = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = body.lines();
    match lines.next() {
        Some(h) if h == RESULTS_HEADER => {}
        _ => {
            return Err(Error::InvalidInput(format!(
                "{}: missing results header",
                path.display()
            )))
        }
    }
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 11 {
            return Err(Error::InvalidInput(format!(
                "{}:{}: expected 11 columns",
                path.display(),
                ln + 2
            )));
        }
        let parse_f = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
        out.push(RunResult {
            run_id: cols[0].to_string(),
            family: cols[1].to_string(),
            solver: cols[2].to_string(),
            a: parse_f(cols[3]),
            seed: cols[4].parse().unwrap_or(0),
            rse: parse_f(cols[5]),
            f_final: parse_f(cols[6]),
            iterations: cols[7].parse().unwrap_or(0),
            nll_evals: cols[8].parse().unwrap_or(0),
            wall_seconds: parse_f(cols[9]),
            converged: cols[10] == "true",
        });
    }
    Ok(out)
}

/// Best weight exponent per solver, by mean RSE across seeds.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub family: String,
    pub solver: String,
    pub best_a: f64,
    pub mean_rse: f64,
    pub mean_nll_evals: f64,
    pub seeds: usize,
}

/// Aggregates sweep rows into a best-`a` summary per (family, solver).
pub fn sweep_report(results: &[RunResult]) -> Vec<ReportRow> {
    // (family, solver) -> a -> accumulated (rse sum, eval sum, count).
    let mut acc: BTreeMap<(String, String), BTreeMap<String, (f64, f64, usize)>> =
        BTreeMap::new();
    for r in results {
        if !r.rse.is_finite() {
            continue;
        }
        let cell = acc
            .entry((r.family.clone(), r.solver.clone()))
            .or_default()
            .entry(format!("{}", r.a))
            .or_insert((0.0, 0.0, 0));
        cell.0 += r.rse;
        cell.1 += r.nll_evals as f64;
        cell.2 += 1;
    }
    let mut rows = Vec::new();
    for ((family, solver), by_a) in acc {
        let mut best: Option<(f64, f64, f64, usize)> = None;
        for (a_str, (rse_sum, eval_sum, count)) in by_a {
            let a: f64 = a_str.parse().unwrap_or(f64::NAN);
            let mean_rse = rse_sum / count as f64;
            let mean_evals = eval_sum / count as f64;
            let better = match best {
                None => true,
                Some((_, best_rse, _, _)) => mean_rse < best_rse,
            };
            if better {
                best = Some((a, mean_rse, mean_evals, count));
            }
        }
        if let Some((a, mean_rse, mean_evals, count)) = best {
            rows.push(ReportRow {
                family,
                solver,
                best_a: a,
                mean_rse,
                mean_nll_evals: mean_evals,
                seeds: count,
            });
        }
    }
    rows
}

/// One point of a per-solver objective-vs-evaluations curve.
#[derive(Debug, Clone)]
pub struct PlotPoint {
    pub solver: String,
    pub cum_nll_evals: usize,
    pub delta_f_vs_best: f64,
}

/// Collects the objective-vs-evaluations columns for every solver run at
/// one `(a, seed)` cell of an exported sweep.
pub fn trace_plotdata(results_dir: &Path, a: f64, seed: u64) -> Result<Vec<PlotPoint>> {
    let results = read_results(&results_dir.join("results.csv"))?;
    let selected: Vec<&RunResult> = results
        .iter()
        .filter(|r| r.a == a && r.seed == seed)
        .collect();
    if selected.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no runs found for a={a}, seed={seed}"
        )));
    }
    let mut points = Vec::new();
    for res in selected {
        let path = results_dir.join("traces").join(format!("{}.csv", res.run_id));
        let body = fs::read_to_string(&path).map_err(io_err(&path))?;
        for line in body.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 10 {
                continue;
            }
            points.push(PlotPoint {
                solver: res.solver.clone(),
                cum_nll_evals: cols[8].parse().unwrap_or(0),
                delta_f_vs_best: cols[2].parse().unwrap_or(f64::NAN),
            });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{ExperimentSpec, Family, RegKind, SolverKind};

    fn empty_spec(dir: PathBuf) -> ExperimentSpec {
        ExperimentSpec {
            family: Family::SkylineGaussian { p: 256, ratio: 0.4 },
            regularizer: RegKind::L1,
            a_grid: vec![-4.0],
            seeds: vec![1],
            solvers: vec![SolverKind::Pnpg],
            epsilon: 1e-4,
            max_iterations: 50,
            out_dir: dir,
            threads: Some(1),
        }
    }

    #[test]
    fn empty_result_set_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let spec = empty_spec(dir.path().to_path_buf());
        let path = export(&spec, &[], &[]).unwrap();
        let body = std::fs::read_to_string(path).unwrap();
        assert_eq!(body.trim(), RESULTS_HEADER);
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn results_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let spec = empty_spec(dir.path().to_path_buf());
        let rows = vec![RunResult {
            run_id: "skyline-l1-pnpg-a-4-s1".into(),
            family: "skyline".into(),
            solver: "pnpg".into(),
            a: -4.0,
            seed: 1,
            rse: 0.012345,
            f_final: 1.5e-3,
            iterations: 321,
            nll_evals: 700,
            wall_seconds: 0.25,
            converged: true,
        }];
        let traces = vec![("skyline-l1-pnpg-a-4-s1".to_string(), SolverTrace::default())];
        let path = export(&spec, &rows, &traces).unwrap();
        let back = read_results(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].run_id, rows[0].run_id);
        assert_eq!(back[0].a, rows[0].a);
        assert_eq!(back[0].rse, rows[0].rse);
        assert_eq!(back[0].converged, true);
    }

    #[test]
    fn report_picks_argmin_mean_rse() {
        let mk = |a: f64, seed: u64, rse: f64| RunResult {
            run_id: format!("r-a{a}-s{seed}"),
            family: "skyline".into(),
            solver: "pnpg".into(),
            a,
            seed,
            rse,
            f_final: 0.0,
            iterations: 1,
            nll_evals: 10,
            wall_seconds: 0.0,
            converged: true,
        };
        let rows = vec![
            mk(-5.0, 1, 0.3),
            mk(-5.0, 2, 0.4),
            mk(-4.0, 1, 0.1),
            mk(-4.0, 2, 0.2),
            mk(-3.0, 1, 0.5),
            mk(-3.0, 2, 0.5),
        ];
        let report = sweep_report(&rows);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].best_a, -4.0);
        assert!((report[0].mean_rse - 0.15).abs() < 1e-12);
        assert_eq!(report[0].seeds, 2);
    }
}
