//! Convex-set projections and inexact proximal operators.
//!
//! The two regularizers used by the solvers are the l1 norm of analysis
//! coefficients (proximal mapping by scaled-dual ADMM, exact closed form when
//! the dictionary is square and the set is the whole space) and isotropic
//! total variation (accelerated gradient projection on the dual). Both
//! report how inexact they stopped via a residual-based precision proxy.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::operators::{check_len, ensure_finite, DenseVector, OpRef};

/// Feasible set `C` for the signal.
#[derive(Clone)]
pub enum ConvexSet {
    WholeSpace,
    NonnegativeOrthant,
    Box { lo: DenseVector, hi: DenseVector },
}

impl ConvexSet {
    pub fn boxed(lo: DenseVector, hi: DenseVector) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::dim("box bounds", lo.len(), hi.len()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(Error::InvalidInput("box requires lo <= hi".into()));
        }
        Ok(ConvexSet::Box { lo, hi })
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, a: &DenseVector) -> DenseVector {
        match self {
            ConvexSet::WholeSpace => a.clone(),
            ConvexSet::NonnegativeOrthant => a.mapv(|v| v.max(0.0)),
            ConvexSet::Box { lo, hi } => ndarray::Zip::from(a)
                .and(lo)
                .and(hi)
                .map_collect(|&v, &l, &h| v.clamp(l, h)),
        }
    }

    /// Projects in place, returning whether anything moved.
    pub fn project_inplace(&self, a: &mut DenseVector) -> bool {
        let projected = self.project(a);
        let moved = projected
            .iter()
            .zip(a.iter())
            .any(|(p, v)| p != v);
        *a = projected;
        moved
    }

    pub fn contains(&self, a: &DenseVector) -> bool {
        match self {
            ConvexSet::WholeSpace => true,
            ConvexSet::NonnegativeOrthant => a.iter().all(|&v| v >= 0.0),
            ConvexSet::Box { lo, hi } => a
                .iter()
                .zip(lo.iter())
                .zip(hi.iter())
                .all(|((&v, &l), &h)| v >= l && v <= h),
        }
    }

    pub fn is_whole_space(&self) -> bool {
        matches!(self, ConvexSet::WholeSpace)
    }
}

/// Elementwise soft threshold `sign(a) max(|a| - lambda, 0)`.
pub fn soft_threshold(a: &DenseVector, lambda: f64) -> DenseVector {
    debug_assert!(lambda >= 0.0);
    a.mapv(|v| v.signum() * (v.abs() - lambda).max(0.0))
}

/// Grid arrangement for the TV penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvGrid {
    Chain { len: usize },
    Lattice { rows: usize, cols: usize },
}

impl TvGrid {
    pub fn len(&self) -> usize {
        match *self {
            TvGrid::Chain { len } => len,
            TvGrid::Lattice { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sparsity penalty of the regularizer.
pub enum SparsityPenalty {
    /// `||Psi^T x||_1` with a row-orthonormal dictionary `Psi`.
    L1Analysis { psi: OpRef },
    /// Isotropic total variation over forward differences.
    IsotropicTv { grid: TvGrid },
}

/// Full regularizer `u * (penalty + indicator of C)`.
pub struct Regularizer {
    pub sparsity: SparsityPenalty,
    pub set: ConvexSet,
    pub weight: f64,
}

impl Regularizer {
    pub fn l1_analysis(psi: OpRef, set: ConvexSet, weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "regularization weight must be positive, got {weight}"
            )));
        }
        check_row_orthonormal(&psi)?;
        Ok(Self {
            sparsity: SparsityPenalty::L1Analysis { psi },
            set,
            weight,
        })
    }

    pub fn isotropic_tv(grid: TvGrid, set: ConvexSet, weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "regularization weight must be positive, got {weight}"
            )));
        }
        if grid.is_empty() {
            return Err(Error::InvalidInput("empty TV grid".into()));
        }
        Ok(Self {
            sparsity: SparsityPenalty::IsotropicTv { grid },
            set,
            weight,
        })
    }

    /// Signal dimension the regularizer acts on.
    pub fn signal_len(&self) -> usize {
        match &self.sparsity {
            SparsityPenalty::L1Analysis { psi } => psi.rows(),
            SparsityPenalty::IsotropicTv { grid } => grid.len(),
        }
    }

    /// Penalty value without the weight or the set indicator.
    pub fn penalty_value(&self, x: &DenseVector) -> Result<f64> {
        match &self.sparsity {
            SparsityPenalty::L1Analysis { psi } => {
                Ok(psi.adjoint_apply(x)?.mapv(f64::abs).sum())
            }
            SparsityPenalty::IsotropicTv { grid } => {
                check_len("tv penalty", grid.len(), x)?;
                Ok(tv_value(grid, x))
            }
        }
    }

    /// True when the l1 proximal mapping has the closed form
    /// `Psi T_lambda(Psi^T a)`: square dictionary, unconstrained set.
    pub fn has_exact_prox(&self) -> bool {
        match &self.sparsity {
            SparsityPenalty::L1Analysis { psi } => {
                self.set.is_whole_space() && psi.rows() == psi.cols()
            }
            SparsityPenalty::IsotropicTv { .. } => false,
        }
    }

    /// Same penalty and weight over a different feasible set.
    pub fn with_set(&self, set: ConvexSet) -> Self {
        let sparsity = match &self.sparsity {
            SparsityPenalty::L1Analysis { psi } => SparsityPenalty::L1Analysis {
                psi: std::sync::Arc::clone(psi),
            },
            SparsityPenalty::IsotropicTv { grid } => {
                SparsityPenalty::IsotropicTv { grid: *grid }
            }
        };
        Regularizer {
            sparsity,
            set,
            weight: self.weight,
        }
    }

    /// Same penalty and set with a new weight.
    pub fn with_weight(&self, weight: f64) -> Result<Self> {
        let mut reg = self.with_set(self.set.clone());
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "regularization weight must be positive, got {weight}"
            )));
        }
        reg.weight = weight;
        Ok(reg)
    }
}

/// Rejects dictionaries whose rows are not orthonormal (`Psi Psi^T != I`);
/// the ADMM alpha-update depends on that identity.
fn check_row_orthonormal(psi: &OpRef) -> Result<()> {
    use rand::RngExt;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x0a11);
    for _ in 0..3 {
        let v: DenseVector =
            Array1::from_shape_fn(psi.rows(), |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let round = psi.apply(&psi.adjoint_apply(&v)?)?;
        let err = (&round - &v).mapv(|e| e * e).sum().sqrt();
        let scale = v.dot(&v).sqrt().max(1e-300);
        if err > 1e-8 * scale {
            return Err(Error::InvalidInput(
                "dictionary rows are not orthonormal (Psi Psi^T != I)".into(),
            ));
        }
    }
    Ok(())
}

/// Stop rule for inner proximal iterations.
#[derive(Debug, Clone, Copy)]
pub enum InnerStopRule {
    /// Residual metric `<= threshold`.
    Absolute { threshold: f64 },
    /// Residual metric `<= factor * ||current iterate||`.
    Relative { factor: f64 },
}

impl InnerStopRule {
    pub fn satisfied(&self, metric: f64, iterate_norm: f64) -> bool {
        match *self {
            InnerStopRule::Absolute { threshold } => metric <= threshold,
            InnerStopRule::Relative { factor } => metric <= factor * iterate_norm,
        }
    }

    /// Same rule with the threshold scaled by `factor` (< 1 tightens).
    pub fn tightened(&self, factor: f64) -> Self {
        match *self {
            InnerStopRule::Absolute { threshold } => InnerStopRule::Absolute {
                threshold: threshold * factor,
            },
            InnerStopRule::Relative { factor: f } => InnerStopRule::Relative {
                factor: f * factor,
            },
        }
    }
}

/// Outcome of an inexact proximal solve.
pub struct ProxResult {
    pub x: DenseVector,
    pub inner_iterations: usize,
    pub converged: bool,
    /// Residual-based proxy for the precision of the mapping: the final
    /// max(primal, dual) residual for ADMM, the final iterate displacement
    /// for TV, zero for closed forms.
    pub precision_proxy: f64,
}

/// Approximate `argmin_x 0.5||x - a||^2 + lambda ||Psi^T x||_1 + I_C(x)` by
/// ADMM on the split `s = Psi^T x`. Requires row-orthonormal `Psi`.
pub fn prox_l1_analysis(
    a: &DenseVector,
    lambda: f64,
    reg: &Regularizer,
    warm_s: &DenseVector,
    stop: &InnerStopRule,
    max_iter: usize,
) -> Result<ProxResult> {
    let psi = match &reg.sparsity {
        SparsityPenalty::L1Analysis { psi } => psi,
        SparsityPenalty::IsotropicTv { .. } => {
            return Err(Error::InvalidInput(
                "prox_l1_analysis called with a TV regularizer".into(),
            ))
        }
    };
    check_len("prox_l1_analysis input", psi.rows(), a)?;
    check_len("prox_l1_analysis warm start", psi.cols(), warm_s)?;
    ensure_finite("prox_l1_analysis input", a)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput("lambda must be positive".into()));
    }

    let mut rho = 1.0f64;
    let mut s = warm_s.clone();
    let mut dual = Array1::zeros(psi.cols());
    let mut alpha = a.clone();
    let mut converged = false;
    let mut iterations = 0;
    let mut proxy = f64::INFINITY;

    for j in 1..=max_iter {
        iterations = j;
        // alpha-update: with Psi Psi^T = I the weighted least-squares
        // step collapses to a scaled average followed by projection.
        let synth = psi.apply(&(&s + &dual))?;
        alpha = (a + &(synth * rho)) / (1.0 + rho);
        alpha = reg.set.project(&alpha);

        let coeffs = psi.adjoint_apply(&alpha)?;
        let s_prev = s;
        s = soft_threshold(&(&coeffs - &dual), lambda / rho);
        dual += &(&s - &coeffs);

        let primal = (&s - &coeffs).mapv(|e| e * e).sum().sqrt();
        let dual_res = (&s - &s_prev).mapv(|e| e * e).sum().sqrt();
        proxy = primal.max(dual_res);
        if stop.satisfied(proxy, s.dot(&s).sqrt()) {
            converged = true;
            break;
        }

        // Penalty-parameter adaptation; the scaled dual shrinks or grows
        // inversely with rho.
        if primal > 10.0 * rho * dual_res && rho < 1e6 {
            rho *= 2.0;
            dual /= 2.0;
        } else if rho * dual_res > 10.0 * primal && rho > 1e-6 {
            rho /= 2.0;
            dual *= 2.0;
        }
    }

    Ok(ProxResult {
        x: alpha,
        inner_iterations: iterations,
        converged,
        precision_proxy: proxy,
    })
}

/// Closed-form `Psi T_lambda(Psi^T a)` for a square dictionary without a
/// set constraint.
pub fn prox_l1_orthonormal_exact(
    a: &DenseVector,
    lambda: f64,
    psi: &OpRef,
) -> Result<DenseVector> {
    let coeffs = psi.adjoint_apply(a)?;
    psi.apply(&soft_threshold(&coeffs, lambda))
}

/// Isotropic TV of a signal over the grid's forward differences.
pub fn tv_value(grid: &TvGrid, x: &DenseVector) -> f64 {
    match *grid {
        TvGrid::Chain { len } => (0..len.saturating_sub(1))
            .map(|i| (x[i] - x[i + 1]).abs())
            .sum(),
        TvGrid::Lattice { rows, cols } => {
            let at = |r: usize, c: usize| x[r * cols + c];
            let mut acc = 0.0;
            for r in 0..rows {
                for c in 0..cols {
                    let dv = if r + 1 < rows { at(r, c) - at(r + 1, c) } else { 0.0 };
                    let dh = if c + 1 < cols { at(r, c) - at(r, c + 1) } else { 0.0 };
                    acc += (dv * dv + dh * dh).sqrt();
                }
            }
            acc
        }
    }
}

/// Approximate `argmin_x 0.5||x - a||^2 + lambda TV(x) + I_C(x)` by
/// accelerated projected gradient on the dual, with the primal projected
/// onto `C` at every dual iterate and on output.
pub fn prox_tv(
    a: &DenseVector,
    lambda: f64,
    reg: &Regularizer,
    stop: &InnerStopRule,
    max_iter: usize,
) -> Result<ProxResult> {
    let grid = match &reg.sparsity {
        SparsityPenalty::IsotropicTv { grid } => *grid,
        SparsityPenalty::L1Analysis { .. } => {
            return Err(Error::InvalidInput(
                "prox_tv called with an l1-analysis regularizer".into(),
            ))
        }
    };
    check_len("prox_tv input", grid.len(), a)?;
    ensure_finite("prox_tv input", a)?;
    if lambda < 0.0 {
        return Err(Error::InvalidInput("lambda must be nonnegative".into()));
    }
    if lambda == 0.0 {
        return Ok(ProxResult {
            x: reg.set.project(a),
            inner_iterations: 0,
            converged: true,
            precision_proxy: 0.0,
        });
    }

    let (rows, cols) = match grid {
        TvGrid::Chain { len } => (1, len),
        TvGrid::Lattice { rows, cols } => (rows, cols),
    };
    // Dual step from the operator-norm bound of the difference map.
    let step = if rows == 1 || cols == 1 {
        1.0 / (4.0 * lambda)
    } else {
        1.0 / (8.0 * lambda)
    };

    let np = if rows > 1 { (rows - 1) * cols } else { 0 };
    let nq = if cols > 1 { rows * (cols - 1) } else { 0 };
    let mut p = vec![0.0; np];
    let mut q = vec![0.0; nq];
    let mut rp = p.clone();
    let mut rq = q.clone();
    let mut t = 1.0f64;

    let primal =
        |rp: &[f64], rq: &[f64]| -> DenseVector {
            let mut x = a.clone();
            // x = P_C(a - lambda * L(p, q)) with L the divergence-like
            // adjoint of the forward-difference map.
            for r in 0..rows.saturating_sub(1) {
                for c in 0..cols {
                    let v = lambda * rp[r * cols + c];
                    x[r * cols + c] -= v;
                    x[(r + 1) * cols + c] += v;
                }
            }
            for r in 0..rows {
                for c in 0..cols.saturating_sub(1) {
                    let v = lambda * rq[r * (cols - 1) + c];
                    x[r * cols + c] -= v;
                    x[r * cols + c + 1] += v;
                }
            }
            reg.set.project(&x)
        };

    let mut x = primal(&rp, &rq);
    let mut converged = false;
    let mut iterations = 0;
    let mut proxy = f64::INFINITY;

    for j in 1..=max_iter {
        iterations = j;
        let (p_old, q_old) = (p.clone(), q.clone());

        // Gradient ascent step on the dual.
        let mut pn = rp.clone();
        let mut qn = rq.clone();
        for r in 0..rows.saturating_sub(1) {
            for c in 0..cols {
                pn[r * cols + c] += step * (x[r * cols + c] - x[(r + 1) * cols + c]);
            }
        }
        for r in 0..rows {
            for c in 0..cols.saturating_sub(1) {
                qn[r * (cols - 1) + c] += step * (x[r * cols + c] - x[r * cols + c + 1]);
            }
        }
        // Project pairs onto the unit disc (isotropic coupling).
        for r in 0..rows {
            for c in 0..cols {
                let has_p = r + 1 < rows;
                let has_q = c + 1 < cols;
                match (has_p, has_q) {
                    (true, true) => {
                        let ip = r * cols + c;
                        let iq = r * (cols - 1) + c;
                        let mag = (pn[ip] * pn[ip] + qn[iq] * qn[iq]).sqrt().max(1.0);
                        pn[ip] /= mag;
                        qn[iq] /= mag;
                    }
                    (true, false) => {
                        let ip = r * cols + c;
                        pn[ip] /= pn[ip].abs().max(1.0);
                    }
                    (false, true) => {
                        let iq = r * (cols - 1) + c;
                        qn[iq] /= qn[iq].abs().max(1.0);
                    }
                    (false, false) => {}
                }
            }
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        for i in 0..np {
            rp[i] = pn[i] + momentum * (pn[i] - p_old[i]);
        }
        for i in 0..nq {
            rq[i] = qn[i] + momentum * (qn[i] - q_old[i]);
        }
        p = pn;
        q = qn;
        t = t_next;

        let x_new = primal(&rp, &rq);
        proxy = (&x_new - &x).mapv(|e| e * e).sum().sqrt();
        let norm = x_new.dot(&x_new).sqrt();
        x = x_new;
        if stop.satisfied(proxy, norm) {
            converged = true;
            break;
        }
    }

    // Recompute from the accepted dual point and project once more so the
    // output is feasible exactly.
    let x_final = primal(&p, &q);
    Ok(ProxResult {
        x: x_final,
        inner_iterations: iterations,
        converged,
        precision_proxy: proxy,
    })
}

/// Routes a proximal solve to the right routine for the regularizer:
/// the closed form when it exists, ADMM for l1-analysis, dual gradient
/// projection for TV.
pub fn solve_prox(
    a: &DenseVector,
    lambda: f64,
    reg: &Regularizer,
    warm_s: Option<&DenseVector>,
    stop: &InnerStopRule,
    max_iter: usize,
) -> Result<ProxResult> {
    match &reg.sparsity {
        SparsityPenalty::L1Analysis { psi } => {
            if reg.has_exact_prox() {
                let x = prox_l1_orthonormal_exact(a, lambda, psi)?;
                return Ok(ProxResult {
                    x,
                    inner_iterations: 0,
                    converged: true,
                    precision_proxy: 0.0,
                });
            }
            let owned;
            let warm = match warm_s {
                Some(w) => w,
                None => {
                    owned = psi.adjoint_apply(a)?;
                    &owned
                }
            };
            prox_l1_analysis(a, lambda, reg, warm, stop, max_iter)
        }
        SparsityPenalty::IsotropicTv { .. } => prox_tv(a, lambda, reg, stop, max_iter),
    }
}

/// Samples the necessary condition of the epsilon-subgradient inclusion
/// `(a - x)/u` in `d_{eps^2/(2u)} r(x)`: for probe points `z` in `C`,
/// `r(z) >= r(x) + (z - x)'(a - x)/u - eps^2/(2u)` must hold.
pub fn check_eps_subgradient(
    reg: &Regularizer,
    a: &DenseVector,
    x: &DenseVector,
    u: f64,
    eps: f64,
    probes: usize,
    seed: u64,
) -> Result<bool> {
    use rand::RngExt;
    use rand::SeedableRng;

    if !reg.set.contains(x) {
        return Err(Error::InvalidInput(
            "check_eps_subgradient requires x in C".into(),
        ));
    }
    let r_x = reg.penalty_value(x)?;
    let g = (a - x) / u;
    let slack = eps * eps / (2.0 * u);
    let tol = 1e-9 * (1.0 + r_x.abs());

    let holds = |z: &DenseVector| -> Result<bool> {
        let r_z = reg.penalty_value(z)?;
        Ok(r_z + tol >= r_x + (z - x).dot(&g) - slack)
    };

    // Structured probes: x itself, the projected input, and both-signed
    // perturbations of every coordinate.
    if !holds(x)? {
        return Ok(false);
    }
    if !holds(&reg.set.project(a))? {
        return Ok(false);
    }
    let scale = 1.0 + x.mapv(f64::abs).sum() / x.len() as f64;
    for i in 0..x.len() {
        for sign in [-1.0, 1.0] {
            let mut z = x.clone();
            z[i] += sign * scale;
            if !holds(&reg.set.project(&z))? {
                return Ok(false);
            }
        }
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..probes {
        let noise: DenseVector = Array1::from_shape_fn(x.len(), |_| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let z = reg.set.project(&(x + &(noise * scale)));
        if !holds(&z)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::wavelet::WaveletSynthesisOp;
    use crate::operators::{IdentityOp, WaveletFamily, WaveletSpec};
    use ndarray::array;
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::sync::Arc;

    fn tight_stop() -> InnerStopRule {
        InnerStopRule::Absolute { threshold: 1e-11 }
    }

    #[test]
    fn projections() {
        let nn = ConvexSet::NonnegativeOrthant;
        assert_eq!(nn.project(&array![1.0, -2.0, 0.0]), array![1.0, 0.0, 0.0]);
        let ws = ConvexSet::WholeSpace;
        assert_eq!(ws.project(&array![1.0, -2.0]), array![1.0, -2.0]);
        let boxed = ConvexSet::boxed(array![0.0, 0.0], array![1.0, 1.0]).unwrap();
        assert_eq!(boxed.project(&array![2.0, -1.0]), array![1.0, 0.0]);
        assert!(ConvexSet::boxed(array![1.0], array![0.0]).is_err());
    }

    #[test]
    fn projection_is_idempotent_and_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sets = [
            ConvexSet::NonnegativeOrthant,
            ConvexSet::boxed(Array1::from_elem(6, -0.5), Array1::from_elem(6, 2.0)).unwrap(),
        ];
        for set in &sets {
            for _ in 0..20 {
                let a: DenseVector =
                    Array1::from_shape_fn(6, |_| 3.0 * rng.sample::<f64, _>(StandardNormal));
                let b: DenseVector =
                    Array1::from_shape_fn(6, |_| 3.0 * rng.sample::<f64, _>(StandardNormal));
                let pa = set.project(&a);
                let pb = set.project(&b);
                assert_eq!(set.project(&pa), pa);
                let d_proj = (&pa - &pb).mapv(|e| e * e).sum().sqrt();
                let d = (&a - &b).mapv(|e| e * e).sum().sqrt();
                assert!(d_proj <= d + 1e-14);
            }
        }
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&array![3.0, -0.5], 1.0), array![2.0, 0.0]);
        let a = array![0.3, -2.7, 1.1];
        assert_eq!(soft_threshold(&a, 0.0), a);
    }

    #[test]
    fn soft_threshold_matches_scalar_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let a = 20.0 * (rng.random::<f64>() - 0.5);
            let lambda = 3.0 * rng.random::<f64>();
            // Brute-force 1-D minimization of 0.5 (x-a)^2 + lambda |x|.
            let mut best = (f64::INFINITY, 0.0);
            let grid = 20_000;
            for k in 0..=grid {
                let x = -10.0 + 20.0 * k as f64 / grid as f64;
                let obj = 0.5 * (x - a) * (x - a) + lambda * x.abs();
                if obj < best.0 {
                    best = (obj, x);
                }
            }
            let st = soft_threshold(&array![a], lambda)[0];
            assert!(
                (st - best.1).abs() <= 20.0 / grid as f64 + 1e-9,
                "a={a} lambda={lambda}: {st} vs {}",
                best.1
            );
        }
    }

    #[test]
    fn admm_reduces_to_soft_threshold_for_identity_dictionary() {
        let psi: OpRef = Arc::new(IdentityOp::new(2));
        let reg = Regularizer::l1_analysis(psi, ConvexSet::WholeSpace, 1.0).unwrap();
        let a = array![2.0, -1.0];
        let out = prox_l1_analysis(&a, 1.0, &reg, &Array1::zeros(2), &tight_stop(), 2000)
            .unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-6);
        assert!(out.x[1].abs() < 1e-6);
        assert!(out.converged);
    }

    #[test]
    fn admm_respects_nonnegativity() {
        // Per-coordinate oracle on C = R+: argmin 0.5(x-a)^2 + lambda x
        // is max(a - lambda, 0).
        let psi: OpRef = Arc::new(IdentityOp::new(2));
        let reg = Regularizer::l1_analysis(psi, ConvexSet::NonnegativeOrthant, 1.0).unwrap();
        let a = array![2.0, -1.0];
        let out = prox_l1_analysis(&a, 1.0, &reg, &Array1::zeros(2), &tight_stop(), 2000)
            .unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-6);
        assert!(out.x[1].abs() < 1e-8);
        assert!(reg.set.contains(&out.x));
    }

    #[test]
    fn admm_matches_orthonormal_closed_form() {
        let spec = WaveletSpec::one_d(WaveletFamily::Haar, 1, 2).unwrap();
        let psi: OpRef = Arc::new(WaveletSynthesisOp::new(spec));
        let reg =
            Regularizer::l1_analysis(Arc::clone(&psi), ConvexSet::WholeSpace, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let a: DenseVector =
                Array1::from_shape_fn(2, |_| 2.0 * rng.sample::<f64, _>(StandardNormal));
            let admm =
                prox_l1_analysis(&a, 0.3, &reg, &Array1::zeros(2), &tight_stop(), 5000)
                    .unwrap();
            let exact = prox_l1_orthonormal_exact(&a, 0.3, &psi).unwrap();
            let err = (&admm.x - &exact).mapv(|e| e * e).sum().sqrt();
            assert!(err < 1e-6, "ADMM vs closed form: {err}");
        }
    }

    #[test]
    fn admm_objective_non_increasing_at_checkpoints() {
        let spec = WaveletSpec::one_d(WaveletFamily::Daubechies4, 2, 16).unwrap();
        let psi: OpRef = Arc::new(WaveletSynthesisOp::new(spec));
        let reg =
            Regularizer::l1_analysis(Arc::clone(&psi), ConvexSet::NonnegativeOrthant, 1.0)
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a: DenseVector =
            Array1::from_shape_fn(16, |_| 2.0 * rng.sample::<f64, _>(StandardNormal));
        let lambda = 0.4;
        let objective = |x: &DenseVector| {
            0.5 * (x - &a).mapv(|e| e * e).sum()
                + lambda * psi.adjoint_apply(x).unwrap().mapv(f64::abs).sum()
        };
        let mut prev = f64::INFINITY;
        for iters in [5, 10, 20, 40, 80, 160, 320] {
            let out = prox_l1_analysis(
                &a,
                lambda,
                &reg,
                &Array1::zeros(16),
                &InnerStopRule::Absolute { threshold: 0.0 },
                iters,
            )
            .unwrap();
            let f = objective(&out.x);
            assert!(f <= prev + 1e-6 * (1.0 + f.abs()), "{f} > {prev}");
            prev = f;
        }
    }

    #[test]
    fn non_orthonormal_dictionary_rejected() {
        let psi: OpRef = Arc::new(
            crate::operators::DenseMatrixOp::new(array![[1.0, 0.4], [0.0, 1.0]]).unwrap(),
        );
        assert!(Regularizer::l1_analysis(psi, ConvexSet::WholeSpace, 1.0).is_err());
    }

    #[test]
    fn tv_prox_shortcut_and_constant() {
        let reg = Regularizer::isotropic_tv(
            TvGrid::Chain { len: 4 },
            ConvexSet::NonnegativeOrthant,
            1.0,
        )
        .unwrap();
        let a = array![1.0, -0.5, 2.0, 0.0];
        let out = prox_tv(&a, 0.0, &reg, &tight_stop(), 100).unwrap();
        assert_eq!(out.x, array![1.0, 0.0, 2.0, 0.0]);

        let free = Regularizer::isotropic_tv(
            TvGrid::Chain { len: 4 },
            ConvexSet::WholeSpace,
            1.0,
        )
        .unwrap();
        let c = Array1::from_elem(4, 1.3);
        let out = prox_tv(&c, 0.7, &free, &tight_stop(), 500).unwrap();
        let err = (&out.x - &c).mapv(|e| e * e).sum().sqrt();
        assert!(err < 1e-9, "constant signal should be a fixed point: {err}");
    }

    #[test]
    fn tv_prox_two_point_chain() {
        // Stationarity of 0.5((x1)^2 + (x2-2)^2) + 0.5|x2-x1| at (0.5, 1.5).
        let reg = Regularizer::isotropic_tv(
            TvGrid::Chain { len: 2 },
            ConvexSet::WholeSpace,
            1.0,
        )
        .unwrap();
        let out = prox_tv(&array![0.0, 2.0], 0.5, &reg, &tight_stop(), 5000).unwrap();
        assert!((out.x[0] - 0.5).abs() < 1e-6, "{:?}", out.x);
        assert!((out.x[1] - 1.5).abs() < 1e-6, "{:?}", out.x);
    }

    /// Projected subgradient descent oracle for the TV objective.
    fn tv_subgradient_oracle(
        a: &DenseVector,
        lambda: f64,
        grid: &TvGrid,
        set: &ConvexSet,
        iters: usize,
    ) -> DenseVector {
        let mut x = set.project(a);
        let mut best = x.clone();
        let mut best_f = 0.5 * (&x - a).mapv(|e| e * e).sum() + lambda * tv_value(grid, &x);
        let (rows, cols) = match *grid {
            TvGrid::Chain { len } => (1, len),
            TvGrid::Lattice { rows, cols } => (rows, cols),
        };
        for k in 0..iters {
            let mut g = &x - a;
            for r in 0..rows {
                for c in 0..cols {
                    let i = r * cols + c;
                    let dv = if r + 1 < rows { x[i] - x[(r + 1) * cols + c] } else { 0.0 };
                    let dh = if c + 1 < cols { x[i] - x[i + 1] } else { 0.0 };
                    let mag = (dv * dv + dh * dh).sqrt();
                    if mag > 1e-12 {
                        g[i] += lambda * (dv + dh) / mag;
                        if r + 1 < rows {
                            g[(r + 1) * cols + c] -= lambda * dv / mag;
                        }
                        if c + 1 < cols {
                            g[i + 1] -= lambda * dh / mag;
                        }
                    }
                }
            }
            // Strongly convex objective: O(1/k) subgradient schedule.
            let t = 2.0 / (k as f64 + 2.0);
            x = set.project(&(&x - &(g * t)));
            let f = 0.5 * (&x - a).mapv(|e| e * e).sum() + lambda * tv_value(grid, &x);
            if f < best_f {
                best_f = f;
                best = x.clone();
            }
        }
        best
    }

    #[test]
    fn tv_prox_matches_subgradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for (grid, set) in [
            (TvGrid::Chain { len: 8 }, ConvexSet::WholeSpace),
            (TvGrid::Chain { len: 8 }, ConvexSet::NonnegativeOrthant),
            (TvGrid::Lattice { rows: 4, cols: 4 }, ConvexSet::WholeSpace),
            (
                TvGrid::Lattice { rows: 4, cols: 4 },
                ConvexSet::NonnegativeOrthant,
            ),
        ] {
            let n = grid.len();
            let reg = Regularizer::isotropic_tv(grid, set.clone(), 1.0).unwrap();
            let a: DenseVector =
                Array1::from_shape_fn(n, |_| 2.0 * rng.sample::<f64, _>(StandardNormal));
            let lambda = 0.5;
            let fast = prox_tv(&a, lambda, &reg, &tight_stop(), 20_000).unwrap();
            let slow = tv_subgradient_oracle(&a, lambda, &grid, &set, 100_000);
            let f_fast =
                0.5 * (&fast.x - &a).mapv(|e| e * e).sum() + lambda * tv_value(&grid, &fast.x);
            let f_slow =
                0.5 * (&slow - &a).mapv(|e| e * e).sum() + lambda * tv_value(&grid, &slow);
            let gap = (f_fast - f_slow).abs() / f_slow.abs().max(1e-12);
            assert!(gap < 1e-3, "objective gap {gap} for {grid:?}");
            assert!(reg.set.contains(&fast.x));
        }
    }

    #[test]
    fn eps_subgradient_check_accepts_exact_and_rejects_perturbed() {
        let psi: OpRef = Arc::new(IdentityOp::new(4));
        let reg =
            Regularizer::l1_analysis(psi, ConvexSet::NonnegativeOrthant, 1.0).unwrap();
        let a = array![2.0, -1.0, 0.4, 3.0];
        let u = 0.8;
        // Exact prox over C = R+ with identity dictionary.
        let x = a.mapv(|v: f64| (v - u).max(0.0));
        assert!(check_eps_subgradient(&reg, &a, &x, u, 0.0, 60, 3).unwrap());

        let mut bad = x.clone();
        bad[0] += 1.5;
        bad[2] += 2.0;
        assert!(!check_eps_subgradient(&reg, &a, &bad, u, 1e-6, 60, 3).unwrap());

        // A huge epsilon makes the condition vacuous.
        assert!(check_eps_subgradient(&reg, &a, &bad, u, 1e6, 60, 3).unwrap());
    }

    #[test]
    fn prox_results_report_finite_proxy() {
        let psi: OpRef = Arc::new(IdentityOp::new(3));
        let reg = Regularizer::l1_analysis(psi, ConvexSet::WholeSpace, 1.0).unwrap();
        let out = prox_l1_analysis(
            &array![1.0, 2.0, 3.0],
            0.5,
            &reg,
            &Array1::zeros(3),
            &InnerStopRule::Relative { factor: 1e-5 },
            100,
        )
        .unwrap();
        assert!(out.precision_proxy.is_finite());

        let tv = Regularizer::isotropic_tv(
            TvGrid::Chain { len: 3 },
            ConvexSet::WholeSpace,
            1.0,
        )
        .unwrap();
        let out = prox_tv(
            &array![1.0, 2.0, 3.0],
            0.5,
            &tv,
            &InnerStopRule::Relative { factor: 1e-5 },
            200,
        )
        .unwrap();
        assert!(out.precision_proxy.is_finite());
    }
}
