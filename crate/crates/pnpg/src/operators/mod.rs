//! Linear-operator abstraction and concrete operators.
//!
//! Everything downstream (likelihood models, regularizers, solvers) talks to
//! sensing and sparsifying transforms through [`LinearOperator`], a
//! forward/adjoint pair with declared dimensions. Operators are immutable
//! after construction and safe to share across threads.

pub mod projector;
pub mod wavelet;

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub use projector::build_line_projector;
pub use wavelet::{
    dwt_forward, dwt_inverse, WaveletFamily, WaveletLayout, WaveletSpec, WaveletSynthesisOp,
};

/// Real coordinate vector carrying signals, measurements, and iterates.
pub type DenseVector = Array1<f64>;

/// Shared handle to an immutable operator.
pub type OpRef = Arc<dyn LinearOperator>;

/// Builds a [`DenseVector`], rejecting NaN/Inf entries.
pub fn dense_vector(values: Vec<f64>) -> Result<DenseVector> {
    let v = Array1::from_vec(values);
    ensure_finite("dense_vector", &v)?;
    Ok(v)
}

/// Returns an input error if any entry of `v` is NaN or infinite.
pub fn ensure_finite(label: &str, v: &DenseVector) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{label} contains non-finite entries"
        )))
    }
}

/// Forward/adjoint pair `A: R^cols -> R^rows`, `A^T: R^rows -> R^cols`.
pub trait LinearOperator: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;

    /// Computes `A x`. Fails on a length mismatch.
    fn apply(&self, x: &DenseVector) -> Result<DenseVector>;

    /// Computes `A^T y`. Fails on a length mismatch.
    fn adjoint_apply(&self, y: &DenseVector) -> Result<DenseVector>;
}

pub(crate) fn check_len(context: &str, expected: usize, v: &DenseVector) -> Result<()> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(Error::dim(context, expected, v.len()))
    }
}

/// Identity on `R^n`.
pub struct IdentityOp {
    n: usize,
}

impl IdentityOp {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl LinearOperator for IdentityOp {
    fn rows(&self) -> usize {
        self.n
    }
    fn cols(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &DenseVector) -> Result<DenseVector> {
        check_len("identity apply", self.n, x)?;
        Ok(x.clone())
    }
    fn adjoint_apply(&self, y: &DenseVector) -> Result<DenseVector> {
        check_len("identity adjoint", self.n, y)?;
        Ok(y.clone())
    }
}

/// Dense matrix operator backed by `ndarray`.
pub struct DenseMatrixOp {
    matrix: Array2<f64>,
}

impl DenseMatrixOp {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(
                "dense operator contains non-finite entries".into(),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

impl LinearOperator for DenseMatrixOp {
    fn rows(&self) -> usize {
        self.matrix.nrows()
    }
    fn cols(&self) -> usize {
        self.matrix.ncols()
    }
    fn apply(&self, x: &DenseVector) -> Result<DenseVector> {
        check_len("dense apply", self.cols(), x)?;
        Ok(self.matrix.dot(x))
    }
    fn adjoint_apply(&self, y: &DenseVector) -> Result<DenseVector> {
        check_len("dense adjoint", self.rows(), y)?;
        Ok(self.matrix.t().dot(y))
    }
}

/// `s * A` for a positive scalar `s`; used to retarget measurement scales.
pub struct ScaledOp {
    inner: OpRef,
    factor: f64,
}

impl ScaledOp {
    pub fn new(inner: OpRef, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidInput(format!(
                "scale factor must be positive and finite, got {factor}"
            )));
        }
        Ok(Self { inner, factor })
    }
}

impl LinearOperator for ScaledOp {
    fn rows(&self) -> usize {
        self.inner.rows()
    }
    fn cols(&self) -> usize {
        self.inner.cols()
    }
    fn apply(&self, x: &DenseVector) -> Result<DenseVector> {
        Ok(self.inner.apply(x)? * self.factor)
    }
    fn adjoint_apply(&self, y: &DenseVector) -> Result<DenseVector> {
        Ok(self.inner.adjoint_apply(y)? * self.factor)
    }
}

/// Emission-tomography sensing operator: a projector followed by a fixed
/// per-ray gain `w * exp(-(G kappa)_n + c_n)` combining attenuation along the
/// ray and detector efficiency.
pub struct PetSensingOp {
    projector: OpRef,
    gains: DenseVector,
}

/// Composes the PET sensing operator from projector, attenuation map,
/// detector log-efficiencies, and count scale.
pub fn build_pet_sensing(
    projector: OpRef,
    attenuation: &DenseVector,
    detector_log_eff: &DenseVector,
    count_scale: f64,
) -> Result<PetSensingOp> {
    check_len("pet attenuation", projector.cols(), attenuation)?;
    check_len("pet detector efficiency", projector.rows(), detector_log_eff)?;
    ensure_finite("pet attenuation", attenuation)?;
    ensure_finite("pet detector efficiency", detector_log_eff)?;
    if !(count_scale.is_finite() && count_scale > 0.0) {
        return Err(Error::InvalidInput(format!(
            "count scale must be positive, got {count_scale}"
        )));
    }
    let optical_depth = projector.apply(attenuation)?;
    let gains = ndarray::Zip::from(&optical_depth)
        .and(detector_log_eff)
        .map_collect(|&d, &c| count_scale * (-d + c).exp());
    Ok(PetSensingOp { projector, gains })
}

impl LinearOperator for PetSensingOp {
    fn rows(&self) -> usize {
        self.projector.rows()
    }
    fn cols(&self) -> usize {
        self.projector.cols()
    }
    fn apply(&self, x: &DenseVector) -> Result<DenseVector> {
        Ok(self.projector.apply(x)? * &self.gains)
    }
    fn adjoint_apply(&self, y: &DenseVector) -> Result<DenseVector> {
        check_len("pet adjoint", self.rows(), y)?;
        self.projector.adjoint_apply(&(y * &self.gains))
    }
}

/// Dense sensing matrix with iid standard-normal entries, reproducible from
/// the seed (ChaCha8 stream).
pub fn gaussian_sensing(rows: usize, cols: usize, seed: u64) -> Result<DenseMatrixOp> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput(
            "sensing matrix needs positive dimensions".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix = Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal));
    DenseMatrixOp::new(matrix)
}

/// Power-iteration estimate of the squared spectral norm.
#[derive(Debug, Clone, Copy)]
pub struct SpectralNormEstimate {
    /// Estimated largest eigenvalue of `A^T A`.
    pub value: f64,
    pub iterations: usize,
    /// False when `max_iter` ran out before the relative change fell
    /// below `tol`; the value is then the best estimate so far.
    pub converged: bool,
}

/// Estimates `||A||_2^2` by power iteration on `A^T A`.
pub fn spectral_norm_sq(
    op: &dyn LinearOperator,
    tol: f64,
    max_iter: usize,
) -> Result<SpectralNormEstimate> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    // Fixed-seed start so estimates are reproducible; re-randomized if the
    // start happens to be orthogonal to the leading eigenvector.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: DenseVector =
        Array1::from_shape_fn(op.cols(), |_| rng.sample::<f64, _>(StandardNormal));
    let mut norm_v = v.dot(&v).sqrt();
    if norm_v == 0.0 {
        return Err(Error::InvalidInput("operator has zero columns".into()));
    }
    v /= norm_v;

    let mut lambda_prev = 0.0;
    for it in 1..=max_iter {
        let mut w = op.adjoint_apply(&op.apply(&v)?)?;
        let lambda = v.dot(&w);
        norm_v = w.dot(&w).sqrt();
        if norm_v == 0.0 {
            // v in the null space; restart from a fresh direction.
            w = Array1::from_shape_fn(op.cols(), |_| rng.sample::<f64, _>(StandardNormal));
            norm_v = w.dot(&w).sqrt();
            if norm_v == 0.0 {
                return Ok(SpectralNormEstimate {
                    value: 0.0,
                    iterations: it,
                    converged: true,
                });
            }
        }
        v = w / norm_v;
        if lambda > 0.0 && (lambda - lambda_prev).abs() <= tol * lambda {
            return Ok(SpectralNormEstimate {
                value: lambda,
                iterations: it,
                converged: true,
            });
        }
        lambda_prev = lambda;
    }
    Ok(SpectralNormEstimate {
        value: lambda_prev,
        iterations: max_iter,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DenseVector {
        Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal))
    }

    /// `<Ax, y> == <x, A^T y>` up to roundoff, on random probes.
    pub(crate) fn assert_adjoint_consistent(op: &dyn LinearOperator, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5 {
            let x = random_vector(&mut rng, op.cols());
            let y = random_vector(&mut rng, op.rows());
            let ax = op.apply(&x).unwrap();
            let aty = op.adjoint_apply(&y).unwrap();
            let lhs = ax.dot(&y);
            let rhs = x.dot(&aty);
            let scale = ax.dot(&ax).sqrt() * y.dot(&y).sqrt() + 1.0;
            assert!(
                (lhs - rhs).abs() <= 1e-10 * scale,
                "adjoint mismatch: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn identity_apply_round_trip() {
        let op = IdentityOp::new(2);
        let x = array![1.0, 2.0];
        assert_eq!(op.apply(&x).unwrap(), x);
        assert_eq!(op.adjoint_apply(&array![3.0, 4.0]).unwrap(), array![3.0, 4.0]);
    }

    #[test]
    fn dense_matrix_forward_and_adjoint() {
        let op = DenseMatrixOp::new(array![[1.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(op.apply(&array![1.0, 2.0]).unwrap(), array![1.0, 3.0]);
        assert_eq!(op.adjoint_apply(&array![1.0, 1.0]).unwrap(), array![2.0, 1.0]);
    }

    #[test]
    fn zero_matrix_annihilates() {
        let op = DenseMatrixOp::new(Array2::zeros((3, 2))).unwrap();
        assert_eq!(op.apply(&array![5.0, -7.0]).unwrap(), Array1::<f64>::zeros(3));
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let op = DenseMatrixOp::new(Array2::zeros((3, 2))).unwrap();
        assert!(matches!(
            op.apply(&Array1::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            op.adjoint_apply(&Array1::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn adjoint_identity_on_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = Array2::from_shape_fn((8, 5), |_| rng.sample::<f64, _>(StandardNormal));
        let op = DenseMatrixOp::new(m).unwrap();
        assert_adjoint_consistent(&op, 11);
    }

    #[test]
    fn dense_vector_rejects_non_finite() {
        assert!(dense_vector(vec![1.0, f64::NAN]).is_err());
        assert!(dense_vector(vec![1.0, f64::INFINITY]).is_err());
        assert!(dense_vector(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn gaussian_sensing_is_deterministic() {
        let a = gaussian_sensing(3, 4, 42).unwrap();
        let b = gaussian_sensing(3, 4, 42).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        let c = gaussian_sensing(3, 4, 43).unwrap();
        assert_ne!(a.matrix(), c.matrix());
        assert_adjoint_consistent(&a, 3);
    }

    #[test]
    fn gaussian_sensing_mean_is_near_zero() {
        // At N*p = 1e4 samples the mean of iid N(0,1) entries has
        // sd = 1e-2; allow 4/sqrt(12) as in a coarse uniform-ish bound.
        let op = gaussian_sensing(100, 100, 5).unwrap();
        let mean = op.matrix().sum() / 1e4;
        assert!(mean.abs() < 4.0 / 12f64.sqrt());
    }

    #[test]
    fn pet_sensing_reduces_to_projector_when_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = Array2::from_shape_fn((6, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let gamma: OpRef = Arc::new(DenseMatrixOp::new(m).unwrap());
        let phi = build_pet_sensing(
            Arc::clone(&gamma),
            &Array1::zeros(4),
            &Array1::zeros(6),
            1.0,
        )
        .unwrap();
        let x = random_vector(&mut rng, 4);
        let lhs = phi.apply(&x).unwrap();
        let rhs = gamma.apply(&x).unwrap();
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pet_sensing_constant_efficiency_scales() {
        let gamma: OpRef = Arc::new(IdentityOp::new(3));
        let c = Array1::from_elem(3, 2f64.ln());
        let phi = build_pet_sensing(gamma, &Array1::zeros(3), &c, 1.0).unwrap();
        let out = phi.apply(&array![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(out, array![2.0, 4.0, 6.0]);
    }

    #[test]
    fn pet_sensing_attenuation_only_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let m = Array2::from_shape_fn((6, 4), |x| {
            let _ = x;
            rng.random::<f64>()
        });
        let gamma: OpRef = Arc::new(DenseMatrixOp::new(m).unwrap());
        let kappa = Array1::from_shape_fn(4, |_| rng.random::<f64>());
        let c = Array1::from_shape_fn(6, |_| -rng.random::<f64>()); // c <= 0
        let phi = build_pet_sensing(Arc::clone(&gamma), &kappa, &c, 1.0).unwrap();
        let x = Array1::from_shape_fn(4, |_| rng.random::<f64>());
        let attenuated = phi.apply(&x).unwrap();
        let plain = gamma.apply(&x).unwrap();
        let c_max: f64 = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bound = c_max.exp() * plain.iter().cloned().fold(0.0, f64::max);
        let peak = attenuated.iter().cloned().fold(0.0, f64::max);
        assert!(peak <= bound + 1e-12);
    }

    #[test]
    fn spectral_norm_identity_and_diagonal() {
        let est = spectral_norm_sq(&IdentityOp::new(4), 1e-12, 200).unwrap();
        assert!((est.value - 1.0).abs() < 1e-9);

        let op = DenseMatrixOp::new(array![[3.0, 0.0], [0.0, 1.0]]).unwrap();
        let est = spectral_norm_sq(&op, 1e-13, 2000).unwrap();
        assert!((est.value - 9.0).abs() < 1e-6);
    }

    #[test]
    fn spectral_norm_flags_exhaustion() {
        let op = DenseMatrixOp::new(array![[3.0, 0.1], [0.2, 1.0]]).unwrap();
        let est = spectral_norm_sq(&op, 1e-16, 2).unwrap();
        assert!(!est.converged);
        assert!(est.value > 0.0);
    }
}
