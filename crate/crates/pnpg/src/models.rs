//! Convex differentiable data-fidelity (negative log-likelihood) models.
//!
//! Three measurement models share one interface: Poisson counts with an
//! identity link (KL-divergence form, normalized so the minimum over the
//! mean is zero), the concentrated Poisson log-link model with unknown
//! intercept, and the Gaussian linear model. Values may be `+inf` outside
//! the Poisson identity-link domain; gradients fail there instead.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::operators::{check_len, ensure_finite, DenseVector, OpRef};

/// Data-fidelity term `L(x)` with value, gradient, and domain membership.
pub enum NllModel {
    /// Counts `y ~ Poisson(Phi x + b)`, `Phi >= 0`, `b >= 0`.
    PoissonIdentity {
        phi: OpRef,
        y: DenseVector,
        intercept: DenseVector,
    },
    /// Log-link Poisson with the intercept profiled out:
    /// `L(x) = (1'y) ln(1' exp(-Phi x)) + y' Phi x`.
    PoissonLogConcentrated { phi: OpRef, y: DenseVector },
    /// `L(x) = 0.5 ||y - Phi x||^2`.
    GaussianLinear { phi: OpRef, y: DenseVector },
}

impl NllModel {
    pub fn poisson_identity(phi: OpRef, y: DenseVector, intercept: DenseVector) -> Result<Self> {
        check_len("poisson counts", phi.rows(), &y)?;
        check_len("poisson intercept", phi.rows(), &intercept)?;
        ensure_finite("poisson counts", &y)?;
        ensure_finite("poisson intercept", &intercept)?;
        if y.iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
            return Err(Error::InvalidInput(
                "poisson counts must be nonnegative integers".into(),
            ));
        }
        if intercept.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput(
                "poisson intercept must be nonnegative".into(),
            ));
        }
        Ok(NllModel::PoissonIdentity { phi, y, intercept })
    }

    pub fn poisson_log_concentrated(phi: OpRef, y: DenseVector) -> Result<Self> {
        check_len("poisson counts", phi.rows(), &y)?;
        ensure_finite("poisson counts", &y)?;
        if y.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput(
                "poisson counts must be nonnegative".into(),
            ));
        }
        Ok(NllModel::PoissonLogConcentrated { phi, y })
    }

    pub fn gaussian_linear(phi: OpRef, y: DenseVector) -> Result<Self> {
        check_len("gaussian measurements", phi.rows(), &y)?;
        ensure_finite("gaussian measurements", &y)?;
        Ok(NllModel::GaussianLinear { phi, y })
    }

    /// Signal dimension `p`.
    pub fn signal_len(&self) -> usize {
        self.op().cols()
    }

    /// Measurement dimension `N`.
    pub fn measurement_len(&self) -> usize {
        self.op().rows()
    }

    pub fn op(&self) -> &OpRef {
        match self {
            NllModel::PoissonIdentity { phi, .. }
            | NllModel::PoissonLogConcentrated { phi, .. }
            | NllModel::GaussianLinear { phi, .. } => phi,
        }
    }

    /// `L(x)`; `+inf` outside the domain of the Poisson identity-link model.
    pub fn value(&self, x: &DenseVector) -> Result<f64> {
        check_len("nll value", self.signal_len(), x)?;
        match self {
            NllModel::PoissonIdentity { phi, y, intercept } => {
                let mean = phi.apply(x)? + intercept;
                let mut acc = 0.0;
                for (&m, &yn) in mean.iter().zip(y.iter()) {
                    if m < 0.0 || (m == 0.0 && yn > 0.0) {
                        return Ok(f64::INFINITY);
                    }
                    acc += m - yn;
                    if yn > 0.0 {
                        acc += yn * (yn / m).ln();
                    }
                }
                Ok(acc)
            }
            NllModel::PoissonLogConcentrated { phi, y } => {
                let z = phi.apply(x)?;
                let total: f64 = y.sum();
                Ok(total * log_sum_exp_neg(&z) + y.dot(&z))
            }
            NllModel::GaussianLinear { phi, y } => {
                let r = phi.apply(x)? - y;
                Ok(0.5 * r.dot(&r))
            }
        }
    }

    /// `grad L(x)`; fails with a domain error where the gradient is
    /// undefined (Poisson identity link with a zero mean at a positive
    /// count).
    pub fn gradient(&self, x: &DenseVector) -> Result<DenseVector> {
        check_len("nll gradient", self.signal_len(), x)?;
        match self {
            NllModel::PoissonIdentity { phi, y, intercept } => {
                let mean = phi.apply(x)? + intercept;
                let mut factor = Array1::zeros(mean.len());
                for (i, (&m, &yn)) in mean.iter().zip(y.iter()).enumerate() {
                    if yn > 0.0 {
                        if m <= 0.0 {
                            return Err(Error::DomainViolation(
                                "poisson gradient undefined: zero mean at positive count".into(),
                            ));
                        }
                        factor[i] = 1.0 - yn / m;
                    } else {
                        factor[i] = 1.0;
                    }
                }
                phi.adjoint_apply(&factor)
            }
            NllModel::PoissonLogConcentrated { phi, y } => {
                let z = phi.apply(x)?;
                let total: f64 = y.sum();
                let weights = softmax_neg(&z);
                phi.adjoint_apply(&(y - &(weights * total)))
            }
            NllModel::GaussianLinear { phi, y } => {
                let r = phi.apply(x)? - y;
                phi.adjoint_apply(&r)
            }
        }
    }

    /// True iff both the value is finite and the gradient exists at `x`.
    pub fn in_domain(&self, x: &DenseVector) -> bool {
        assert_eq!(x.len(), self.signal_len(), "in_domain dimension mismatch");
        match self {
            NllModel::PoissonIdentity { phi, y, intercept } => {
                let mean = match phi.apply(x) {
                    Ok(m) => m + intercept,
                    Err(_) => return false,
                };
                mean.iter()
                    .zip(y.iter())
                    .all(|(&m, &yn)| m >= 0.0 && (yn == 0.0 || m > 0.0))
            }
            _ => true,
        }
    }
}

/// `ln sum_n exp(-z_n)` with max-subtraction so large `||z||_inf` stays
/// finite.
fn log_sum_exp_neg(z: &DenseVector) -> f64 {
    let m = z.iter().cloned().fold(f64::INFINITY, f64::min); // max of -z
    let sum: f64 = z.iter().map(|&v| (m - v).exp()).sum();
    -m + sum.ln()
}

/// `exp(-z) / 1' exp(-z)` computed stably.
fn softmax_neg(z: &DenseVector) -> DenseVector {
    let m = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w: DenseVector = z.mapv(|v| (m - v).exp());
    let total = w.sum();
    w /= total;
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{DenseMatrixOp, IdentityOp};
    use ndarray::{array, Array2};
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::sync::Arc;

    fn random_model(kind: usize, seed: u64) -> (NllModel, DenseVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, p) = (8, 6);
        match kind {
            0 => {
                // Nonnegative sensing, strictly positive intercept.
                let m = Array2::from_shape_fn((n, p), |_| rng.random::<f64>());
                let phi: OpRef = Arc::new(DenseMatrixOp::new(m).unwrap());
                let y = Array1::from_shape_fn(n, |_| rng.random_range(0..7) as f64);
                let b = Array1::from_elem(n, 0.3);
                let x = Array1::from_shape_fn(p, |_| 0.5 + rng.random::<f64>());
                (NllModel::poisson_identity(phi, y, b).unwrap(), x)
            }
            1 => {
                let m = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
                let phi: OpRef = Arc::new(DenseMatrixOp::new(m).unwrap());
                let y = Array1::from_shape_fn(n, |_| rng.random_range(0..7) as f64);
                let x = Array1::from_shape_fn(p, |_| rng.sample::<f64, _>(StandardNormal));
                (NllModel::poisson_log_concentrated(phi, y).unwrap(), x)
            }
            _ => {
                let m = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
                let phi: OpRef = Arc::new(DenseMatrixOp::new(m).unwrap());
                let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
                let x = Array1::from_shape_fn(p, |_| rng.sample::<f64, _>(StandardNormal));
                (NllModel::gaussian_linear(phi, y).unwrap(), x)
            }
        }
    }

    /// Central finite differences, step scaled to the point.
    fn fd_gradient(model: &NllModel, x: &DenseVector) -> DenseVector {
        let h = 1e-5 * (1.0 + x.iter().cloned().fold(0.0, |a: f64, b| a.max(b.abs())));
        let mut g = Array1::zeros(x.len());
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            g[i] = (model.value(&xp).unwrap() - model.value(&xm).unwrap()) / (2.0 * h);
        }
        g
    }

    #[test]
    fn poisson_identity_zero_at_equality() {
        // mean == counts makes the KL form vanish.
        let phi: OpRef = Arc::new(IdentityOp::new(3));
        let y = array![2.0, 0.0, 5.0];
        let model = NllModel::poisson_identity(phi, y.clone(), Array1::zeros(3)).unwrap();
        assert!(model.value(&y).unwrap().abs() < 1e-14);
        let g = model.gradient(&array![2.0, 1.0, 5.0]).unwrap();
        assert!(g[0].abs() < 1e-14 && g[2].abs() < 1e-14);
    }

    #[test]
    fn poisson_identity_scalar_value() {
        let phi: OpRef = Arc::new(IdentityOp::new(1));
        let model =
            NllModel::poisson_identity(phi, array![1.0], Array1::zeros(1)).unwrap();
        let v = model.value(&array![2.0]).unwrap();
        assert!((v - (1.0 + (0.5f64).ln())).abs() < 1e-12);
        assert!((v - 0.30685).abs() < 1e-5);
    }

    #[test]
    fn poisson_identity_infinite_outside_domain() {
        let phi: OpRef = Arc::new(IdentityOp::new(2));
        let model =
            NllModel::poisson_identity(phi, array![1.0, 0.0], Array1::zeros(2)).unwrap();
        assert!(model.value(&array![-0.5, 1.0]).unwrap().is_infinite());
        assert!(model.value(&array![0.0, 1.0]).unwrap().is_infinite());
        // Zero mean at zero count is fine.
        assert!(model.value(&array![1.0, 0.0]).unwrap().is_finite());
        assert!(matches!(
            model.gradient(&array![0.0, 1.0]),
            Err(Error::DomainViolation(_))
        ));
    }

    #[test]
    fn poisson_identity_nonnegative_value() {
        let (model, _) = random_model(0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let x = Array1::from_shape_fn(6, |_| rng.random::<f64>() * 2.0);
            let v = model.value(&x).unwrap();
            assert!(v >= -1e-12, "KL-form value should be nonnegative, got {v}");
        }
    }

    #[test]
    fn concentrated_value_at_zero() {
        let (model, _) = random_model(1, 9);
        let n = model.measurement_len() as f64;
        let total = match &model {
            NllModel::PoissonLogConcentrated { y, .. } => y.sum(),
            _ => unreachable!(),
        };
        let v = model.value(&Array1::zeros(model.signal_len())).unwrap();
        assert!((v - total * n.ln()).abs() < 1e-10);
    }

    #[test]
    fn concentrated_is_overflow_safe() {
        // ||Phi x||_inf up to 700 must stay finite.
        let phi: OpRef = Arc::new(IdentityOp::new(4));
        let model =
            NllModel::poisson_log_concentrated(phi, array![1.0, 2.0, 0.0, 3.0]).unwrap();
        for scale in [100.0, 400.0, 700.0] {
            let x = array![scale, -scale, scale / 2.0, -scale / 3.0];
            assert!(model.value(&x).unwrap().is_finite());
            assert!(model.gradient(&x).unwrap().iter().all(|g| g.is_finite()));
        }
    }

    #[test]
    fn gaussian_gradient_zero_at_fit() {
        let (model, x) = random_model(2, 11);
        let y_fit = model.op().apply(&x).unwrap();
        let exact = NllModel::gaussian_linear(Arc::clone(model.op()), y_fit).unwrap();
        let g = exact.gradient(&x).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for kind in 0..3 {
            for trial in 0..100 {
                let (model, x) = random_model(kind, 100 * kind as u64 + trial);
                let g = model.gradient(&x).unwrap();
                let fd = fd_gradient(&model, &x);
                let diff = (&g - &fd).mapv(|e| e * e).sum().sqrt();
                let scale = g.mapv(|e| e * e).sum().sqrt().max(1e-8);
                assert!(
                    diff / scale < 1e-6,
                    "kind {kind} trial {trial}: fd mismatch {}",
                    diff / scale
                );
            }
        }
    }

    #[test]
    fn convexity_probe() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for kind in 0..3 {
            for trial in 0..20 {
                let (model, x1) = random_model(kind, 500 + 10 * kind as u64 + trial);
                let (_, x2) = random_model(kind, 900 + 10 * kind as u64 + trial);
                let t: f64 = rng.random();
                let xm = &x1 * t + &x2 * (1.0 - t);
                let lhs = model.value(&xm).unwrap();
                let rhs =
                    t * model.value(&x1).unwrap() + (1.0 - t) * model.value(&x2).unwrap();
                assert!(lhs <= rhs + 1e-9, "convexity violated: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn domain_membership() {
        let (gauss, x) = random_model(2, 1);
        assert!(gauss.in_domain(&x));

        let phi: OpRef = Arc::new(IdentityOp::new(2));
        let no_intercept = NllModel::poisson_identity(
            Arc::clone(&phi),
            array![1.0, 0.0],
            Array1::zeros(2),
        )
        .unwrap();
        assert!(!no_intercept.in_domain(&Array1::zeros(2)));
        let with_intercept =
            NllModel::poisson_identity(phi, array![1.0, 0.0], Array1::from_elem(2, 0.1))
                .unwrap();
        assert!(with_intercept.in_domain(&Array1::zeros(2)));
    }

    #[test]
    fn construction_validates_counts() {
        let phi: OpRef = Arc::new(IdentityOp::new(2));
        assert!(NllModel::poisson_identity(
            Arc::clone(&phi),
            array![1.5, 0.0],
            Array1::zeros(2)
        )
        .is_err());
        assert!(NllModel::poisson_identity(
            Arc::clone(&phi),
            array![-1.0, 0.0],
            Array1::zeros(2)
        )
        .is_err());
        assert!(NllModel::poisson_identity(
            phi,
            array![1.0, 0.0],
            array![-0.1, 0.0]
        )
        .is_err());
    }
}
