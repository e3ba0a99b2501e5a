//! Orthonormal discrete wavelet transforms with periodic boundaries.
//!
//! The analysis/synthesis pair acts as the sparsifying dictionary: analysis
//! plays the role of `Psi^T`, synthesis of `Psi`, and the periodic
//! construction keeps the rows of `Psi` exactly orthonormal, which the
//! ADMM proximal step relies on.

use std::sync::Arc;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::operators::{check_len, DenseVector, LinearOperator, OpRef};

const SQRT2_INV: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Supported orthogonal filter families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveletFamily {
    Haar,
    Daubechies4,
}

impl WaveletFamily {
    /// Low-pass decomposition filter.
    fn lowpass(self) -> &'static [f64] {
        const HAAR: [f64; 2] = [SQRT2_INV, SQRT2_INV];
        // (1 +/- sqrt3) taps normalized by 4*sqrt2.
        const DB4: [f64; 4] = [
            0.48296291314453416,
            0.8365163037378079,
            0.2241438680420134,
            -0.12940952255126037,
        ];
        match self {
            WaveletFamily::Haar => &HAAR,
            WaveletFamily::Daubechies4 => &DB4,
        }
    }
}

/// Signal arrangement the transform acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveletLayout {
    /// Chain of `len` samples.
    OneD { len: usize },
    /// Square `side x side` grid, flattened row-major.
    TwoDSquare { side: usize },
}

/// Family, decomposition depth, and layout of a multilevel DWT.
#[derive(Debug, Clone, Copy)]
pub struct WaveletSpec {
    pub family: WaveletFamily,
    pub levels: usize,
    pub layout: WaveletLayout,
}

impl WaveletSpec {
    pub fn one_d(family: WaveletFamily, levels: usize, len: usize) -> Result<Self> {
        let spec = Self {
            family,
            levels,
            layout: WaveletLayout::OneD { len },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn two_d(family: WaveletFamily, levels: usize, side: usize) -> Result<Self> {
        let spec = Self {
            family,
            levels,
            layout: WaveletLayout::TwoDSquare { side },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Total signal length the transform expects.
    pub fn signal_len(&self) -> usize {
        match self.layout {
            WaveletLayout::OneD { len } => len,
            WaveletLayout::TwoDSquare { side } => side * side,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidInput(
                "wavelet levels must be at least 1".into(),
            ));
        }
        let axis_len = match self.layout {
            WaveletLayout::OneD { len } => len,
            WaveletLayout::TwoDSquare { side } => side,
        };
        let block = 1usize << self.levels;
        if axis_len == 0 || axis_len % block != 0 {
            return Err(Error::InvalidInput(format!(
                "axis length {axis_len} not divisible by 2^levels = {block}"
            )));
        }
        Ok(())
    }
}

/// Quadrature-mirror high-pass tap: `g[m] = (-1)^m h[L-1-m]`.
fn highpass_tap(h: &[f64], m: usize) -> f64 {
    let mirrored = h[h.len() - 1 - m];
    if m % 2 == 0 {
        mirrored
    } else {
        -mirrored
    }
}

/// One analysis level on `x[..n]` with periodic extension; approximation
/// lands in `out[..n/2]`, detail in `out[n/2..n]`.
fn analyze_level(h: &[f64], x: &[f64], out: &mut [f64], n: usize) {
    let half = n / 2;
    for k in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for (m, &hm) in h.iter().enumerate() {
            let idx = (2 * k + m) % n;
            a += hm * x[idx];
            d += highpass_tap(h, m) * x[idx];
        }
        out[k] = a;
        out[half + k] = d;
    }
}

/// Inverse of [`analyze_level`].
fn synthesize_level(h: &[f64], coeffs: &[f64], out: &mut [f64], n: usize) {
    let half = n / 2;
    out[..n].fill(0.0);
    for k in 0..half {
        let a = coeffs[k];
        let d = coeffs[half + k];
        for (m, &hm) in h.iter().enumerate() {
            let idx = (2 * k + m) % n;
            out[idx] += hm * a + highpass_tap(h, m) * d;
        }
    }
}

fn forward_1d(h: &[f64], data: &mut [f64], levels: usize) {
    let mut n = data.len();
    let mut scratch = vec![0.0; n];
    for _ in 0..levels {
        analyze_level(h, data, &mut scratch, n);
        data[..n].copy_from_slice(&scratch[..n]);
        n /= 2;
    }
}

fn inverse_1d(h: &[f64], data: &mut [f64], levels: usize) {
    let full = data.len();
    let mut scratch = vec![0.0; full];
    let mut n = full >> (levels - 1);
    for _ in 0..levels {
        synthesize_level(h, data, &mut scratch, n);
        data[..n].copy_from_slice(&scratch[..n]);
        n *= 2;
    }
}

fn forward_2d(h: &[f64], data: &mut [f64], side: usize, levels: usize) {
    let mut s = side;
    let mut row = vec![0.0; side];
    let mut scratch = vec![0.0; side];
    for _ in 0..levels {
        // Rows of the current approximation block.
        for r in 0..s {
            row[..s].copy_from_slice(&data[r * side..r * side + s]);
            analyze_level(h, &row, &mut scratch, s);
            data[r * side..r * side + s].copy_from_slice(&scratch[..s]);
        }
        // Columns.
        for c in 0..s {
            for r in 0..s {
                row[r] = data[r * side + c];
            }
            analyze_level(h, &row, &mut scratch, s);
            for r in 0..s {
                data[r * side + c] = scratch[r];
            }
        }
        s /= 2;
    }
}

fn inverse_2d(h: &[f64], data: &mut [f64], side: usize, levels: usize) {
    let mut s = side >> (levels - 1);
    let mut row = vec![0.0; side];
    let mut scratch = vec![0.0; side];
    for _ in 0..levels {
        for c in 0..s {
            for r in 0..s {
                row[r] = data[r * side + c];
            }
            synthesize_level(h, &row, &mut scratch, s);
            for r in 0..s {
                data[r * side + c] = scratch[r];
            }
        }
        for r in 0..s {
            row[..s].copy_from_slice(&data[r * side..r * side + s]);
            synthesize_level(h, &row, &mut scratch, s);
            data[r * side..r * side + s].copy_from_slice(&scratch[..s]);
        }
        s *= 2;
    }
}

/// Multilevel analysis transform (Mallat ordering, approximation block first).
pub fn dwt_forward(spec: &WaveletSpec, x: &DenseVector) -> Result<DenseVector> {
    check_len("dwt_forward", spec.signal_len(), x)?;
    let h = spec.family.lowpass();
    let mut data = x.to_vec();
    match spec.layout {
        WaveletLayout::OneD { .. } => forward_1d(h, &mut data, spec.levels),
        WaveletLayout::TwoDSquare { side } => forward_2d(h, &mut data, side, spec.levels),
    }
    Ok(Array1::from_vec(data))
}

/// Multilevel synthesis transform, exact inverse of [`dwt_forward`].
pub fn dwt_inverse(spec: &WaveletSpec, coeffs: &DenseVector) -> Result<DenseVector> {
    check_len("dwt_inverse", spec.signal_len(), coeffs)?;
    let h = spec.family.lowpass();
    let mut data = coeffs.to_vec();
    match spec.layout {
        WaveletLayout::OneD { .. } => inverse_1d(h, &mut data, spec.levels),
        WaveletLayout::TwoDSquare { side } => inverse_2d(h, &mut data, side, spec.levels),
    }
    Ok(Array1::from_vec(data))
}

/// The dictionary `Psi` as an operator: `apply` synthesizes coefficients into
/// a signal, `adjoint_apply` analyzes a signal into coefficients.
pub struct WaveletSynthesisOp {
    spec: WaveletSpec,
}

impl WaveletSynthesisOp {
    pub fn new(spec: WaveletSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &WaveletSpec {
        &self.spec
    }

    pub fn shared(spec: WaveletSpec) -> OpRef {
        Arc::new(Self::new(spec))
    }
}

impl LinearOperator for WaveletSynthesisOp {
    fn rows(&self) -> usize {
        self.spec.signal_len()
    }
    fn cols(&self) -> usize {
        self.spec.signal_len()
    }
    fn apply(&self, coeffs: &DenseVector) -> Result<DenseVector> {
        dwt_inverse(&self.spec, coeffs)
    }
    fn adjoint_apply(&self, x: &DenseVector) -> Result<DenseVector> {
        dwt_forward(&self.spec, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_vector(seed: u64, n: usize) -> DenseVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn haar_constant_signal_has_zero_detail() {
        let spec = WaveletSpec::one_d(WaveletFamily::Haar, 1, 2).unwrap();
        let w = dwt_forward(&spec, &ndarray::array![1.0, 1.0]).unwrap();
        assert!((w[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(w[1].abs() < 1e-15);
    }

    #[test]
    fn haar_pure_detail() {
        let spec = WaveletSpec::one_d(WaveletFamily::Haar, 1, 2).unwrap();
        let w = dwt_forward(&spec, &ndarray::array![1.0, -1.0]).unwrap();
        assert!(w[0].abs() < 1e-15);
        assert!((w[1] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn db4_round_trip_long_signal() {
        let spec = WaveletSpec::one_d(WaveletFamily::Daubechies4, 3, 1024).unwrap();
        let x = random_vector(1, 1024);
        let w = dwt_forward(&spec, &x).unwrap();
        let back = dwt_inverse(&spec, &w).unwrap();
        let err = (&back - &x).mapv(|e| e * e).sum().sqrt();
        assert!(err < 1e-10, "round-trip error {err}");
    }

    #[test]
    fn transforms_preserve_norm() {
        for (family, levels, len) in [
            (WaveletFamily::Haar, 4, 64),
            (WaveletFamily::Daubechies4, 2, 64),
            (WaveletFamily::Daubechies4, 3, 256),
        ] {
            let spec = WaveletSpec::one_d(family, levels, len).unwrap();
            let x = random_vector(len as u64, len);
            let w = dwt_forward(&spec, &x).unwrap();
            let nx = x.dot(&x).sqrt();
            let nw = w.dot(&w).sqrt();
            assert!((nx - nw).abs() <= 1e-10 * nx, "{family:?} norm drift");
        }
    }

    #[test]
    fn two_d_round_trip_and_norm() {
        for levels in [1, 3, 5] {
            let spec = WaveletSpec::two_d(WaveletFamily::Haar, levels, 32).unwrap();
            let x = random_vector(100 + levels as u64, 32 * 32);
            let w = dwt_forward(&spec, &x).unwrap();
            let back = dwt_inverse(&spec, &w).unwrap();
            let err = (&back - &x).mapv(|e| e * e).sum().sqrt();
            assert!(err < 1e-10);
            assert!((w.dot(&w).sqrt() - x.dot(&x).sqrt()).abs() < 1e-10 * x.dot(&x).sqrt());
        }
    }

    #[test]
    fn synthesis_operator_rows_are_orthonormal() {
        // Psi Psi^T v = synth(analyze(v)) = v for the square transform.
        let spec = WaveletSpec::two_d(WaveletFamily::Daubechies4, 2, 16).unwrap();
        let op = WaveletSynthesisOp::new(spec);
        let v = random_vector(9, 256);
        let round = op.apply(&op.adjoint_apply(&v).unwrap()).unwrap();
        let err = (&round - &v).mapv(|e| e * e).sum().sqrt();
        assert!(err <= 1e-10 * v.dot(&v).sqrt());
    }

    #[test]
    fn incompatible_length_rejected() {
        assert!(WaveletSpec::one_d(WaveletFamily::Haar, 3, 12).is_err());
        let spec = WaveletSpec::one_d(WaveletFamily::Haar, 1, 8).unwrap();
        assert!(dwt_forward(&spec, &Array1::zeros(6)).is_err());
    }

    #[test]
    fn mallat_ordering_puts_approximation_first() {
        // Constant signal: all energy must sit in coefficient 0 after a
        // full decomposition.
        let spec = WaveletSpec::one_d(WaveletFamily::Haar, 3, 8).unwrap();
        let w = dwt_forward(&spec, &Array1::from_elem(8, 1.0)).unwrap();
        assert!((w[0] - 8f64.sqrt()).abs() < 1e-12);
        for k in 1..8 {
            assert!(w[k].abs() < 1e-12);
        }
    }
}
