//! Test signals, phantoms, and measurement simulation.

use std::sync::Arc;

use ndarray::Array1;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::operators::{DenseVector, OpRef, ScaledOp};

/// Deterministic sub-stream seed so one experiment seed can feed several
/// independent draws (splitmix64 finalizer).
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Nonnegative "skyline" test signal of length `p`: a sum of shifted and
/// magnified rectangle, triangle, sinusoid-bump, and parabola-bump pieces.
/// Deterministic in `p`; the shape constants are fixed so that the top 5%
/// of 3-level Daubechies-4 coefficients carry at least 98% of the energy.
pub fn gen_skyline(p: usize) -> Result<DenseVector> {
    if p < 64 || !p.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "skyline length must be a power of two >= 64, got {p}"
        )));
    }
    let mut x = Array1::zeros(p);
    let scale = p as f64;
    let at = |t: f64| (t * scale) as usize;
    let mut rect = |lo: f64, hi: f64, h: f64, x: &mut Array1<f64>| {
        for i in at(lo)..at(hi) {
            x[i] += h;
        }
    };
    let mut triangle = |lo: f64, peak: f64, hi: f64, h: f64, x: &mut Array1<f64>| {
        for i in at(lo)..at(hi) {
            let t = i as f64 / scale;
            let frac = if t < peak {
                (t - lo) / (peak - lo)
            } else {
                (hi - t) / (hi - peak)
            };
            x[i] += h * frac;
        }
    };

    // Overlapping rectangles form the staircase base.
    rect(0.05, 0.13, 1.6, &mut x);
    rect(0.11, 0.17, 0.9, &mut x);
    rect(0.82, 0.90, 1.2, &mut x);
    // Two triangles, one overlapping the staircase.
    triangle(0.15, 0.20, 0.28, 3.0, &mut x);
    triangle(0.55, 0.58, 0.64, 1.4, &mut x);
    // Oscillating sinusoid band: shifted/magnified sine periods that give
    // the signal a broadband wavelet tail.
    for i in at(0.30)..at(0.50) {
        let t = i as f64 / scale;
        x[i] += 0.7 * (1.0 - (2.0 * std::f64::consts::PI * (t - 0.30) / 0.04).cos());
    }
    // Single half-period sinusoid bump.
    for i in at(0.66)..at(0.74) {
        let t = i as f64 / scale;
        x[i] += 2.2 * (std::f64::consts::PI * (t - 0.66) / 0.08).sin().max(0.0);
    }
    // Downward parabola bump.
    for i in at(0.74)..at(0.82) {
        let t = i as f64 / scale;
        let s = (t - 0.78) / 0.04;
        x[i] += 2.4 * (1.0 - s * s).max(0.0);
    }
    Ok(x)
}

/// Axis-aligned ellipse in normalized coordinates (centered grid, unit
/// half-width).
struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    activity: f64,
    attenuation: f64,
}

/// Piecewise-constant ellipse phantom: activity (emission) and attenuation
/// maps on a `grid_n x grid_n` grid. The tumor position and lung sizes are
/// jittered deterministically from the seed; activity is zero outside the
/// body ellipse.
pub fn gen_pet_phantom(grid_n: usize, seed: u64) -> Result<(DenseVector, DenseVector)> {
    if !matches!(grid_n, 32 | 64 | 128) {
        return Err(Error::InvalidInput(format!(
            "phantom grid must be 32, 64, or 128, got {grid_n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 11));
    let jx = 0.06 * (rng.random::<f64>() - 0.5);
    let jy = 0.06 * (rng.random::<f64>() - 0.5);
    let lung_scale = 0.9 + 0.2 * rng.random::<f64>();

    // Painted in order; later shapes overwrite earlier ones inside their
    // support.
    let shapes = [
        // Body.
        Ellipse {
            cx: 0.0,
            cy: 0.0,
            rx: 0.84,
            ry: 0.66,
            activity: 1.0,
            attenuation: 0.020,
        },
        // Lungs: low activity, low attenuation.
        Ellipse {
            cx: -0.33,
            cy: -0.08,
            rx: 0.26 * lung_scale,
            ry: 0.38 * lung_scale,
            activity: 0.25,
            attenuation: 0.004,
        },
        Ellipse {
            cx: 0.33,
            cy: -0.08,
            rx: 0.26 * lung_scale,
            ry: 0.38 * lung_scale,
            activity: 0.25,
            attenuation: 0.004,
        },
        // Spine: dense, moderate activity.
        Ellipse {
            cx: 0.0,
            cy: -0.5,
            rx: 0.12,
            ry: 0.1,
            activity: 0.4,
            attenuation: 0.055,
        },
        // Hot lesion.
        Ellipse {
            cx: 0.36 + jx,
            cy: 0.26 + jy,
            rx: 0.12,
            ry: 0.12,
            activity: 3.0,
            attenuation: 0.020,
        },
    ];

    let n = grid_n;
    let mut activity = Array1::zeros(n * n);
    let mut attenuation = Array1::zeros(n * n);
    for row in 0..n {
        for col in 0..n {
            // Pixel center in [-1, 1]^2.
            let px = (col as f64 + 0.5) / n as f64 * 2.0 - 1.0;
            let py = (row as f64 + 0.5) / n as f64 * 2.0 - 1.0;
            for e in &shapes {
                let dx = (px - e.cx) / e.rx;
                let dy = (py - e.cy) / e.ry;
                if dx * dx + dy * dy <= 1.0 {
                    activity[row * n + col] = e.activity;
                    attenuation[row * n + col] = e.attenuation;
                }
            }
        }
    }
    Ok((activity, attenuation))
}

/// Simulated Poisson measurement: counts, the rescaled sensing operator,
/// and the intercept that was added.
pub struct PoissonSim {
    pub y: DenseVector,
    pub phi: OpRef,
    pub intercept: DenseVector,
}

/// Rescales `phi` so the expected signal counts `1'Phi x` hit
/// `target_counts`, sets the intercept to 10% of the per-ray mean, and
/// draws Poisson counts.
pub fn simulate_poisson(
    phi: OpRef,
    x: &DenseVector,
    target_counts: f64,
    seed: u64,
) -> Result<PoissonSim> {
    let mean0 = phi.apply(x)?;
    if mean0.iter().any(|&m| m < 0.0) {
        return Err(Error::InvalidInput(
            "poisson simulation requires nonnegative means".into(),
        ));
    }
    if !(target_counts >= 0.0) {
        return Err(Error::InvalidInput("target counts must be nonnegative".into()));
    }
    let total0: f64 = mean0.sum();
    let n = phi.rows();

    let (phi_out, signal_mean): (OpRef, DenseVector) = if total0 > 0.0 && target_counts > 0.0 {
        let s = target_counts / total0;
        (Arc::new(ScaledOp::new(Arc::clone(&phi), s)?), mean0 * s)
    } else {
        (phi, mean0)
    };
    let achieved: f64 = signal_mean.sum();
    let intercept_level = achieved / (10.0 * n as f64);
    let intercept = Array1::from_elem(n, intercept_level);

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 17));
    let mut y = Array1::zeros(n);
    for (i, &m) in signal_mean.iter().enumerate() {
        let lambda = m + intercept_level;
        y[i] = if lambda > 0.0 {
            Poisson::new(lambda)
                .map_err(|e| Error::InvalidInput(format!("poisson rate {lambda}: {e}")))?
                .sample(&mut rng)
        } else {
            0.0
        };
    }
    Ok(PoissonSim {
        y,
        phi: phi_out,
        intercept,
    })
}

/// `y = Phi x`, exactly.
pub fn simulate_gaussian_noiseless(phi: &OpRef, x: &DenseVector) -> Result<DenseVector> {
    phi.apply(x)
}

/// Detector log-efficiency draw: zero-mean iid Gaussian with variance 0.3.
pub fn detector_log_efficiency(n: usize, seed: u64) -> DenseVector {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 29));
    let normal = Normal::new(0.0, 0.3f64.sqrt()).expect("valid std");
    Array1::from_shape_fn(n, |_| normal.sample(&mut rng))
}

/// Relative squared error `||x_hat - x_true||^2 / ||x_true||^2`.
pub fn rse(x_hat: &DenseVector, x_true: &DenseVector) -> Result<f64> {
    if x_hat.len() != x_true.len() {
        return Err(Error::dim("rse", x_true.len(), x_hat.len()));
    }
    let denom = x_true.dot(x_true);
    if denom == 0.0 {
        return Err(Error::InvalidInput("rse needs a nonzero reference".into()));
    }
    let diff = x_hat - x_true;
    Ok(diff.dot(&diff) / denom)
}
