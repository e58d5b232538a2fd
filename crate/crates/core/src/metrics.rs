//! Sample-quality metrics for the mixture experiment and the Fréchet
//! distance between Gaussians.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::squared_distance;
use crate::toygan::GaussianMixtureSpec;

/// Samples farther than this many standard deviations from their assigned
/// mode are not high quality.
pub const HIGH_QUALITY_SIGMAS: f64 = 4.0;

/// Eigenvalues down to this are treated as round-off and clipped to zero.
pub const PSD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub recovered_pct: f64,
    pub high_quality_pct: f64,
    pub per_mode_counts: Vec<usize>,
}

/// Index of the nearest mixture center for every sample (ties to the lower
/// index).
pub fn assign_to_modes(samples: &Array2<f64>, mixture: &GaussianMixtureSpec) -> Result<Vec<usize>> {
    Ok(assign_with_distance(samples.view(), mixture)?
        .into_iter()
        .map(|(mode, _)| mode)
        .collect())
}

fn assign_with_distance(
    samples: ArrayView2<'_, f64>,
    mixture: &GaussianMixtureSpec,
) -> Result<Vec<(usize, f64)>> {
    if samples.ncols() != 2 {
        return Err(Error::contract(format!(
            "samples must be 2-D, got {} columns",
            samples.ncols()
        )));
    }
    let centers: Vec<[f64; 2]> = mixture
        .centers()
        .rows()
        .into_iter()
        .map(|c| [c[0], c[1]])
        .collect();
    Ok(samples
        .rows()
        .into_iter()
        .map(|s| {
            let p = [s[0], s[1]];
            let mut best = (0, f64::INFINITY);
            for (j, c) in centers.iter().enumerate() {
                let d = squared_distance(&p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            (best.0, best.1.sqrt())
        })
        .collect())
}

/// Recovered-mode and high-quality-sample percentages.
pub fn mode_report(samples: &Array2<f64>, mixture: &GaussianMixtureSpec) -> Result<ModeReport> {
    if samples.nrows() == 0 {
        return Err(Error::contract("mode report needs at least one sample"));
    }
    let assigned = assign_with_distance(samples.view(), mixture)?;
    let threshold = HIGH_QUALITY_SIGMAS * mixture.sigma();
    let mut counts = vec![0usize; mixture.modes()];
    let mut high_quality = 0usize;
    for &(mode, dist) in &assigned {
        counts[mode] += 1;
        if dist <= threshold {
            high_quality += 1;
        }
    }
    let recovered = counts.iter().filter(|&&c| c > 0).count();
    Ok(ModeReport {
        recovered_pct: 100.0 * recovered as f64 / mixture.modes() as f64,
        high_quality_pct: 100.0 * high_quality as f64 / assigned.len() as f64,
        per_mode_counts: counts,
    })
}

/// Mean and covariance of a Gaussian in feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
}

impl GaussianStats {
    pub fn new(mean: Array1<f64>, cov: Array2<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.dim() != (d, d) {
            return Err(Error::contract(format!(
                "mean of length {d} needs a {d}x{d} covariance, got {:?}",
                cov.dim()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::contract("Gaussian statistics must be finite"));
        }
        for i in 0..d {
            for j in 0..i {
                if (cov[[i, j]] - cov[[j, i]]).abs() > 1e-9 {
                    return Err(Error::contract(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(GaussianStats { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased, symmetrized sample covariance (rows are
/// samples).
pub fn estimate_gaussian(samples: &Array2<f64>) -> Result<GaussianStats> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::contract(format!(
            "need at least 2 samples to estimate a covariance, got {n}"
        )));
    }
    let mean = samples
        .mean_axis(ndarray::Axis(0))
        .expect("nonempty sample");
    let centered = samples - &mean;
    let mut cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let sym = (&cov + &cov.t()) * 0.5;
    cov = sym;
    GaussianStats::new(mean, cov)
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Eigendecomposition of a symmetric matrix with small negative eigenvalues
/// clipped to zero; errors below `-PSD_TOLERANCE`.
fn psd_eigen(m: DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut values = eig.eigenvalues;
    for v in values.iter_mut() {
        if *v < -PSD_TOLERANCE {
            return Err(Error::NotPsd { eigenvalue: *v });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok((values, eig.eigenvectors))
}

fn psd_sqrt(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = psd_eigen(m)?;
    let root = DMatrix::from_diagonal(&values.map(f64::sqrt));
    Ok(&vectors * root * vectors.transpose())
}

/// `|m_a - m_b|^2 + tr(C_a + C_b - 2 (C_a C_b)^(1/2))`.
///
/// The trace of `(C_a C_b)^(1/2)` is taken as the trace of
/// `(C_a^(1/2) C_b C_a^(1/2))^(1/2)`, which is symmetric and has the same
/// eigenvalues.
pub fn gaussian_fid(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::contract(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let mean_term: f64 = a
        .mean
        .iter()
        .zip(b.mean.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();

    let ca = to_nalgebra(&a.cov);
    let cb = to_nalgebra(&b.cov);
    // Validates both inputs as PSD.
    psd_eigen(cb.clone())?;
    let ca_root = psd_sqrt(ca.clone())?;
    let inner = &ca_root * &cb * &ca_root;
    let (inner_values, _) = psd_eigen(inner)?;
    let cross_trace: f64 = inner_values.iter().map(|v| v.sqrt()).sum();

    let fid = mean_term + ca.trace() + cb.trace() - 2.0 * cross_trace;
    if fid < -PSD_TOLERANCE {
        return Err(Error::NotPsd { eigenvalue: fid });
    }
    Ok(fid.max(0.0))
}
